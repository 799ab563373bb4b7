//! Geohash-tiled spatial index over the road inventory, plus the per-route
//! linear referencing data (mile markers and a reference centerline).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::geo::{
    geohash_encode, geohash_neighbors, great_circle_distance, point_to_polyline, Bounds,
    Coordinate, GeohashId, Polyline, METERS_PER_DEGREE,
};
use crate::matching::MatchThresholds;

use super::{MileMarker, PostRange, RoadSegment, RouteRef};

pub const MIN_INDEX_PRECISION: usize = 4;
pub const MAX_INDEX_PRECISION: usize = 7;
pub const DEFAULT_INDEX_PRECISION: usize = 5;

/// Segment endpoints closer than this are joined when assembling a route
/// centerline.
const CHAIN_JOIN_TOLERANCE_M: f64 = 5.0;

/// Markers and segment vertices farther than this from their route's
/// centerline are not used for linear referencing.
const MAX_REFERENCE_OFFSET_M: f64 = 500.0;

/// One geohash cell and the segments registered in it.
#[derive(Debug, Clone)]
pub struct GeohashTile {
    pub id: GeohashId,
    /// sorted, unique
    pub segments: Vec<String>,
    members: Vec<usize>,
}

impl PartialEq for GeohashTile {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.segments == other.segments
    }
}

impl GeohashTile {
    pub fn new(id: GeohashId, mut segments: Vec<String>) -> Self {
        segments.sort();
        segments.dedup();
        GeohashTile {
            id,
            segments,
            members: Vec::new(),
        }
    }
}

/// Linear referencing data for one canonical route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLine {
    pub route: String,
    /// sorted by post ascending
    pub markers: Vec<MileMarker>,
    /// Longest end-to-end chain of the route's inventory segments.
    pub centerline: Option<Polyline>,
    /// (post, arc position on the centerline) for markers close to it
    projected: Vec<(u32, f64)>,
}

impl RouteLine {
    pub(crate) fn new(route: String, mut markers: Vec<MileMarker>, centerline: Option<Polyline>) -> Self {
        markers.sort_by_key(|m| m.post);
        let projected = match &centerline {
            Some(line) => markers
                .iter()
                .filter_map(|m| {
                    let proj = point_to_polyline(m.location, line);
                    (proj.distance_m <= MAX_REFERENCE_OFFSET_M).then_some((m.post, proj.arc_m))
                })
                .collect(),
            None => Vec::new(),
        };
        RouteLine {
            route,
            markers,
            centerline,
            projected,
        }
    }

    /// Markers that project onto the centerline, as (post, arc meters).
    pub fn projected_markers(&self) -> &[(u32, f64)] {
        &self.projected
    }

    /// Interpolated milepost for a centerline arc position; clamped to the
    /// first/last referenced marker beyond the ends.
    pub fn milepost_at_arc(&self, arc_m: f64) -> Option<f64> {
        let pts = &self.projected;
        if pts.len() < 2 {
            return None;
        }
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        let ascending = last.1 >= first.1;
        let before_start = if ascending { arc_m <= first.1 } else { arc_m >= first.1 };
        let after_end = if ascending { arc_m >= last.1 } else { arc_m <= last.1 };
        if before_start {
            return Some(first.0 as f64);
        }
        if after_end {
            return Some(last.0 as f64);
        }
        for w in pts.windows(2) {
            let ((p0, a0), (p1, a1)) = (w[0], w[1]);
            let (lo, hi) = (a0.min(a1), a0.max(a1));
            if arc_m >= lo && arc_m <= hi {
                if a1 == a0 {
                    return Some(p0 as f64);
                }
                let t = (arc_m - a0) / (a1 - a0);
                return Some(p0 as f64 + t * (p1 as f64 - p0 as f64));
            }
        }
        // markers out of order along the line; fall back to the nearest one
        pts.iter()
            .min_by(|x, y| (x.1 - arc_m).abs().total_cmp(&(y.1 - arc_m).abs()))
            .map(|&(post, _)| post as f64)
    }
}

enum TileSet {
    Memory(BTreeMap<GeohashId, Arc<GeohashTile>>),
    Lazy {
        dir: PathBuf,
        ids: BTreeSet<GeohashId>,
        loaded: Mutex<HashMap<GeohashId, Arc<GeohashTile>>>,
    },
}

/// Immutable spatial index over the road inventory.
///
/// Tiles are either all held in memory (after [`build_index`] or
/// [`TiledIndex::open`]) or read from a tile directory on first use
/// ([`TiledIndex::open_lazy`]).
pub struct TiledIndex {
    precision: usize,
    thresholds: MatchThresholds,
    segments: Vec<RoadSegment>,
    by_id: HashMap<String, usize>,
    /// per segment: arc position of each vertex on its route centerline
    centerline_arcs: Vec<Option<Vec<f64>>>,
    routes: BTreeMap<String, RouteLine>,
    tiles: TileSet,
}

impl std::fmt::Debug for TiledIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TiledIndex")
            .field("precision", &self.precision)
            .field("segments", &self.segments.len())
            .field("tiles", &self.tile_count())
            .field("routes", &self.routes.len())
            .finish()
    }
}

impl TiledIndex {
    pub(crate) fn assemble(
        precision: usize,
        thresholds: MatchThresholds,
        mut segments: Vec<RoadSegment>,
        routes: BTreeMap<String, RouteLine>,
        tiles: Option<Vec<GeohashTile>>,
        lazy: Option<(PathBuf, BTreeSet<GeohashId>)>,
    ) -> Result<Self> {
        segments.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
        let mut by_id = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if by_id.insert(s.segment_id.clone(), i).is_some() {
                return Err(Error::Build(format!("duplicate segment id {:?}", s.segment_id)));
            }
        }
        let centerline_arcs = segments
            .iter()
            .map(|s| {
                let line = routes.get(&s.route.canonical_name)?.centerline.as_ref()?;
                s.geometry
                    .vertices()
                    .iter()
                    .map(|&v| {
                        let proj = point_to_polyline(v, line);
                        (proj.distance_m <= MAX_REFERENCE_OFFSET_M).then_some(proj.arc_m)
                    })
                    .collect::<Option<Vec<f64>>>()
            })
            .collect();
        let mut index = TiledIndex {
            precision,
            thresholds,
            segments,
            by_id,
            centerline_arcs,
            routes,
            tiles: TileSet::Memory(BTreeMap::new()),
        };
        index.tiles = match (tiles, lazy) {
            (_, Some((dir, ids))) => TileSet::Lazy {
                dir,
                ids,
                loaded: Mutex::new(HashMap::new()),
            },
            (Some(tiles), None) => {
                let mut map = BTreeMap::new();
                for t in tiles {
                    let t = index.resolve(t)?;
                    map.insert(t.id.clone(), Arc::new(t));
                }
                TileSet::Memory(map)
            }
            (None, None) => TileSet::Memory(BTreeMap::new()),
        };
        Ok(index)
    }

    pub(crate) fn resolve(&self, mut tile: GeohashTile) -> Result<GeohashTile> {
        tile.members = tile
            .segments
            .iter()
            .map(|id| {
                self.by_id.get(id).copied().ok_or_else(|| {
                    Error::format(
                        format!("{}.json", tile.id),
                        format!("tile references unknown segment {id:?}"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        Ok(tile)
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn thresholds(&self) -> &MatchThresholds {
        &self.thresholds
    }

    /// All segments, sorted by id.
    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, segment_id: &str) -> Option<&RoadSegment> {
        self.by_id.get(segment_id).map(|&i| &self.segments[i])
    }

    pub(crate) fn segment_position(&self, segment_id: &str) -> Option<usize> {
        self.by_id.get(segment_id).copied()
    }

    pub fn routes(&self) -> &BTreeMap<String, RouteLine> {
        &self.routes
    }

    pub fn route(&self, canonical_name: &str) -> Option<&RouteLine> {
        self.routes.get(canonical_name)
    }

    /// Mile markers of a route sorted by post; empty when the route has none.
    pub fn markers(&self, canonical_name: &str) -> &[MileMarker] {
        self.routes
            .get(canonical_name)
            .map(|r| r.markers.as_slice())
            .unwrap_or(&[])
    }

    /// Ids of every tile in the index, sorted.
    pub fn tile_ids(&self) -> Vec<GeohashId> {
        match &self.tiles {
            TileSet::Memory(map) => map.keys().cloned().collect(),
            TileSet::Lazy { ids, .. } => ids.iter().cloned().collect(),
        }
    }

    pub fn tile_count(&self) -> usize {
        match &self.tiles {
            TileSet::Memory(map) => map.len(),
            TileSet::Lazy { ids, .. } => ids.len(),
        }
    }

    /// Number of tiles currently held in memory.
    pub fn resident_tile_count(&self) -> usize {
        match &self.tiles {
            TileSet::Memory(map) => map.len(),
            TileSet::Lazy { loaded, .. } => loaded.lock().expect("tile cache poisoned").len(),
        }
    }

    /// The tile with the given id, reading it from disk for lazy indexes.
    pub fn tile(&self, id: &GeohashId) -> Result<Option<Arc<GeohashTile>>> {
        match &self.tiles {
            TileSet::Memory(map) => Ok(map.get(id).cloned()),
            TileSet::Lazy { dir, ids, loaded } => {
                if !ids.contains(id) {
                    return Ok(None);
                }
                if let Some(t) = loaded.lock().expect("tile cache poisoned").get(id) {
                    return Ok(Some(t.clone()));
                }
                let tile = super::store::read_tile(dir, id)?.ok_or_else(|| {
                    Error::format(format!("{id}.json"), "tile listed in index-meta.json is missing")
                })?;
                let tile = Arc::new(self.resolve(tile)?);
                let mut cache = loaded.lock().expect("tile cache poisoned");
                Ok(Some(cache.entry(id.clone()).or_insert(tile).clone()))
            }
        }
    }

    /// Tiles for the point's cell and its neighbors; absent tiles are
    /// omitted.
    pub fn tiles_for_query(&self, p: Coordinate) -> Result<Vec<Arc<GeohashTile>>> {
        let cell = geohash_encode(p, self.precision)?;
        self.tiles_around(&cell)
    }

    pub(crate) fn tiles_around(&self, cell: &GeohashId) -> Result<Vec<Arc<GeohashTile>>> {
        let mut out = Vec::with_capacity(9);
        for id in geohash_neighbors(cell) {
            if let Some(t) = self.tile(&id)? {
                out.push(t);
            }
        }
        Ok(out)
    }

    /// Positions (into [`TiledIndex::segments`]) of all segments registered
    /// in the tiles around `cell`, sorted and unique.
    pub(crate) fn candidates_around(&self, cell: &GeohashId) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = Vec::new();
        for t in self.tiles_around(cell)? {
            out.extend_from_slice(&t.members);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Candidate segments for a point (union over [`Self::tiles_for_query`]).
    pub fn candidate_segments(&self, p: Coordinate) -> Result<Vec<&RoadSegment>> {
        let cell = geohash_encode(p, self.precision)?;
        Ok(self
            .candidates_around(&cell)?
            .into_iter()
            .map(|i| &self.segments[i])
            .collect())
    }

    /// Arc position on the route centerline of a point at `arc_fraction`
    /// along the segment at `position`.
    pub(crate) fn centerline_arc(&self, position: usize, arc_fraction: f64) -> Option<f64> {
        let arcs = self.centerline_arcs[position].as_ref()?;
        let geometry = &self.segments[position].geometry;
        let along = arc_fraction.clamp(0.0, 1.0) * geometry.length_m();
        let n = geometry.vertices().len();
        let mut i = 0;
        while i + 2 < n && geometry.arc_at_vertex(i + 1) < along {
            i += 1;
        }
        let (s0, s1) = (geometry.arc_at_vertex(i), geometry.arc_at_vertex(i + 1));
        let t = if s1 > s0 { ((along - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        Some(arcs[i] + t * (arcs[i + 1] - arcs[i]))
    }

    /// Splits a route into consecutive marker-to-marker segments along its
    /// centerline. Each pair of adjacent referenced markers yields one
    /// segment oriented toward the higher post; pairs whose markers project
    /// onto the same point are skipped. Fewer than two referenced markers
    /// yields an empty list.
    pub fn synthesize_mile_segments(&self, route: &RouteRef) -> Vec<RoadSegment> {
        let Some(line) = self.routes.get(&route.canonical_name) else {
            return Vec::new();
        };
        let Some(centerline) = &line.centerline else {
            return Vec::new();
        };
        line.projected
            .windows(2)
            .filter_map(|w| {
                let ((p0, a0), (p1, a1)) = (w[0], w[1]);
                let geometry = centerline.cut(a0, a1)?;
                Some(RoadSegment {
                    segment_id: format!("{}:{}-{}", route.canonical_name, p0, p1),
                    route: route.clone(),
                    geometry,
                    posts: PostRange::posts(p0, p1).expect("posts are sorted"),
                })
            })
            .collect()
    }
}

/// Builds the index: registers every segment in each tile whose bounds,
/// inflated by the largest snap threshold, its geometry passes through, and
/// groups mile markers per route.
pub fn build_index(
    segments: Vec<RoadSegment>,
    markers: Vec<MileMarker>,
    precision: usize,
    thresholds: MatchThresholds,
) -> Result<TiledIndex> {
    if !(MIN_INDEX_PRECISION..=MAX_INDEX_PRECISION).contains(&precision) {
        return Err(Error::InvalidArgument(format!(
            "index precision {precision} outside [{MIN_INDEX_PRECISION}, {MAX_INDEX_PRECISION}]"
        )));
    }
    thresholds.validate()?;

    let mut seen = BTreeSet::new();
    for s in &segments {
        if !seen.insert(s.segment_id.as_str()) {
            return Err(Error::Build(format!("duplicate segment id {:?}", s.segment_id)));
        }
    }

    let buffer_m = thresholds.max_snap_m();
    let mut tiles: BTreeMap<GeohashId, Vec<String>> = BTreeMap::new();
    for s in &segments {
        for cell in covering_cells(&s.geometry, precision, buffer_m) {
            tiles.entry(cell).or_default().push(s.segment_id.clone());
        }
    }

    let mut by_route: BTreeMap<String, Vec<MileMarker>> = BTreeMap::new();
    for m in markers {
        if !m.route.is_parsed() {
            return Err(Error::Build(format!("mile marker {} has no route ref", m.post)));
        }
        let list = by_route.entry(m.route.canonical_name.clone()).or_default();
        if list.iter().any(|x| x.post == m.post) {
            return Err(Error::Build(format!(
                "duplicate mile marker {} {}",
                m.route.canonical_name, m.post
            )));
        }
        list.push(m);
    }

    let routes = by_route
        .into_iter()
        .map(|(name, markers)| {
            let centerline = route_centerline(&segments, &name);
            (name.clone(), RouteLine::new(name, markers, centerline))
        })
        .collect();

    let tiles = tiles
        .into_iter()
        .map(|(id, segs)| GeohashTile::new(id, segs))
        .collect();
    TiledIndex::assemble(precision, thresholds, segments, routes, Some(tiles), None)
}

/// Cell size in degrees (height, width) at a geohash precision.
fn cell_size(precision: usize) -> (f64, f64) {
    let bits = 5 * precision as i32;
    let lon_bits = (bits + 1) / 2;
    let lat_bits = bits / 2;
    (180.0 / 2f64.powi(lat_bits), 360.0 / 2f64.powi(lon_bits))
}

fn covering_cells(line: &Polyline, precision: usize, buffer_m: f64) -> BTreeSet<GeohashId> {
    let (h, w) = cell_size(precision);
    let (rows, cols) = ((180.0 / h) as i64, (360.0 / w) as i64);
    // slack absorbs the planar approximation used by the distance test
    let reach = buffer_m * 1.05 + 1.0;
    let mut out = BTreeSet::new();
    for edge in line.vertices().windows(2) {
        let (a, b) = (edge[0], edge[1]);
        let dlat = reach / METERS_PER_DEGREE;
        let max_abs_lat = (a.lat().abs().max(b.lat().abs()) + dlat).min(89.9);
        let dlon = reach / (METERS_PER_DEGREE * max_abs_lat.to_radians().cos());
        let row = |lat: f64| (((lat + 90.0) / h).floor() as i64).clamp(0, rows - 1);
        let col = |lon: f64| (((lon + 180.0) / w).floor() as i64).clamp(0, cols - 1);
        let (r0, r1) = (row(a.lat().min(b.lat()) - dlat), row(a.lat().max(b.lat()) + dlat));
        let (c0, c1) = (col(a.lon().min(b.lon()) - dlon), col(a.lon().max(b.lon()) + dlon));
        for r in r0..=r1 {
            for c in c0..=c1 {
                let cell = Bounds {
                    min_lat: -90.0 + r as f64 * h,
                    max_lat: -90.0 + (r + 1) as f64 * h,
                    min_lon: -180.0 + c as f64 * w,
                    max_lon: -180.0 + (c + 1) as f64 * w,
                };
                if edge_to_cell_m(a, b, &cell) <= reach {
                    let (lat, lon) = cell.center();
                    let center = Coordinate::new(lat, lon).expect("cell center is valid");
                    out.insert(geohash_encode(center, precision).expect("precision checked"));
                }
            }
        }
    }
    out
}

/// Planar distance in meters between an edge and a lat/lon rectangle.
fn edge_to_cell_m(a: Coordinate, b: Coordinate, cell: &Bounds) -> f64 {
    let (clat, clon) = cell.center();
    let kx = METERS_PER_DEGREE * clat.to_radians().cos();
    let ky = METERS_PER_DEGREE;
    let xy = |lat: f64, lon: f64| ((lon - clon) * kx, (lat - clat) * ky);
    let (ax, ay) = xy(a.lat(), a.lon());
    let (bx, by) = xy(b.lat(), b.lon());
    let (x0, y0) = xy(cell.min_lat, cell.min_lon);
    let (x1, y1) = xy(cell.max_lat, cell.max_lon);

    if segment_hits_rect((ax, ay), (bx, by), (x0, y0), (x1, y1)) {
        return 0.0;
    }
    let point_rect = |px: f64, py: f64| {
        let dx = (x0 - px).max(0.0).max(px - x1);
        let dy = (y0 - py).max(0.0).max(py - y1);
        (dx * dx + dy * dy).sqrt()
    };
    let point_seg = |px: f64, py: f64| {
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (fx, fy) = (ax + t * dx - px, ay + t * dy - py);
        (fx * fx + fy * fy).sqrt()
    };
    [
        point_rect(ax, ay),
        point_rect(bx, by),
        point_seg(x0, y0),
        point_seg(x0, y1),
        point_seg(x1, y0),
        point_seg(x1, y1),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Liang-Barsky clip test.
fn segment_hits_rect(a: (f64, f64), b: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a.0 - lo.0),
        (dx, hi.0 - a.0),
        (-dy, a.1 - lo.1),
        (dy, hi.1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Joins the route's segments end to end (in post order, then id order) and
/// keeps the longest resulting chain. Segments that would double back over
/// the chain are left out.
fn route_centerline(segments: &[RoadSegment], route: &str) -> Option<Polyline> {
    let mut members: Vec<&RoadSegment> = segments
        .iter()
        .filter(|s| s.route.canonical_name == route)
        .collect();
    members.sort_by(|a, b| {
        let key = |s: &RoadSegment| s.posts.start_post().unwrap_or(u32::MAX);
        key(a).cmp(&key(b)).then_with(|| a.segment_id.cmp(&b.segment_id))
    });

    let close = |x: Coordinate, y: Coordinate| great_circle_distance(x, y) <= CHAIN_JOIN_TOLERANCE_M;
    let mut unused: Vec<&RoadSegment> = members;
    let mut best: Option<Polyline> = None;
    while !unused.is_empty() {
        let seed = unused.remove(0);
        let mut chain: Vec<Coordinate> = seed.geometry.vertices().to_vec();
        loop {
            let mut joined = false;
            for k in 0..unused.len() {
                let v = unused[k].geometry.vertices();
                let (first, last) = (v[0], v[v.len() - 1]);
                let (head, tail) = (chain[0], chain[chain.len() - 1]);
                let mut forward: Vec<Coordinate> = v.to_vec();
                let prepend;
                if close(first, tail) {
                    prepend = false;
                } else if close(last, tail) {
                    forward.reverse();
                    prepend = false;
                } else if close(last, head) {
                    prepend = true;
                } else if close(first, head) {
                    forward.reverse();
                    prepend = true;
                } else {
                    continue;
                }
                let current = Polyline::new(chain.clone()).ok()?;
                let mid = unused[k].geometry.point_at_fraction(0.5);
                if point_to_polyline(mid, &current).distance_m <= CHAIN_JOIN_TOLERANCE_M {
                    continue;
                }
                if prepend {
                    forward.extend_from_slice(&chain);
                    chain = forward;
                } else {
                    chain.extend_from_slice(&forward);
                }
                unused.remove(k);
                joined = true;
                break;
            }
            if !joined {
                break;
            }
        }
        if let Ok(line) = Polyline::new(chain) {
            if best.as_ref().is_none_or(|b| line.length_m() > b.length_m()) {
                best = Some(line);
            }
        }
    }
    best
}
