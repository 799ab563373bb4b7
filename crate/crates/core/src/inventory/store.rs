//! On-disk tile store: one small JSON file per geohash tile, shared segment
//! geometry, per-route marker files and an index manifest.
//!
//! ```text
//! <dir>/index-meta.json         precision, thresholds, tile and route lists
//! <dir>/segments.json           every segment with full geometry
//! <dir>/<geohash>.json          {"id", "segments": [segment ids]}
//! <dir>/markers/<route>.json    {"route", "markers", "centerline"}
//! ```
//!
//! Coordinates are written as `[lon, lat]` pairs. Keys appear in the order
//! of the record structs below, so identical indexes produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{json_line, read_json, safe_file_stem, write_atomic};
use crate::geo::{Coordinate, GeohashId, Polyline};
use crate::matching::MatchThresholds;

use super::{GeohashTile, MileMarker, PostRange, RoadSegment, RouteLine, RouteRef, TiledIndex};

pub const META_FILE: &str = "index-meta.json";
pub const SEGMENTS_FILE: &str = "segments.json";
pub const MARKER_DIR: &str = "markers";

const FORMAT_NAME: &str = "plowtrack-tiles";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MetaRecord {
    format: String,
    version: u32,
    precision: usize,
    thresholds: MatchThresholds,
    buffer_m: f64,
    segment_count: usize,
    tiles: Vec<GeohashId>,
    routes: Vec<RouteEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteEntry {
    route: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentsRecord {
    segments: Vec<SegmentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    id: String,
    route_ref: String,
    route: String,
    class: String,
    start_post: Option<u32>,
    end_post: Option<u32>,
    start_offset: Option<f64>,
    end_offset: Option<f64>,
    geometry: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TileRecord {
    id: GeohashId,
    segments: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkerFileRecord {
    route: String,
    markers: Vec<MarkerRecord>,
    centerline: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkerRecord {
    post: u32,
    lat: f64,
    lon: f64,
    route_ref: String,
}

/// Files written by [`write_tiles`], by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteSummary {
    pub tile_files: usize,
    pub marker_files: usize,
    pub meta_files: usize,
    pub segment_files: usize,
}

impl WriteSummary {
    pub fn total(&self) -> usize {
        self.tile_files + self.marker_files + self.meta_files + self.segment_files
    }
}

fn line_to_pairs(line: &Polyline) -> Vec<[f64; 2]> {
    line.vertices().iter().map(|c| [c.lon(), c.lat()]).collect()
}

fn pairs_to_line(pairs: &[[f64; 2]], file: &str) -> Result<Polyline> {
    let vertices = pairs
        .iter()
        .map(|&[lon, lat]| Coordinate::new(lat, lon))
        .collect::<Result<Vec<_>>>()
        .and_then(Polyline::new);
    vertices.map_err(|e| Error::format(file, e.to_string()))
}

/// Persists the index. Existing files with the same names are replaced
/// atomically.
pub fn write_tiles(index: &TiledIndex, dir: &Path) -> Result<WriteSummary> {
    std::fs::create_dir_all(dir.join(MARKER_DIR)).map_err(|e| Error::io(dir, e))?;

    let segments = SegmentsRecord {
        segments: index
            .segments()
            .iter()
            .map(|s| SegmentRecord {
                id: s.segment_id.clone(),
                route_ref: s.route.raw.clone(),
                route: s.route.canonical_name.clone(),
                class: s.route.road_class.to_string(),
                start_post: s.posts.start_post(),
                end_post: s.posts.end_post(),
                start_offset: s.posts.start_offset(),
                end_offset: s.posts.end_offset(),
                geometry: line_to_pairs(&s.geometry),
            })
            .collect(),
    };
    write_atomic(&dir.join(SEGMENTS_FILE), &json_line(&segments))?;

    let tile_ids = index.tile_ids();
    for id in &tile_ids {
        let tile = index
            .tile(id)?
            .expect("listed tile ids are present in the index");
        let record = TileRecord {
            id: tile.id.clone(),
            segments: tile.segments.clone(),
        };
        write_atomic(&dir.join(format!("{id}.json")), &json_line(&record))?;
    }

    let mut routes = Vec::new();
    for (name, line) in index.routes() {
        let file = format!("{}.json", safe_file_stem(name));
        let record = MarkerFileRecord {
            route: name.clone(),
            markers: line
                .markers
                .iter()
                .map(|m| MarkerRecord {
                    post: m.post,
                    lat: m.location.lat(),
                    lon: m.location.lon(),
                    route_ref: m.route.raw.clone(),
                })
                .collect(),
            centerline: line.centerline.as_ref().map(line_to_pairs),
        };
        write_atomic(&dir.join(MARKER_DIR).join(&file), &json_line(&record))?;
        routes.push(RouteEntry {
            route: name.clone(),
            file,
        });
    }

    let meta = MetaRecord {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        precision: index.precision(),
        thresholds: *index.thresholds(),
        buffer_m: index.thresholds().max_snap_m(),
        segment_count: index.segments().len(),
        tiles: tile_ids.clone(),
        routes,
    };
    let mut meta_bytes = serde_json::to_vec_pretty(&meta).expect("in-memory serialization");
    meta_bytes.push(b'\n');
    write_atomic(&dir.join(META_FILE), &meta_bytes)?;

    Ok(WriteSummary {
        tile_files: tile_ids.len(),
        marker_files: index.routes().len(),
        meta_files: 1,
        segment_files: 1,
    })
}

/// Reads one tile file. A tile that was never written is `Ok(None)`.
pub fn read_tile(dir: &Path, id: &GeohashId) -> Result<Option<GeohashTile>> {
    let path = dir.join(format!("{id}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let record: TileRecord = read_json(&path)?;
    if &record.id != id {
        return Err(Error::format(
            path.display().to_string(),
            format!("tile file declares id {} but is named {id}", record.id),
        ));
    }
    Ok(Some(GeohashTile::new(record.id, record.segments)))
}

impl TiledIndex {
    /// Loads a persisted index with every tile in memory.
    pub fn open(dir: &Path) -> Result<TiledIndex> {
        let (meta, segments, routes) = read_common(dir)?;
        let tiles = meta
            .tiles
            .iter()
            .map(|id| {
                read_tile(dir, id)?.ok_or_else(|| {
                    Error::format(format!("{id}.json"), "tile listed in index-meta.json is missing")
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TiledIndex::assemble(meta.precision, meta.thresholds, segments, routes, Some(tiles), None)
    }

    /// Loads segments and markers now; tiles are read on first access.
    pub fn open_lazy(dir: &Path) -> Result<TiledIndex> {
        let (meta, segments, routes) = read_common(dir)?;
        let ids: BTreeSet<GeohashId> = meta.tiles.into_iter().collect();
        TiledIndex::assemble(
            meta.precision,
            meta.thresholds,
            segments,
            routes,
            None,
            Some((dir.to_path_buf(), ids)),
        )
    }
}

type Loaded = (MetaRecord, Vec<RoadSegment>, BTreeMap<String, RouteLine>);

fn read_common(dir: &Path) -> Result<Loaded> {
    let meta_path = dir.join(META_FILE);
    let meta: MetaRecord = read_json(&meta_path)?;
    let meta_name = meta_path.display().to_string();
    if meta.format != FORMAT_NAME || meta.version != FORMAT_VERSION {
        return Err(Error::format(
            meta_name,
            format!("unsupported tile store {} v{}", meta.format, meta.version),
        ));
    }
    meta.thresholds
        .validate()
        .map_err(|e| Error::format(&meta_name, e.to_string()))?;

    let seg_path = dir.join(SEGMENTS_FILE);
    let seg_name = seg_path.display().to_string();
    let record: SegmentsRecord = read_json(&seg_path)?;
    let segments = record
        .segments
        .into_iter()
        .map(|r| {
            let posts = PostRange::new(r.start_post, r.end_post, r.start_offset, r.end_offset)
                .map_err(|e| Error::format(&seg_name, format!("segment {}: {e}", r.id)))?;
            Ok(RoadSegment {
                route: RouteRef::parse_lenient(&r.route_ref),
                geometry: pairs_to_line(&r.geometry, &seg_name)?,
                segment_id: r.id,
                posts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut routes = BTreeMap::new();
    for entry in &meta.routes {
        let path = dir.join(MARKER_DIR).join(&entry.file);
        let name = path.display().to_string();
        let record: MarkerFileRecord = read_json(&path)?;
        let markers = record
            .markers
            .iter()
            .map(|m| {
                Ok(MileMarker {
                    route: RouteRef::parse_lenient(&m.route_ref),
                    post: m.post,
                    location: Coordinate::new(m.lat, m.lon)
                        .map_err(|e| Error::format(&name, e.to_string()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let centerline = record
            .centerline
            .as_deref()
            .map(|pairs| pairs_to_line(pairs, &name))
            .transpose()?;
        routes.insert(
            record.route.clone(),
            RouteLine::new(record.route, markers, centerline),
        );
    }
    Ok((meta, segments, routes))
}
