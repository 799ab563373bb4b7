use super::{great_circle_distance, normalize_lon, Bounds, Coordinate, METERS_PER_DEGREE};
use crate::error::{Error, Result};

/// An ordered chain of at least two distinct consecutive vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<Coordinate>,
    /// cumulative haversine length at each vertex, `cumulative[0] == 0`
    cumulative: Vec<f64>,
    bounds: Bounds,
}

/// Closest point of a polyline to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub distance_m: f64,
    pub foot: Coordinate,
    /// distance of `foot` along the line, in meters from the first vertex
    pub arc_m: f64,
    /// `arc_m` divided by the total length
    pub arc_fraction: f64,
}

impl Polyline {
    /// Builds a polyline, collapsing runs of identical consecutive vertices.
    pub fn new(vertices: Vec<Coordinate>) -> Result<Self> {
        let mut deduped: Vec<Coordinate> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if deduped.last() != Some(&v) {
                deduped.push(v);
            }
        }
        if deduped.len() < 2 {
            return Err(Error::InvalidArgument(
                "polyline needs at least two distinct vertices".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(deduped.len());
        let mut total = 0.0;
        cumulative.push(0.0);
        for w in deduped.windows(2) {
            total += great_circle_distance(w[0], w[1]);
            cumulative.push(total);
        }
        let bounds = deduped.iter().fold(
            Bounds {
                min_lat: f64::INFINITY,
                max_lat: f64::NEG_INFINITY,
                min_lon: f64::INFINITY,
                max_lon: f64::NEG_INFINITY,
            },
            |b, v| Bounds {
                min_lat: b.min_lat.min(v.lat()),
                max_lat: b.max_lat.max(v.lat()),
                min_lon: b.min_lon.min(v.lon()),
                max_lon: b.max_lon.max(v.lon()),
            },
        );
        Ok(Polyline {
            vertices: deduped,
            cumulative,
            bounds,
        })
    }

    pub fn vertices(&self) -> &[Coordinate] {
        &self.vertices
    }

    /// Bounding box of the vertices (not antimeridian aware).
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn length_m(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Arc position of vertex `i` in meters.
    pub fn arc_at_vertex(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    pub fn reversed(&self) -> Polyline {
        let mut v = self.vertices.clone();
        v.reverse();
        Polyline::new(v).expect("reversal keeps vertices distinct")
    }

    /// The point `arc_m` meters along the line, clamped to the ends.
    pub fn point_at(&self, arc_m: f64) -> Coordinate {
        let arc = arc_m.clamp(0.0, self.length_m());
        let i = self.edge_containing(arc);
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let edge = self.cumulative[i + 1] - self.cumulative[i];
        let t = if edge > 0.0 {
            (arc - self.cumulative[i]) / edge
        } else {
            0.0
        };
        lerp(a, b, t)
    }

    pub fn point_at_fraction(&self, fraction: f64) -> Coordinate {
        self.point_at(fraction * self.length_m())
    }

    /// Sub-line between two arc positions (in either order), running from
    /// `from_m` to `to_m`. Returns `None` when the two positions coincide.
    pub fn cut(&self, from_m: f64, to_m: f64) -> Option<Polyline> {
        let (lo, hi) = (from_m.min(to_m), from_m.max(to_m));
        let lo = lo.clamp(0.0, self.length_m());
        let hi = hi.clamp(0.0, self.length_m());
        let mut pts = vec![self.point_at(lo)];
        for (i, v) in self.vertices.iter().enumerate() {
            if self.cumulative[i] > lo && self.cumulative[i] < hi {
                pts.push(*v);
            }
        }
        pts.push(self.point_at(hi));
        let line = Polyline::new(pts).ok()?;
        if from_m > to_m {
            Some(line.reversed())
        } else {
            Some(line)
        }
    }

    fn edge_containing(&self, arc: f64) -> usize {
        let last_edge = self.vertices.len() - 2;
        match self
            .cumulative
            .binary_search_by(|x| x.partial_cmp(&arc).expect("finite arc"))
        {
            Ok(i) => i.min(last_edge),
            Err(i) => i.saturating_sub(1).min(last_edge),
        }
    }
}

fn lerp(a: Coordinate, b: Coordinate, t: f64) -> Coordinate {
    let dlon = normalize_lon(b.lon() - a.lon());
    Coordinate::new(
        a.lat() + t * (b.lat() - a.lat()),
        a.lon() + t * dlon,
    )
    .expect("interpolated coordinate stays in range")
}

/// Closest point of `line` to `p`.
///
/// Each edge is projected in an equirectangular plane centred on `p`; the
/// reported distance is the haversine distance to the resulting foot, never
/// more than the haversine distance to either endpoint of that edge. Edges
/// whose planar distance is clearly worse than the best one are skipped
/// before any haversine evaluation. Ties keep the earliest edge.
pub fn point_to_polyline(p: Coordinate, line: &Polyline) -> Projection {
    let kx = METERS_PER_DEGREE * p.lat().to_radians().cos();
    let ky = METERS_PER_DEGREE;
    let to_plane = |c: Coordinate| {
        (
            normalize_lon(c.lon() - p.lon()) * kx,
            (c.lat() - p.lat()) * ky,
        )
    };

    let vertices = line.vertices();
    let plane: Vec<(f64, f64)> = vertices.iter().map(|&v| to_plane(v)).collect();
    let edge_param = |i: usize| {
        let ((ax, ay), (bx, by)) = (plane[i], plane[i + 1]);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (fx, fy) = (ax + t * dx, ay + t * dy);
        (t, (fx * fx + fy * fy).sqrt())
    };

    let planar: Vec<(f64, f64)> = (0..vertices.len() - 1).map(edge_param).collect();
    let best_planar = planar.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
    // generous enough to absorb the projection's distortion at any scale we use
    let cutoff = best_planar * 1.05 + 1.0;

    let mut best: Option<(f64, Coordinate, usize, f64)> = None;
    for (i, &(t, planar_d)) in planar.iter().enumerate() {
        if planar_d > cutoff {
            continue;
        }
        let (a, b) = (vertices[i], vertices[i + 1]);
        let mut foot = lerp(a, b, t);
        let mut d = great_circle_distance(p, foot);
        let mut along = great_circle_distance(a, foot);
        let da = great_circle_distance(p, a);
        if da < d {
            foot = a;
            d = da;
            along = 0.0;
        }
        let db = great_circle_distance(p, b);
        if db < d {
            foot = b;
            d = db;
            along = line.cumulative[i + 1] - line.cumulative[i];
        }
        if best.is_none_or(|(bd, ..)| d < bd) {
            best = Some((d, foot, i, along));
        }
    }

    let (distance_m, foot, edge, along) = best.expect("polyline has at least one edge");
    let total = line.length_m();
    let arc_m = (line.cumulative[edge] + along).min(total);
    Projection {
        distance_m,
        foot,
        arc_m,
        arc_fraction: if total > 0.0 { arc_m / total } else { 0.0 },
    }
}
