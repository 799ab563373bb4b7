//! Synthetic fixtures and brute-force reference implementations used by the
//! plowtrack test suites.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use plowtrack::geo::{point_to_polyline, Coordinate, Polyline, METERS_PER_DEGREE, METERS_PER_MILE};
use plowtrack::inventory::{MileMarker, PostRange, RoadClass, RoadSegment, RouteRef};
use plowtrack::matching::MatchThresholds;
use plowtrack::track::{parse_timestamp, DayTrack, GpsPoint, DEFAULT_TIMEZONE};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(lat: f64, lon: f64) -> Coordinate {
    Coordinate::new(lat, lon).expect("valid test coordinate")
}

/// Moves `p` by `north_m` and `east_m` on a local flat approximation.
pub fn offset(p: Coordinate, north_m: f64, east_m: f64) -> Coordinate {
    let lat = p.lat() + north_m / METERS_PER_DEGREE;
    let lon = p.lon() + east_m / (METERS_PER_DEGREE * p.lat().to_radians().cos());
    c(lat, lon)
}

pub fn segment(id: &str, route: &str, vertices: Vec<Coordinate>, posts: PostRange) -> RoadSegment {
    RoadSegment {
        segment_id: id.to_owned(),
        route: RouteRef::parse_lenient(route),
        geometry: Polyline::new(vertices).expect("valid test polyline"),
        posts,
    }
}

fn random_route_name(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..7) {
        0 => format!("I-{}", rng.gen_range(1..100)),
        1 => format!("US {}", rng.gen_range(1..100)),
        2 => format!("SR {}", rng.gen_range(1..100)),
        3 => format!("S.R. {}", rng.gen_range(1..100)),
        4 => String::new(),
        _ => format!("County Rd {}", rng.gen_range(1..900)),
    }
}

/// A random road network in a box of about 20 km around a random
/// mid-latitude center.
#[derive(Debug, Clone)]
pub struct RandomNetwork {
    pub center: Coordinate,
    pub segments: Vec<RoadSegment>,
}

impl RandomNetwork {
    pub fn generate(rng: &mut ChaCha8Rng, n_segments: usize) -> Self {
        let center = c(rng.gen_range(-65.0..65.0), rng.gen_range(-170.0..170.0));
        let segments = (0..n_segments)
            .map(|i| {
                let mut p = offset(center, rng.gen_range(-10_000.0..10_000.0), rng.gen_range(-10_000.0..10_000.0));
                let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut vertices = vec![p];
                for _ in 0..rng.gen_range(1..6) {
                    heading += rng.gen_range(-0.8..0.8);
                    let step = rng.gen_range(80.0..1500.0);
                    p = offset(p, step * heading.cos(), step * heading.sin());
                    vertices.push(p);
                }
                segment(&format!("seg{i:03}"), &random_route_name(rng), vertices, PostRange::whole_road())
            })
            .collect();
        RandomNetwork { center, segments }
    }

    /// A query point: half near a random segment (within 400 m), half
    /// anywhere in the box.
    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> Coordinate {
        if rng.gen_bool(0.5) {
            let s = self.segments.choose(rng).expect("non-empty network");
            let on = s.geometry.point_at_fraction(rng.gen_range(0.0..=1.0));
            let r = rng.gen_range(0.0..400.0);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            offset(on, r * a.cos(), r * a.sin())
        } else {
            offset(self.center, rng.gen_range(-12_000.0..12_000.0), rng.gen_range(-12_000.0..12_000.0))
        }
    }
}

/// Reference road selection: scans every segment, no spatial index.
/// Returns the selected segment id and its distance.
pub fn brute_force_select(
    segments: &[RoadSegment],
    previous: Option<&str>,
    p: Coordinate,
    th: &MatchThresholds,
) -> Option<(String, f64)> {
    if let Some(hint) = previous.and_then(|id| segments.iter().find(|s| s.segment_id == id)) {
        let d = point_to_polyline(p, &hint.geometry).distance_m;
        if d <= th.hint_m {
            return Some((hint.segment_id.clone(), d));
        }
    }
    let limits = [
        (RoadClass::Interstate, th.interstate_m),
        (RoadClass::StateRoad, th.state_m),
        (RoadClass::LocalRoad, th.local_m),
    ];
    for (class, limit) in limits {
        let mut best: Option<(&str, f64)> = None;
        for s in segments.iter().filter(|s| s.route.road_class == class) {
            let d = point_to_polyline(p, &s.geometry).distance_m;
            let better = match best {
                None => true,
                Some((id, bd)) => d < bd || (d == bd && s.segment_id.as_str() < id),
            };
            if better {
                best = Some((&s.segment_id, d));
            }
        }
        if let Some((id, d)) = best {
            if d <= limit {
                return Some((id.to_owned(), d));
            }
        }
    }
    None
}

/// One sample of a reference time computation: seconds since the first
/// sample, canonical route of the matched road, and milepost.
#[derive(Debug, Clone)]
pub struct RefPoint {
    pub t: i64,
    pub route: Option<String>,
    pub milepost: Option<f64>,
}

/// Straightforward reference for the time on a segment: filter the
/// qualifying samples, then sum capped gaps to each one's successor.
/// `bounds` is `(lower, upper)` when the segment has posts.
pub fn brute_force_seconds(points: &[RefPoint], route: &str, bounds: Option<(f64, f64)>, cap: f64) -> f64 {
    let qualifying: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].route.as_deref() == Some(route))
        .filter(|&i| match bounds {
            None => true,
            Some((lo, hi)) => points[i].milepost.is_some_and(|m| lo <= m && m <= hi),
        })
        .collect();
    qualifying
        .iter()
        .filter(|&&i| i + 1 < points.len())
        .map(|&i| ((points[i + 1].t - points[i].t) as f64).min(cap))
        .sum()
}

/// A straight east-west route with a marker on the road at every mile.
#[derive(Debug, Clone)]
pub struct StraightRoute {
    pub name: String,
    pub start: Coordinate,
    pub miles: u32,
    pub first_post: u32,
}

impl StraightRoute {
    pub fn new(name: &str, start: Coordinate, miles: u32, first_post: u32) -> Self {
        StraightRoute {
            name: name.to_owned(),
            start,
            miles,
            first_post,
        }
    }

    /// Point `mile` miles east of the start (fractional allowed).
    pub fn at_mile(&self, mile: f64) -> Coordinate {
        offset(self.start, 0.0, mile * METERS_PER_MILE)
    }

    pub fn markers(&self) -> Vec<MileMarker> {
        (0..=self.miles)
            .map(|k| MileMarker {
                route: RouteRef::parse_lenient(&self.name),
                post: self.first_post + k,
                location: self.at_mile(k as f64),
            })
            .collect()
    }

    /// The route split into `pieces` consecutive inventory segments, each
    /// with many vertices so the geometry follows the parallel closely.
    pub fn segments(&self, pieces: u32) -> Vec<RoadSegment> {
        let per = self.miles as f64 / pieces as f64;
        (0..pieces)
            .map(|k| {
                let (a, b) = (k as f64 * per, (k + 1) as f64 * per);
                let vertices = (0..=20).map(|j| self.at_mile(a + (b - a) * j as f64 / 20.0)).collect();
                segment(
                    &format!("{}#{k}", self.name),
                    &self.name,
                    vertices,
                    PostRange::whole_road(),
                )
            })
            .collect()
    }
}

pub fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 5).expect("valid date")
}

/// 06:00 local on [`day`].
pub fn morning() -> DateTime<FixedOffset> {
    parse_timestamp("2021-01-05T06:00:00", DEFAULT_TIMEZONE)
        .expect("valid timestamp")
        .fixed_offset()
}

/// A day track from `(seconds after 06:00, location)` samples.
pub fn day_track(vehicle: &str, samples: &[(i64, Coordinate)]) -> DayTrack {
    DayTrack {
        vehicle_id: vehicle.to_owned(),
        day: day(),
        points: samples
            .iter()
            .map(|&(s, location)| GpsPoint {
                vehicle_id: vehicle.to_owned(),
                time: morning() + Duration::seconds(s),
                location,
            })
            .collect(),
    }
}

/// A gridded network for load tests: `rows` east-west and `cols`
/// north-south roads `spacing_m` apart, each cut into pieces of
/// `piece_m`. Every fifth east-west road is an interstate, every other one
/// a state road; north-south roads are local.
#[derive(Debug, Clone)]
pub struct GridNetwork {
    pub origin: Coordinate,
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub segments: Vec<RoadSegment>,
}

impl GridNetwork {
    pub fn generate(origin: Coordinate, rows: usize, cols: usize, spacing_m: f64, piece_m: f64) -> Self {
        let width = (cols - 1) as f64 * spacing_m;
        let height = (rows - 1) as f64 * spacing_m;
        let mut segments = Vec::new();
        for r in 0..rows {
            let route = match r % 5 {
                0 => format!("I-{}", r + 1),
                2 | 4 => format!("SR {}", r + 1),
                _ => format!("Row Rd {r}"),
            };
            let y = r as f64 * spacing_m;
            let pieces = (width / piece_m).round() as usize;
            for k in 0..pieces {
                let a = offset(origin, y, k as f64 * piece_m);
                let b = offset(origin, y, (k + 1) as f64 * piece_m);
                segments.push(segment(&format!("r{r:03}-{k:03}"), &route, vec![a, b], PostRange::whole_road()));
            }
        }
        for col in 0..cols {
            let x = col as f64 * spacing_m;
            let pieces = (height / piece_m).round() as usize;
            for k in 0..pieces {
                let a = offset(origin, k as f64 * piece_m, x);
                let b = offset(origin, (k + 1) as f64 * piece_m, x);
                segments.push(segment(
                    &format!("c{col:03}-{k:03}"),
                    &format!("Col Rd {col}"),
                    vec![a, b],
                    PostRange::whole_road(),
                ));
            }
        }
        GridNetwork {
            origin,
            rows,
            cols,
            spacing_m,
            segments,
        }
    }

    /// A vehicle wandering east and west along one east-west road within
    /// `[0, max_east_m]`, with up to 15 m of lateral GPS noise.
    pub fn drive(&self, rng: &mut ChaCha8Rng, vehicle: &str, n: usize, max_east_m: f64) -> DayTrack {
        let row = rng.gen_range(0..self.rows);
        let mut x = rng.gen_range(0.0..max_east_m);
        let mut dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut t = 0;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let noise = rng.gen_range(-15.0..15.0);
            samples.push((t, offset(self.origin, row as f64 * self.spacing_m + noise, x)));
            t += rng.gen_range(20..70);
            x += dir * rng.gen_range(0.0..400.0);
            if x < 0.0 || x > max_east_m {
                dir = -dir;
                x = x.clamp(0.0, max_east_m);
            }
        }
        day_track(vehicle, &samples)
    }
}

/// Inventory table text for `segments` (WKT geometry, lon lat order).
pub fn inventory_csv(segments: &[RoadSegment]) -> String {
    let mut out = String::from("SegmentId,RouteRef,StartPost,EndPost,StartOffset,EndOffset,Geometry\n");
    for s in segments {
        let wkt: Vec<String> = s
            .geometry
            .vertices()
            .iter()
            .map(|v| format!("{} {}", v.lon(), v.lat()))
            .collect();
        let opt = |v: Option<String>| v.unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},\"LINESTRING ({})\"",
            s.segment_id,
            s.route.raw,
            opt(s.posts.start_post().map(|x| x.to_string())),
            opt(s.posts.end_post().map(|x| x.to_string())),
            opt(s.posts.start_offset().map(|x| x.to_string())),
            opt(s.posts.end_offset().map(|x| x.to_string())),
            wkt.join(", ")
        )
        .expect("string write");
    }
    out
}

pub fn markers_csv(markers: &[MileMarker]) -> String {
    let mut out = String::from("RouteRef,Post,Lat,Lon\n");
    for m in markers {
        writeln!(out, "{},{},{},{}", m.route.raw, m.post, m.location.lat(), m.location.lon()).expect("string write");
    }
    out
}

/// GPS table text; timestamps as `MM/DD/YYYY HH:MM:SS` local time.
pub fn gps_csv(tracks: &[DayTrack]) -> String {
    let mut out = String::from("VehicleId,Timestamp,Lat,Lon,Speed\n");
    for t in tracks {
        for p in &t.points {
            writeln!(
                out,
                "{},{},{},{},0",
                p.vehicle_id,
                p.time.format("%m/%d/%Y %H:%M:%S"),
                p.location.lat(),
                p.location.lon()
            )
            .expect("string write");
        }
    }
    out
}

/// Interval list with exactly 34 of every 100 gaps at one minute and 14 of
/// every 100 above five minutes, shuffled. `hundreds` blocks of 100.
pub fn sampling_gaps(rng: &mut ChaCha8Rng, hundreds: usize) -> Vec<i64> {
    let mut gaps = Vec::with_capacity(100 * hundreds);
    for _ in 0..hundreds {
        gaps.extend(std::iter::repeat_n(60, 34));
        gaps.extend((0..14).map(|_| rng.gen_range(301..=1800)));
        let others = [1, 5, 30, 45, 59, 61, 90, 120, 180, 240, 299, 300];
        gaps.extend((0..52).map(|_| *others.choose(rng).expect("non-empty")));
    }
    gaps.shuffle(rng);
    gaps
}

/// Work orders whose per-WOId day spreads follow `spreads` (days spread
/// -> count). Each order has one row on its first day, one on its last,
/// and a random subset of the days between.
pub fn spread_work_orders_csv(rng: &mut ChaCha8Rng, spreads: &BTreeMap<u32, u64>) -> String {
    let mut out = String::from("WOId,VehicleId,Date,RouteRef,StartPost,EndPost,StartOffset,EndOffset,ReportedHrs\n");
    let season_start = NaiveDate::from_ymd_opt(2020, 12, 2).expect("valid date");
    let mut rows = Vec::new();
    let mut id = 0;
    for (&days, &count) in spreads {
        for _ in 0..count {
            id += 1;
            let first = season_start + Duration::days(rng.gen_range(0..140));
            let mut dates = vec![first, first + Duration::days(days as i64 - 1)];
            for d in 1..days.saturating_sub(1) {
                if rng.gen_bool(0.5) {
                    dates.push(first + Duration::days(d as i64));
                }
            }
            dates.dedup();
            for date in dates {
                rows.push(format!(
                    "WO{id:06},T{},{},I-65,10,12,,,{:.1}",
                    rng.gen_range(1..1051),
                    date.format("%m/%d/%Y"),
                    rng.gen_range(0.5..8.0)
                ));
            }
        }
    }
    rows.shuffle(rng);
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Work-order counts per days spread used as the histogram target.
pub fn reference_spread_table() -> BTreeMap<u32, u64> {
    BTreeMap::from([(1, 21_655), (2, 989), (3, 47), (4, 2), (5, 4), (6, 0), (7, 2), (8, 1)])
}
