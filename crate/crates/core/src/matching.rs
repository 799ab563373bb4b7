//! Nearest-road map matching with a previous-road hint and a fixed road
//! class hierarchy, plus the matched-track JSON interchange.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{json_line, read_json, safe_file_stem, write_atomic};
use crate::geo::{geohash_encode, point_to_polyline, Bounds, Coordinate, GeohashId, METERS_PER_DEGREE};
use crate::inventory::{RoadClass, TiledIndex};
use crate::track::{DayTrack, GpsPoint, TrackKey};

/// Snap distance limits in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchThresholds {
    pub interstate_m: f64,
    pub state_m: f64,
    pub local_m: f64,
    /// how far the previous point's road may be and still be kept
    pub hint_m: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        MatchThresholds {
            interstate_m: 200.0,
            state_m: 100.0,
            local_m: 50.0,
            hint_m: 250.0,
        }
    }
}

impl MatchThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.interstate_m, self.state_m, self.local_m, self.hint_m];
        if !all.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "match thresholds must be positive: {self:?}"
            )));
        }
        let class_max = self.interstate_m.max(self.state_m).max(self.local_m);
        if self.hint_m < class_max {
            return Err(Error::InvalidArgument(format!(
                "hint threshold {} m is below the largest class threshold {class_max} m",
                self.hint_m
            )));
        }
        Ok(())
    }

    pub fn for_class(&self, class: RoadClass) -> f64 {
        match class {
            RoadClass::Interstate => self.interstate_m,
            RoadClass::StateRoad => self.state_m,
            RoadClass::LocalRoad => self.local_m,
        }
    }

    /// Largest distance at which any road can be selected.
    pub fn max_snap_m(&self) -> f64 {
        self.hint_m.max(self.interstate_m).max(self.state_m).max(self.local_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPoint {
    pub point: GpsPoint,
    /// matched segment id; `None` means off-road
    pub road: Option<String>,
    pub road_class: Option<RoadClass>,
    /// absent off-road, and on roads whose route lacks two usable markers
    pub milepost: Option<f64>,
    pub snap_distance_m: Option<f64>,
}

impl MatchedPoint {
    fn off_road(point: GpsPoint) -> Self {
        MatchedPoint {
            point,
            road: None,
            road_class: None,
            milepost: None,
            snap_distance_m: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchState {
    pub previous_road: Option<String>,
}

/// Cheap lower bound on the distance from `p` to anything inside `b`.
fn distance_lower_bound(p: Coordinate, b: &Bounds) -> f64 {
    let dlat = (b.min_lat - p.lat()).max(p.lat() - b.max_lat).max(0.0);
    let lat_bound = dlat * METERS_PER_DEGREE;
    let lon = p.lon();
    if lon >= b.min_lon && lon <= b.max_lon {
        return lat_bound;
    }
    let gap = |x: f64| {
        let d = (lon - x).abs() % 360.0;
        d.min(360.0 - d)
    };
    let dlon = gap(b.min_lon).min(gap(b.max_lon));
    if dlon > 1.0 {
        return lat_bound;
    }
    // sin(d/2R) >= cos(lat_max) sin(dlon/2); 0.99 absorbs sin x < x for dlon <= 1 degree
    let lat_max = p.lat().abs().max(b.min_lat.abs()).max(b.max_lat.abs());
    lat_bound.max(0.99 * dlon * METERS_PER_DEGREE * lat_max.to_radians().cos())
}

#[derive(Clone, Copy)]
struct Best {
    position: usize,
    distance_m: f64,
    arc_fraction: f64,
}

fn choose(
    idx: &TiledIndex,
    state: &MatchState,
    p: Coordinate,
    candidates: &[usize],
    th: &MatchThresholds,
) -> Option<Best> {
    let segments = idx.segments();
    if let Some(hint) = state.previous_road.as_deref().and_then(|id| idx.segment_position(id)) {
        if candidates.binary_search(&hint).is_ok() {
            let proj = point_to_polyline(p, &segments[hint].geometry);
            if proj.distance_m <= th.hint_m {
                return Some(Best {
                    position: hint,
                    distance_m: proj.distance_m,
                    arc_fraction: proj.arc_fraction,
                });
            }
        }
    }
    let mut best: [Option<Best>; 3] = [None; 3];
    // candidates are in segment id order, so strict `<` keeps the smaller id on ties
    for &i in candidates {
        let seg = &segments[i];
        let class = seg.route.road_class;
        let slot = class as usize;
        let limit = best[slot].map_or(th.for_class(class), |b| b.distance_m);
        if distance_lower_bound(p, &seg.geometry.bounds()) > limit {
            continue;
        }
        let proj = point_to_polyline(p, &seg.geometry);
        if best[slot].is_none_or(|b| proj.distance_m < b.distance_m) {
            best[slot] = Some(Best {
                position: i,
                distance_m: proj.distance_m,
                arc_fraction: proj.arc_fraction,
            });
        }
    }
    RoadClass::ALL.iter().find_map(|&class| {
        best[class as usize].filter(|b| b.distance_m <= th.for_class(class))
    })
}

fn matched(idx: &TiledIndex, point: GpsPoint, best: Option<Best>) -> (MatchedPoint, MatchState) {
    let Some(b) = best else {
        return (MatchedPoint::off_road(point), MatchState::default());
    };
    let seg = &idx.segments()[b.position];
    let m = MatchedPoint {
        point,
        road: Some(seg.segment_id.clone()),
        road_class: Some(seg.route.road_class),
        milepost: milepost_at(idx, b.position, b.arc_fraction),
        snap_distance_m: Some(b.distance_m),
    };
    let state = MatchState {
        previous_road: m.road.clone(),
    };
    (m, state)
}

/// Matches one point. Roads are looked up in the tiles around the point.
/// The previous road wins while it is within `hint_m`; otherwise the
/// closest interstate within its threshold, then state road, then local
/// road; otherwise the point is off-road and the hint is cleared.
///
/// Fails only when a lazily loaded tile cannot be read.
pub fn match_point(
    idx: &TiledIndex,
    state: &MatchState,
    p: GpsPoint,
    th: &MatchThresholds,
) -> Result<(MatchedPoint, MatchState)> {
    let cell = geohash_encode(p.location, idx.precision())?;
    let candidates = idx.candidates_around(&cell)?;
    let best = choose(idx, state, p.location, &candidates, th);
    Ok(matched(idx, p, best))
}

/// Matches a day track in time order, threading the hint from point to
/// point. The hint starts empty for every track.
pub fn match_track(idx: &TiledIndex, track: &DayTrack, th: &MatchThresholds) -> Result<Vec<MatchedPoint>> {
    let mut state = MatchState::default();
    let mut cached: Option<(GeohashId, Vec<usize>)> = None;
    let mut out = Vec::with_capacity(track.points.len());
    for p in &track.points {
        let cell = geohash_encode(p.location, idx.precision())?;
        if cached.as_ref().is_none_or(|(c, _)| *c != cell) {
            let candidates = idx.candidates_around(&cell)?;
            cached = Some((cell, candidates));
        }
        let candidates = &cached.as_ref().expect("filled above").1;
        let best = choose(idx, &state, p.location, candidates, th);
        let (m, next) = matched(idx, p.clone(), best);
        state = next;
        out.push(m);
    }
    Ok(out)
}

fn milepost_at(idx: &TiledIndex, position: usize, arc_fraction: f64) -> Option<f64> {
    let seg = &idx.segments()[position];
    let route = idx.route(&seg.route.canonical_name)?;
    let arc = idx.centerline_arc(position, arc_fraction)?;
    route.milepost_at_arc(arc)
}

/// Fractional milepost of the point at `arc_fraction` along a segment:
/// the point is carried onto the route centerline and interpolated by arc
/// length between the bracketing markers, clamped to the end markers.
/// Absent when the route has fewer than two markers near its centerline.
pub fn milepost_of(idx: &TiledIndex, segment_id: &str, arc_fraction: f64) -> Option<f64> {
    milepost_at(idx, idx.segment_position(segment_id)?, arc_fraction)
}

/// Matched points of one vehicle on one local day.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTrack {
    pub vehicle_id: String,
    pub day: NaiveDate,
    pub points: Vec<MatchedPoint>,
}

pub type MatchedTracks = BTreeMap<TrackKey, MatchedTrack>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchedTrackRecord {
    day: NaiveDate,
    vehicle_id: String,
    points: Vec<MatchedPointRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchedPointRecord {
    t: DateTime<FixedOffset>,
    lat: f64,
    lon: f64,
    road: Option<String>,
    class: Option<RoadClass>,
    milepost: Option<f64>,
    snap_m: Option<f64>,
}

/// File name of a matched track: `<day>_<escaped vehicle id>.json`.
pub fn matched_track_file_name(day: NaiveDate, vehicle_id: &str) -> String {
    format!("{day}_{}.json", safe_file_stem(vehicle_id))
}

pub fn matched_track_json(track: &MatchedTrack) -> Vec<u8> {
    let record = MatchedTrackRecord {
        day: track.day,
        vehicle_id: track.vehicle_id.clone(),
        points: track
            .points
            .iter()
            .map(|m| MatchedPointRecord {
                t: m.point.time,
                lat: m.point.location.lat(),
                lon: m.point.location.lon(),
                road: m.road.clone(),
                class: m.road_class,
                milepost: m.milepost,
                snap_m: m.snap_distance_m,
            })
            .collect(),
    };
    json_line(&record)
}

/// Writes one JSON file per track into `dir`; returns the number written.
pub fn write_matched_tracks<'a>(
    dir: &Path,
    tracks: impl IntoIterator<Item = &'a MatchedTrack>,
) -> Result<usize> {
    let mut n = 0;
    for t in tracks {
        write_atomic(&dir.join(matched_track_file_name(t.day, &t.vehicle_id)), &matched_track_json(t))?;
        n += 1;
    }
    Ok(n)
}

pub fn read_matched_track(path: &Path) -> Result<MatchedTrack> {
    let record: MatchedTrackRecord = read_json(path)?;
    let name = path.display().to_string();
    let points = record
        .points
        .into_iter()
        .map(|p| {
            let location = Coordinate::new(p.lat, p.lon).map_err(|e| Error::format(&name, e.to_string()))?;
            if p.road.is_none() != p.class.is_none() {
                return Err(Error::format(&name, "point has a road without a class or vice versa"));
            }
            Ok(MatchedPoint {
                point: GpsPoint {
                    vehicle_id: record.vehicle_id.clone(),
                    time: p.t,
                    location,
                },
                road: p.road,
                road_class: p.class,
                milepost: p.milepost,
                snap_distance_m: p.snap_m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if points.windows(2).any(|w| w[0].point.time >= w[1].point.time) {
        return Err(Error::format(&name, "points are not in strictly increasing time order"));
    }
    Ok(MatchedTrack {
        vehicle_id: record.vehicle_id,
        day: record.day,
        points,
    })
}

fn looks_like_track_file(name: &str) -> bool {
    name.ends_with(".json")
        && name.len() > 11
        && name.as_bytes()[10] == b'_'
        && NaiveDate::parse_from_str(&name[..10], "%Y-%m-%d").is_ok()
}

/// Reads every `<day>_<vehicle>.json` file in `dir`; other files are
/// ignored.
pub fn read_matched_dir(dir: &Path) -> Result<MatchedTracks> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if looks_like_track_file(&name) {
            names.push(name);
        }
    }
    names.sort();
    let mut out = MatchedTracks::new();
    for name in names {
        let t = read_matched_track(&dir.join(&name))?;
        let key = (t.day, t.vehicle_id.clone());
        if out.insert(key, t).is_some() {
            return Err(Error::format(name, "duplicate track for this vehicle and day"));
        }
    }
    Ok(out)
}
