//! Time a vehicle spent on one inventory segment during one local day.

use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::inventory::{MileMarker, PostRange, RoadSegment, RouteRef, TiledIndex};
use crate::matching::MatchedTracks;

/// Longest gap credited between two consecutive samples, in seconds.
pub const DEFAULT_DURATION_CAP_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    None,
    NoRouteRef,
    NoMileMarkers,
    PostNotFound,
    NoTrack,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::None => "None",
            FailureReason::NoRouteRef => "NoRouteRef",
            FailureReason::NoMileMarkers => "NoMileMarkers",
            FailureReason::PostNotFound => "PostNotFound",
            FailureReason::NoTrack => "NoTrack",
        }
    }

    pub fn is_failure(&self) -> bool {
        *self != FailureReason::None
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive milepost range a point must fall in to count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EffectiveBounds {
    pub fn contains(&self, milepost: f64) -> bool {
        milepost >= self.lower && milepost <= self.upper
    }
}

/// Milepost bounds of a segment, or `Ok(None)` when it lacks a start or end
/// post (the whole route then counts).
///
/// The bounds are `start_post + start_offset` and `end_post + end_offset`.
/// The route must have a marker at the start post, or at the post before it
/// when the start offset is negative, and one at the end post, or the post
/// after it when the end offset is positive.
pub fn effective_bounds(posts: &PostRange, markers: &[MileMarker]) -> Result<Option<EffectiveBounds>, FailureReason> {
    let (Some(start), Some(end)) = (posts.start_post(), posts.end_post()) else {
        return Ok(None);
    };
    if markers.is_empty() {
        return Err(FailureReason::NoMileMarkers);
    }
    let start_offset = posts.start_offset().unwrap_or(0.0);
    let end_offset = posts.end_offset().unwrap_or(0.0);
    let start_marker = if start_offset < 0.0 { start.checked_sub(1) } else { Some(start) };
    let end_marker = if end_offset > 0.0 { end.checked_add(1) } else { Some(end) };
    let has = |post: Option<u32>| post.is_some_and(|p| markers.iter().any(|m| m.post == p));
    if !has(start_marker) || !has(end_marker) {
        return Err(FailureReason::PostNotFound);
    }
    let a = start as f64 + start_offset;
    let b = end as f64 + end_offset;
    Ok(Some(EffectiveBounds {
        lower: a.min(b),
        upper: a.max(b),
    }))
}

/// The parts of a segment the time computation looks at. Work orders and
/// activities describe segments by route and posts without geometry.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRef<'a> {
    pub id: &'a str,
    pub route: &'a RouteRef,
    pub posts: &'a PostRange,
}

impl<'a> From<&'a RoadSegment> for SegmentRef<'a> {
    fn from(s: &'a RoadSegment) -> Self {
        SegmentRef {
            id: &s.segment_id,
            route: &s.route,
            posts: &s.posts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentTimeResult {
    pub segment_id: String,
    pub vehicle_id: String,
    pub day: NaiveDate,
    pub computed_seconds: f64,
    pub computed_hours: f64,
    /// points on the segment, including a final point that adds no time
    pub points_used: usize,
    pub failure_reason: FailureReason,
    /// milepost range applied; absent for whole-route segments
    pub bounds: Option<EffectiveBounds>,
    pub first_time: Option<DateTime<FixedOffset>>,
    pub last_time: Option<DateTime<FixedOffset>>,
}

impl SegmentTimeResult {
    fn empty(seg: SegmentRef<'_>, vehicle_id: &str, day: NaiveDate, reason: FailureReason) -> Self {
        SegmentTimeResult {
            segment_id: seg.id.to_owned(),
            vehicle_id: vehicle_id.to_owned(),
            day,
            computed_seconds: 0.0,
            computed_hours: 0.0,
            points_used: 0,
            failure_reason: reason,
            bounds: None,
            first_time: None,
            last_time: None,
        }
    }
}

/// Seconds `vehicle_id` spent on `seg` during `day`.
///
/// A point counts when its matched road belongs to the segment's route
/// and, if the segment has posts, its milepost lies within the effective
/// bounds. Each counted point adds the time to the next point of the day
/// track, capped at `cap_seconds`; the last point of the track adds
/// nothing. Segments are compared by canonical route, so `seg` need not be
/// in the index.
pub fn compute_seconds<'a>(
    seg: impl Into<SegmentRef<'a>>,
    vehicle_id: &str,
    day: NaiveDate,
    matched: &MatchedTracks,
    idx: &TiledIndex,
    cap_seconds: f64,
) -> SegmentTimeResult {
    let seg = seg.into();
    if !seg.route.is_parsed() {
        return SegmentTimeResult::empty(seg, vehicle_id, day, FailureReason::NoRouteRef);
    }
    let route = seg.route.canonical_name.as_str();
    let bounds = match effective_bounds(seg.posts, idx.markers(route)) {
        Ok(b) => b,
        Err(reason) => return SegmentTimeResult::empty(seg, vehicle_id, day, reason),
    };
    let Some(track) = matched.get(&(day, vehicle_id.to_owned())).filter(|t| !t.points.is_empty()) else {
        return SegmentTimeResult::empty(seg, vehicle_id, day, FailureReason::NoTrack);
    };

    let mut result = SegmentTimeResult::empty(seg, vehicle_id, day, FailureReason::None);
    result.bounds = bounds;
    let points = &track.points;
    for (i, point) in points.iter().enumerate() {
        let on_route = point
            .road
            .as_deref()
            .and_then(|id| idx.segment(id))
            .is_some_and(|s| s.route.canonical_name == route);
        if !on_route {
            continue;
        }
        if let Some(b) = bounds {
            if !point.milepost.is_some_and(|m| b.contains(m)) {
                continue;
            }
        }
        result.points_used += 1;
        result.first_time.get_or_insert(point.point.time);
        result.last_time = Some(point.point.time);
        if let Some(next) = points.get(i + 1) {
            let gap = (next.point.time - point.point.time)
                .num_nanoseconds()
                .map_or(f64::INFINITY, |n| n as f64 / 1e9);
            result.computed_seconds += gap.min(cap_seconds);
        }
    }
    result.computed_hours = result.computed_seconds / 3600.0;
    result
}
