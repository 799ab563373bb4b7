use crate::error::{Error, Result};
use crate::geo::{Coordinate, Polyline};

use super::RouteRef;

/// Linear-reference extent of a segment or work order: integer start/end
/// posts, each with an optional signed offset in miles.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PostRange {
    start_post: Option<u32>,
    end_post: Option<u32>,
    start_offset: Option<f64>,
    end_offset: Option<f64>,
}

impl PostRange {
    pub fn new(
        start_post: Option<u32>,
        end_post: Option<u32>,
        start_offset: Option<f64>,
        end_offset: Option<f64>,
    ) -> Result<Self> {
        if let (Some(s), Some(e)) = (start_post, end_post) {
            if s > e {
                return Err(Error::InvalidArgument(format!(
                    "start post {s} is after end post {e}"
                )));
            }
        }
        for (name, post, offset) in [
            ("start", start_post, start_offset),
            ("end", end_post, end_offset),
        ] {
            if let Some(o) = offset {
                if post.is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "{name} offset given without a {name} post"
                    )));
                }
                if !o.is_finite() || o.abs() >= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "{name} offset {o} must be strictly between -1 and 1 mile"
                    )));
                }
            }
        }
        Ok(PostRange {
            start_post,
            end_post,
            start_offset,
            end_offset,
        })
    }

    /// No posts at all: the whole road.
    pub fn whole_road() -> Self {
        PostRange::default()
    }

    pub fn posts(start: u32, end: u32) -> Result<Self> {
        PostRange::new(Some(start), Some(end), None, None)
    }

    pub fn start_post(&self) -> Option<u32> {
        self.start_post
    }

    pub fn end_post(&self) -> Option<u32> {
        self.end_post
    }

    pub fn start_offset(&self) -> Option<f64> {
        self.start_offset
    }

    pub fn end_offset(&self) -> Option<f64> {
        self.end_offset
    }
}

/// One entry of the road inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub segment_id: String,
    pub route: RouteRef,
    pub geometry: Polyline,
    pub posts: PostRange,
}

/// A surveyed reference point on a route.
#[derive(Debug, Clone, PartialEq)]
pub struct MileMarker {
    pub route: RouteRef,
    pub post: u32,
    pub location: Coordinate,
}
