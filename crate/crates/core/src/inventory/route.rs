use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Road hierarchy used when choosing between nearby roads. Declaration order
/// is priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoadClass {
    Interstate,
    StateRoad,
    LocalRoad,
}

impl RoadClass {
    pub const ALL: [RoadClass; 3] = [RoadClass::Interstate, RoadClass::StateRoad, RoadClass::LocalRoad];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoadClass::Interstate => "Interstate",
            RoadClass::StateRoad => "StateRoad",
            RoadClass::LocalRoad => "LocalRoad",
        }
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A road name as written in the source data plus its parsed class and
/// canonical name. `canonical_name` is empty exactly when parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RouteRef {
    pub raw: String,
    pub road_class: RoadClass,
    pub canonical_name: String,
}

impl RouteRef {
    /// Route ref for a blank or otherwise unusable name. Classed as a local
    /// road so its geometry still participates in matching.
    pub fn unparsed(raw: impl Into<String>) -> Self {
        RouteRef {
            raw: raw.into(),
            road_class: RoadClass::LocalRoad,
            canonical_name: String::new(),
        }
    }

    /// Parses `raw`, falling back to [`RouteRef::unparsed`].
    pub fn parse_lenient(raw: &str) -> Self {
        road_name_to_type(raw).unwrap_or_else(|_| RouteRef::unparsed(raw))
    }

    pub fn is_parsed(&self) -> bool {
        !self.canonical_name.is_empty()
    }
}

// (prefix, class, canonical prefix), matched case-insensitively in order
const PREFIXES: &[(&str, RoadClass, &str)] = &[
    ("I-", RoadClass::Interstate, "I"),
    ("I ", RoadClass::Interstate, "I"),
    ("US-", RoadClass::StateRoad, "US"),
    ("US ", RoadClass::StateRoad, "US"),
    ("SR-", RoadClass::StateRoad, "SR"),
    ("SR ", RoadClass::StateRoad, "SR"),
    ("S.R.", RoadClass::StateRoad, "SR"),
];

/// Classifies a route reference and produces its canonical name.
///
/// | input prefix (any case)         | class      | canonical  |
/// |---------------------------------|------------|------------|
/// | `I-`, `I `                      | Interstate | `I-<n>`    |
/// | `US-`, `US `                    | StateRoad  | `US-<n>`   |
/// | `SR-`, `SR `, `S.R.`            | StateRoad  | `SR-<n>`   |
/// | anything else                   | LocalRoad  | trimmed    |
///
/// A recognised prefix with nothing after it is treated as a local road name.
pub fn road_name_to_type(raw: &str) -> Result<RouteRef> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::NoRouteRef(raw.to_owned()));
    }
    let upper = trimmed.to_uppercase();
    for (prefix, class, canonical_prefix) in PREFIXES {
        if let Some(rest) = upper.strip_prefix(prefix) {
            let rest = rest.trim_start_matches(['-', ' ']).trim();
            if rest.is_empty() {
                break;
            }
            return Ok(RouteRef {
                raw: raw.to_owned(),
                road_class: *class,
                canonical_name: format!("{canonical_prefix}-{rest}"),
            });
        }
    }
    Ok(RouteRef {
        raw: raw.to_owned(),
        road_class: RoadClass::LocalRoad,
        canonical_name: trimmed.to_owned(),
    })
}
