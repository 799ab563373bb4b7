use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::{DEFAULT_INDEX_PRECISION, MAX_INDEX_PRECISION, MIN_INDEX_PRECISION};
use crate::matching::MatchThresholds;
use crate::segment_time::DEFAULT_DURATION_CAP_S;

/// Settings shared by every batch command. Serialized into each report so
/// a result can be traced back to the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// IANA zone used for local days and zone-less timestamps
    pub timezone: String,
    pub precision: usize,
    pub thresholds: MatchThresholds,
    pub cap_seconds: f64,
    /// hours
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            timezone: crate::track::DEFAULT_TIMEZONE.name().to_owned(),
            precision: DEFAULT_INDEX_PRECISION,
            thresholds: MatchThresholds::default(),
            cap_seconds: DEFAULT_DURATION_CAP_S,
            abs_tol: 0.25,
            rel_tol: 0.10,
        }
    }
}

impl RunConfig {
    pub fn tz(&self) -> Result<Tz> {
        self.timezone
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("unknown timezone {:?}", self.timezone)))
    }

    pub fn validate(&self) -> Result<()> {
        self.tz()?;
        if !(MIN_INDEX_PRECISION..=MAX_INDEX_PRECISION).contains(&self.precision) {
            return Err(Error::InvalidArgument(format!(
                "precision {} outside [{MIN_INDEX_PRECISION}, {MAX_INDEX_PRECISION}]",
                self.precision
            )));
        }
        self.thresholds.validate()?;
        if !(self.cap_seconds.is_finite() && self.cap_seconds > 0.0) {
            return Err(Error::InvalidArgument(format!("cap_seconds must be positive, got {}", self.cap_seconds)));
        }
        for (name, v) in [("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// One-line JSON rendering used in report headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
