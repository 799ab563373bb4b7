use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{normalize_lon, Coordinate};
use crate::error::{Error, Result};

pub const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

const MAX_PRECISION: usize = 12;

/// A validated geohash string: lowercase base-32, 1 to 12 characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeohashId(String);

impl GeohashId {
    pub fn parse(code: &str) -> Result<Self> {
        if code.is_empty() || code.len() > MAX_PRECISION {
            return Err(Error::InvalidArgument(format!(
                "geohash {code:?} must have 1 to {MAX_PRECISION} characters"
            )));
        }
        if let Some(bad) = code.bytes().find(|b| !GEOHASH_ALPHABET.contains(b)) {
            return Err(Error::InvalidArgument(format!(
                "geohash {code:?} contains {:?}, not in the geohash alphabet",
                bad as char
            )));
        }
        Ok(GeohashId(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }

    /// The latitude/longitude rectangle covered by this cell.
    pub fn bounds(&self) -> Bounds {
        let mut lat = (-90.0, 90.0);
        let mut lon = (-180.0, 180.0);
        let mut even = true;
        for b in self.0.bytes() {
            let value = GEOHASH_ALPHABET.iter().position(|&a| a == b).unwrap_or(0);
            for shift in (0..5).rev() {
                let bit = (value >> shift) & 1 == 1;
                let range = if even { &mut lon } else { &mut lat };
                let mid = (range.0 + range.1) / 2.0;
                if bit {
                    range.0 = mid;
                } else {
                    range.1 = mid;
                }
                even = !even;
            }
        }
        Bounds {
            min_lat: lat.0,
            max_lat: lat.1,
            min_lon: lon.0,
            max_lon: lon.1,
        }
    }
}

impl fmt::Display for GeohashId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for GeohashId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        GeohashId::parse(&s)
    }
}

impl From<GeohashId> for String {
    fn from(g: GeohashId) -> Self {
        g.0
    }
}

/// Axis-aligned latitude/longitude box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl Bounds {
    pub fn contains(&self, c: Coordinate) -> bool {
        (self.min_lat..=self.max_lat).contains(&c.lat())
            && (self.min_lon..=self.max_lon).contains(&c.lon())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }

    pub fn height_deg(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn width_deg(&self) -> f64 {
        self.max_lon - self.min_lon
    }
}

/// Standard interleaved-bit geohash, longitude bit first.
pub fn geohash_encode(c: Coordinate, precision: usize) -> Result<GeohashId> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(Error::InvalidArgument(format!(
            "geohash precision {precision} outside [1, {MAX_PRECISION}]"
        )));
    }
    Ok(encode_unchecked(c.lat(), c.lon(), precision))
}

fn encode_unchecked(lat: f64, lon: f64, precision: usize) -> GeohashId {
    let mut lat_range = (-90.0, 90.0);
    let mut lon_range = (-180.0, 180.0);
    let mut code = String::with_capacity(precision);
    let mut even = true;
    let mut bits = 0u8;
    let mut value = 0usize;
    while code.len() < precision {
        let (range, x) = if even {
            (&mut lon_range, lon)
        } else {
            (&mut lat_range, lat)
        };
        let mid = (range.0 + range.1) / 2.0;
        value <<= 1;
        if x >= mid {
            value |= 1;
            range.0 = mid;
        } else {
            range.1 = mid;
        }
        even = !even;
        bits += 1;
        if bits == 5 {
            code.push(GEOHASH_ALPHABET[value] as char);
            bits = 0;
            value = 0;
        }
    }
    GeohashId(code)
}

/// The cell itself plus its (up to) eight grid neighbors, sorted.
///
/// Longitude wraps at the antimeridian; rows beyond a pole are omitted.
pub fn geohash_neighbors(g: &GeohashId) -> Vec<GeohashId> {
    let bounds = g.bounds();
    let (lat, lon) = bounds.center();
    let (h, w) = (bounds.height_deg(), bounds.width_deg());
    let mut out = BTreeSet::new();
    for dy in [-1.0, 0.0, 1.0] {
        let nlat = lat + dy * h;
        if !(-90.0..=90.0).contains(&nlat) {
            continue;
        }
        for dx in [-1.0, 0.0, 1.0] {
            let nlon = normalize_lon(lon + dx * w);
            out.insert(encode_unchecked(nlat, nlon, g.precision()));
        }
    }
    out.into_iter().collect()
}
