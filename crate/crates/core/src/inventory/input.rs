use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::{Coordinate, Polyline};
use crate::tabular::{field, optional, optional_post, Table};

use super::{road_name_to_type, MileMarker, PostRange, RoadSegment, RouteRef};

/// Reads the road inventory table:
/// `SegmentId, RouteRef, StartPost, EndPost, StartOffset, EndOffset, Geometry`
/// with geometry as a WKT `LINESTRING` in lon/lat order. Any bad row fails
/// the whole read with its line number.
pub fn read_inventory(path: &Path) -> Result<Vec<RoadSegment>> {
    parse_inventory(Table::open(path)?)
}

pub fn read_inventory_from(reader: impl Read, name: &str) -> Result<Vec<RoadSegment>> {
    parse_inventory(Table::from_reader(reader, name.to_owned())?)
}

fn parse_inventory<R: Read>(mut table: Table<R>) -> Result<Vec<RoadSegment>> {
    let cols = [
        table.require("SegmentId")?,
        table.require("RouteRef")?,
        table.require("StartPost")?,
        table.require("EndPost")?,
        table.require("StartOffset")?,
        table.require("EndOffset")?,
        table.require("Geometry")?,
    ];
    let name = table.name.clone();
    let mut out = Vec::new();
    for record in table.reader.records() {
        let record = record.map_err(|e| Error::format(&name, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            file: name.clone(),
            line,
            message,
        };
        let get = |i: usize| field(&record, cols[i]);
        let id = get(0);
        if id.is_empty() {
            return Err(row_err("empty SegmentId".into()));
        }
        let posts = (|| -> std::result::Result<PostRange, String> {
            PostRange::new(
                optional_post(get(2), "StartPost")?,
                optional_post(get(3), "EndPost")?,
                optional(get(4), "StartOffset")?,
                optional(get(5), "EndOffset")?,
            )
            .map_err(|e| e.to_string())
        })()
        .map_err(row_err)?;
        let geometry = parse_linestring(get(6)).map_err(row_err)?;
        out.push(RoadSegment {
            segment_id: id.to_owned(),
            route: RouteRef::parse_lenient(get(1)),
            geometry,
            posts,
        });
    }
    Ok(out)
}

/// Reads the mile marker table: `RouteRef, Post, Lat, Lon`.
pub fn read_markers(path: &Path) -> Result<Vec<MileMarker>> {
    parse_markers(Table::open(path)?)
}

pub fn read_markers_from(reader: impl Read, name: &str) -> Result<Vec<MileMarker>> {
    parse_markers(Table::from_reader(reader, name.to_owned())?)
}

fn parse_markers<R: Read>(mut table: Table<R>) -> Result<Vec<MileMarker>> {
    let cols = [
        table.require("RouteRef")?,
        table.require("Post")?,
        table.require("Lat")?,
        table.require("Lon")?,
    ];
    let name = table.name.clone();
    let mut out = Vec::new();
    for record in table.reader.records() {
        let record = record.map_err(|e| Error::format(&name, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            file: name.clone(),
            line,
            message,
        };
        let get = |i: usize| field(&record, cols[i]);
        let route = road_name_to_type(get(0)).map_err(|e| row_err(e.to_string()))?;
        let post = optional_post(get(1), "Post")
            .map_err(&row_err)?
            .ok_or_else(|| row_err("empty Post".into()))?;
        let lat: f64 = get(2).parse().map_err(|_| row_err(format!("invalid Lat {:?}", get(2))))?;
        let lon: f64 = get(3).parse().map_err(|_| row_err(format!("invalid Lon {:?}", get(3))))?;
        let location = Coordinate::new(lat, lon).map_err(|e| row_err(e.to_string()))?;
        out.push(MileMarker {
            route,
            post,
            location,
        });
    }
    Ok(out)
}

fn parse_linestring(raw: &str) -> std::result::Result<Polyline, String> {
    let parsed = wkt::Wkt::<f64>::from_str(raw).map_err(|e| format!("invalid WKT geometry: {e}"))?;
    let wkt::Wkt::LineString(ls) = parsed else {
        return Err("geometry must be a LINESTRING".into());
    };
    let vertices = ls
        .coords()
        .iter()
        .map(|c| Coordinate::new(c.y, c.x))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Polyline::new(vertices).map_err(|e| e.to_string())
}
