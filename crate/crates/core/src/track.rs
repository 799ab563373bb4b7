//! GPS ingestion into per-vehicle, per-local-day tracks, and sampling
//! interval statistics over those tracks.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, FixedOffset, LocalResult, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::Serialize;

use crate::error::Result;
use crate::geo::Coordinate;
use crate::tabular::{field, Table};

pub const DEFAULT_TIMEZONE: Tz = chrono_tz::America::Indiana::Indianapolis;

/// One telematics sample. `time` carries the configured zone's offset.
#[derive(Debug, Clone, PartialEq)]
pub struct GpsPoint {
    pub vehicle_id: String,
    pub time: DateTime<FixedOffset>,
    pub location: Coordinate,
}

/// All samples of one vehicle within one local calendar day, strictly
/// increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTrack {
    pub vehicle_id: String,
    pub day: NaiveDate,
    pub points: Vec<GpsPoint>,
}

/// `(day, vehicle_id)`; orders tracks by day first.
pub type TrackKey = (NaiveDate, String);

pub type DayTracks = BTreeMap<TrackKey, DayTrack>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number in the input (the header is line 1)
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub tracks: DayTracks,
    /// sorted by line
    pub rejects: Vec<Reject>,
    pub rows: usize,
    pub duplicates: usize,
}

impl IngestReport {
    pub fn point_count(&self) -> usize {
        self.tracks.values().map(|t| t.points.len()).sum()
    }
}

/// Parses a timestamp cell. Values with an explicit offset are taken as
/// is; bare local times (ISO-8601 or `MM/DD/YYYY HH:MM[:SS]`) are read in
/// `tz`, taking the earlier instant when a DST fold makes them ambiguous.
pub fn parse_timestamp(raw: &str, tz: Tz) -> std::result::Result<DateTime<Tz>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&tz));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%.f%z", "%Y-%m-%dT%H:%M%:z"] {
        if let Ok(t) = DateTime::parse_from_str(raw, fmt) {
            return Ok(t.with_timezone(&tz));
        }
    }
    const LOCAL_FORMATS: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%m/%d/%Y %H:%M:%S",
        "%m/%d/%Y %H:%M",
    ];
    let naive = LOCAL_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .ok_or_else(|| format!("unparseable timestamp {raw:?}"))?;
    match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => Ok(t),
        LocalResult::Ambiguous(early, _) => Ok(early),
        LocalResult::None => Err(format!("timestamp {raw:?} does not exist in {tz}")),
    }
}

struct Row {
    vehicle_id: String,
    instant: DateTime<Utc>,
    local: DateTime<Tz>,
    location: Coordinate,
    line: u64,
}

/// Reads a GPS table (`VehicleId, Timestamp, Lat, Lon`; other columns are
/// ignored) and groups it into local midnight-to-midnight day tracks.
///
/// Unparseable rows are collected as rejects. Rows identical in vehicle,
/// instant and position are dropped as duplicates. When one vehicle has two
/// different positions at the same instant, the one with the smaller
/// (lat, lon) is kept and the other rejected as a timestamp collision, so
/// the result does not depend on input row order.
pub fn ingest_gps(reader: impl Read, name: &str, tz: Tz) -> Result<IngestReport> {
    let table = Table::from_reader(reader, name.to_owned())?;
    ingest_table(table, tz)
}

pub fn ingest_gps_file(path: &Path, tz: Tz) -> Result<IngestReport> {
    ingest_table(Table::open(path)?, tz)
}

fn ingest_table<R: Read>(mut table: Table<R>, tz: Tz) -> Result<IngestReport> {
    if table.is_blank() {
        return Ok(IngestReport::default());
    }
    let cols = [
        table.require("VehicleId")?,
        table.require("Timestamp")?,
        table.require("Lat")?,
        table.require("Lon")?,
    ];
    let mut report = IngestReport::default();
    let mut rows: Vec<Row> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        match table.reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                line = record.position().map_or(line + 1, |p| p.line());
                report.rows += 1;
                match parse_row(&record, &cols, tz) {
                    Ok((vehicle_id, local, location)) => rows.push(Row {
                        vehicle_id,
                        instant: local.with_timezone(&Utc),
                        local,
                        location,
                        line,
                    }),
                    Err(reason) => report.rejects.push(Reject { line, reason }),
                }
            }
            Err(e) => {
                report.rows += 1;
                line = e.position().map_or(line + 1, |p| p.line());
                report.rejects.push(Reject {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                if !matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) {
                    // the reader cannot resynchronise after structural errors
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        break;
                    }
                }
            }
        }
    }

    let mut groups: BTreeMap<TrackKey, Vec<Row>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.local.date_naive(), row.vehicle_id.clone()))
            .or_default()
            .push(row);
    }
    for (key, mut group) in groups {
        group.sort_by(|a, b| {
            a.instant
                .cmp(&b.instant)
                .then(a.location.lat().total_cmp(&b.location.lat()))
                .then(a.location.lon().total_cmp(&b.location.lon()))
                .then(a.line.cmp(&b.line))
        });
        let mut points: Vec<GpsPoint> = Vec::with_capacity(group.len());
        // identical rows are adjacent after sorting, so comparing with the
        // previous row (kept or not) finds every duplicate
        let mut previous: Option<(DateTime<Utc>, Coordinate)> = None;
        for row in group {
            if let Some((t, loc)) = previous.replace((row.instant, row.location)) {
                if t == row.instant {
                    if loc == row.location {
                        report.duplicates += 1;
                    } else {
                        report.rejects.push(Reject {
                            line: row.line,
                            reason: "timestamp collision".into(),
                        });
                    }
                    continue;
                }
            }
            points.push(GpsPoint {
                vehicle_id: row.vehicle_id,
                time: row.local.fixed_offset(),
                location: row.location,
            });
        }
        report.tracks.insert(
            key.clone(),
            DayTrack {
                vehicle_id: key.1,
                day: key.0,
                points,
            },
        );
    }
    report.rejects.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.reason.cmp(&b.reason)));
    Ok(report)
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &[usize; 4],
    tz: Tz,
) -> std::result::Result<(String, DateTime<Tz>, Coordinate), String> {
    let vehicle = field(record, cols[0]);
    if vehicle.is_empty() {
        return Err("empty VehicleId".into());
    }
    let time = parse_timestamp(field(record, cols[1]), tz)?;
    let lat: f64 = field(record, cols[2])
        .parse()
        .map_err(|_| format!("invalid Lat {:?}", field(record, cols[2])))?;
    let lon: f64 = field(record, cols[3])
        .parse()
        .map_err(|_| format!("invalid Lon {:?}", field(record, cols[3])))?;
    let location = Coordinate::new(lat, lon).map_err(|e| e.to_string())?;
    Ok((vehicle.to_owned(), time, location))
}

/// Rejects as a `Line,Reason` table.
pub fn rejects_csv(rejects: &[Reject]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Line", "Reason"]).expect("in-memory write");
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory writer")
}

/// Interval buckets reported by [`sampling_stats`], as inclusive second
/// ranges (`None` = open upper end).
pub const INTERVAL_BUCKETS: [(&str, i64, Option<i64>); 6] = [
    ("<60s", i64::MIN, Some(59)),
    ("60s", 60, Some(60)),
    ("61-120s", 61, Some(120)),
    ("121-300s", 121, Some(300)),
    ("301-600s", 301, Some(600)),
    (">600s", 601, None),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingStats {
    pub total_points: u64,
    pub total_tracks: u64,
    pub total_intervals: u64,
    /// smallest interval in seconds; 0 when there are no intervals
    pub min_interval: i64,
    pub intervals_exactly_1min: u64,
    pub intervals_over_5min: u64,
    pub fraction_exactly_1min: f64,
    pub fraction_over_5min: f64,
    pub histogram: Vec<(String, u64)>,
}

fn whole_seconds(t: &DateTime<FixedOffset>) -> i64 {
    t.timestamp() + i64::from(t.timestamp_subsec_nanos() >= 500_000_000)
}

/// Interval statistics over adjacent samples within each track (never
/// across tracks). Timestamps are rounded to whole seconds first; "exactly
/// one minute" is 60 s and "over five minutes" is more than 300 s.
pub fn sampling_stats<'a>(tracks: impl IntoIterator<Item = &'a DayTrack>) -> SamplingStats {
    let mut total_points = 0u64;
    let mut total_tracks = 0u64;
    let mut counts = [0u64; INTERVAL_BUCKETS.len()];
    let mut min_interval: Option<i64> = None;
    let (mut one_minute, mut over_five) = (0u64, 0u64);
    for track in tracks {
        total_tracks += 1;
        total_points += track.points.len() as u64;
        for w in track.points.windows(2) {
            let gap = whole_seconds(&w[1].time) - whole_seconds(&w[0].time);
            min_interval = Some(min_interval.map_or(gap, |m| m.min(gap)));
            one_minute += u64::from(gap == 60);
            over_five += u64::from(gap > 300);
            let bucket = INTERVAL_BUCKETS
                .iter()
                .position(|&(_, lo, hi)| gap >= lo && hi.is_none_or(|h| gap <= h))
                .expect("buckets cover every interval");
            counts[bucket] += 1;
        }
    }
    let total_intervals: u64 = counts.iter().sum();
    let ratio = |n: u64| if total_intervals == 0 { 0.0 } else { n as f64 / total_intervals as f64 };
    SamplingStats {
        total_points,
        total_tracks,
        total_intervals,
        min_interval: min_interval.unwrap_or(0),
        intervals_exactly_1min: one_minute,
        intervals_over_5min: over_five,
        fraction_exactly_1min: ratio(one_minute),
        fraction_over_5min: ratio(over_five),
        histogram: INTERVAL_BUCKETS
            .iter()
            .zip(counts)
            .map(|(&(label, ..), n)| (label.to_owned(), n))
            .collect(),
    }
}
