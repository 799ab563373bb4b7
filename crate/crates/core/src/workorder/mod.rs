//! Work-order verification and creation on top of the segment time
//! computation, plus the per-work-order day spread histogram.

mod report;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::inventory::{PostRange, RouteRef, TiledIndex};
use crate::matching::MatchedTracks;
use crate::segment_time::{compute_seconds, SegmentRef, SegmentTimeResult};
use crate::tabular::{field, optional, optional_post, Table};
use crate::track::Reject;

pub use report::{creation_csv, creation_json, verification_csv, verification_json};

/// A reported maintenance activity on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkOrder {
    /// input line, for diagnostics
    pub line: u64,
    pub wo_id: String,
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub route: RouteRef,
    pub posts: PostRange,
    pub reported_hours: f64,
}

/// A vehicle/date/road triple for which a work order should be created.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleActivity {
    pub line: u64,
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub route: RouteRef,
    pub posts: PostRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub rejects: Vec<Reject>,
}

/// Human-readable segment name: the route and, when present, its posts.
pub fn segment_label(route: &RouteRef, posts: &PostRange) -> String {
    let name = if route.is_parsed() { route.canonical_name.as_str() } else { route.raw.trim() };
    match (posts.start_post(), posts.end_post()) {
        (Some(s), Some(e)) => format!("{name} {s}-{e}"),
        _ => name.to_owned(),
    }
}

fn segment_ref<'a>(label: &'a str, route: &'a RouteRef, posts: &'a PostRange) -> SegmentRef<'a> {
    SegmentRef {
        id: label,
        route,
        posts,
    }
}

pub(crate) fn parse_date(raw: &str) -> std::result::Result<NaiveDate, String> {
    let day = raw.split_whitespace().next().unwrap_or("");
    ["%Y-%m-%d", "%m/%d/%Y", "%Y/%m/%d"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(day, f).ok())
        .ok_or_else(|| format!("invalid Date {raw:?}"))
}

fn parse_posts(
    record: &csv::StringRecord,
    cols: [Option<usize>; 4],
) -> std::result::Result<PostRange, String> {
    let get = |c: Option<usize>| c.map_or("", |i| field(record, i));
    PostRange::new(
        optional_post(get(cols[0]), "StartPost")?,
        optional_post(get(cols[1]), "EndPost")?,
        optional(get(cols[2]), "StartOffset")?,
        optional(get(cols[3]), "EndOffset")?,
    )
    .map_err(|e| e.to_string())
}

fn parse_rows<R: Read, T>(
    mut table: Table<R>,
    required: &[&str],
    mut parse: impl FnMut(&csv::StringRecord, &[usize], [Option<usize>; 4]) -> std::result::Result<T, String>,
) -> Result<Parsed<T>> {
    let cols = required.iter().map(|c| table.require(c)).collect::<Result<Vec<_>>>()?;
    let post_cols = ["StartPost", "EndPost", "StartOffset", "EndOffset"].map(|c| table.column(c));
    let mut out = Parsed {
        rows: Vec::new(),
        rejects: Vec::new(),
    };
    let mut line = 1;
    for record in table.reader.records() {
        match record {
            Ok(record) => {
                line = record.position().map_or(line + 1, |p| p.line());
                match parse(&record, &cols, post_cols) {
                    Ok(row) => out.rows.push(row),
                    Err(reason) => out.rejects.push(Reject { line, reason }),
                }
            }
            Err(e) => {
                line = e.position().map_or(line + 1, |p| p.line());
                out.rejects.push(Reject {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
            }
        }
    }
    Ok(out)
}

fn non_empty<'r>(record: &'r csv::StringRecord, col: usize, what: &str) -> std::result::Result<&'r str, String> {
    let v = field(record, col);
    if v.is_empty() {
        Err(format!("empty {what}"))
    } else {
        Ok(v)
    }
}

/// Reads a work-order table:
/// `WOId, VehicleId, Date, RouteRef, StartPost, EndPost, StartOffset,
/// EndOffset, ReportedHrs`. A blank RouteRef is kept (it verifies as
/// NO_DATA); malformed rows become rejects.
pub fn parse_work_orders(reader: impl Read, name: &str) -> Result<Parsed<WorkOrder>> {
    parse_work_order_table(Table::from_reader(reader, name.to_owned())?)
}

pub fn read_work_orders(path: &Path) -> Result<Parsed<WorkOrder>> {
    parse_work_order_table(Table::open(path)?)
}

fn parse_work_order_table<R: Read>(table: Table<R>) -> Result<Parsed<WorkOrder>> {
    const REQUIRED: [&str; 9] = [
        "WOId", "VehicleId", "Date", "RouteRef", "StartPost", "EndPost", "StartOffset", "EndOffset", "ReportedHrs",
    ];
    parse_rows(table, &REQUIRED, |record, cols, post_cols| {
        let reported_raw = non_empty(record, cols[8], "ReportedHrs")?;
        let reported_hours: f64 = reported_raw
            .parse()
            .map_err(|_| format!("invalid ReportedHrs {reported_raw:?}"))?;
        if !(reported_hours.is_finite() && reported_hours >= 0.0) {
            return Err(format!("ReportedHrs must be a non-negative number, got {reported_raw:?}"));
        }
        Ok(WorkOrder {
            line: record.position().map_or(0, |p| p.line()),
            wo_id: non_empty(record, cols[0], "WOId")?.to_owned(),
            vehicle_id: non_empty(record, cols[1], "VehicleId")?.to_owned(),
            date: parse_date(field(record, cols[2]))?,
            route: RouteRef::parse_lenient(field(record, cols[3])),
            posts: parse_posts(record, post_cols)?,
            reported_hours,
        })
    })
}

/// Reads an activity table: `VehicleId, Date, RouteRef`, with optional
/// `StartPost, EndPost, StartOffset, EndOffset`.
pub fn parse_activities(reader: impl Read, name: &str) -> Result<Parsed<VehicleActivity>> {
    parse_activity_table(Table::from_reader(reader, name.to_owned())?)
}

pub fn read_activities(path: &Path) -> Result<Parsed<VehicleActivity>> {
    parse_activity_table(Table::open(path)?)
}

fn parse_activity_table<R: Read>(table: Table<R>) -> Result<Parsed<VehicleActivity>> {
    parse_rows(table, &["VehicleId", "Date", "RouteRef"], |record, cols, post_cols| {
        Ok(VehicleActivity {
            line: record.position().map_or(0, |p| p.line()),
            vehicle_id: non_empty(record, cols[0], "VehicleId")?.to_owned(),
            date: parse_date(field(record, cols[1]))?,
            route: RouteRef::parse_lenient(field(record, cols[2])),
            posts: parse_posts(record, post_cols)?,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerifyStatus {
    #[serde(rename = "MATCH")]
    Match,
    #[serde(rename = "MISMATCH")]
    Mismatch,
    #[serde(rename = "NO_DATA")]
    NoData,
}

impl VerifyStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerifyStatus::Match => "MATCH",
            VerifyStatus::Mismatch => "MISMATCH",
            VerifyStatus::NoData => "NO_DATA",
        }
    }
}

/// MATCH when `|computed - reported| <= max(abs_tol, rel_tol * reported)`;
/// NO_DATA whenever the computation failed.
pub fn verify_status(result: &SegmentTimeResult, reported_hours: f64, abs_tol: f64, rel_tol: f64) -> VerifyStatus {
    if result.failure_reason.is_failure() {
        return VerifyStatus::NoData;
    }
    if (result.computed_hours - reported_hours).abs() <= abs_tol.max(rel_tol * reported_hours) {
        VerifyStatus::Match
    } else {
        VerifyStatus::Mismatch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub order: WorkOrder,
    pub segment: String,
    pub result: SegmentTimeResult,
    /// computed / reported; absent when nothing was reported
    pub match_ratio: Option<f64>,
    pub status: VerifyStatus,
    /// days between the first and last date of rows sharing this WOId,
    /// inclusive
    pub spread_days: u32,
}

impl VerificationRecord {
    pub fn computed_hours(&self) -> f64 {
        self.result.computed_hours
    }

    pub fn is_multi_day(&self) -> bool {
        self.spread_days > 1
    }
}

fn spreads(orders: &[WorkOrder]) -> BTreeMap<&str, u32> {
    let mut range: BTreeMap<&str, (NaiveDate, NaiveDate)> = BTreeMap::new();
    for o in orders {
        let r = range.entry(&o.wo_id).or_insert((o.date, o.date));
        r.0 = r.0.min(o.date);
        r.1 = r.1.max(o.date);
    }
    range
        .into_iter()
        .map(|(id, (lo, hi))| (id, (hi - lo).num_days() as u32 + 1))
        .collect()
}

/// One record per order, in input order. Each order is evaluated on its
/// own date; orders whose WOId also appears on other dates are marked by
/// `spread_days > 1`.
pub fn verify(orders: &[WorkOrder], matched: &MatchedTracks, idx: &TiledIndex, cfg: &RunConfig) -> Vec<VerificationRecord> {
    let spread = spreads(orders);
    orders
        .iter()
        .map(|o| {
            let segment = segment_label(&o.route, &o.posts);
            let result = compute_seconds(
                segment_ref(&segment, &o.route, &o.posts),
                &o.vehicle_id,
                o.date,
                matched,
                idx,
                cfg.cap_seconds,
            );
            let status = verify_status(&result, o.reported_hours, cfg.abs_tol, cfg.rel_tol);
            VerificationRecord {
                match_ratio: (o.reported_hours > 0.0).then(|| result.computed_hours / o.reported_hours),
                status,
                spread_days: spread[o.wo_id.as_str()],
                segment,
                result,
                order: o.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CreateStatus {
    #[serde(rename = "OK")]
    Ok,
    /// data was available but the vehicle never ran on the segment
    #[serde(rename = "ZERO")]
    Zero,
    #[serde(rename = "NO_DATA")]
    NoData,
}

impl CreateStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CreateStatus::Ok => "OK",
            CreateStatus::Zero => "ZERO",
            CreateStatus::NoData => "NO_DATA",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreationRecord {
    pub activity: VehicleActivity,
    pub segment: String,
    /// start and end times are the first and last counted samples
    pub result: SegmentTimeResult,
    pub status: CreateStatus,
}

impl CreationRecord {
    pub fn total_hours(&self) -> f64 {
        self.result.computed_hours
    }
}

/// One proposed work order per activity, in input order, including those
/// that computed zero hours.
pub fn create_orders(
    activities: &[VehicleActivity],
    matched: &MatchedTracks,
    idx: &TiledIndex,
    cfg: &RunConfig,
) -> Vec<CreationRecord> {
    activities
        .iter()
        .map(|a| {
            let segment = segment_label(&a.route, &a.posts);
            let result = compute_seconds(
                segment_ref(&segment, &a.route, &a.posts),
                &a.vehicle_id,
                a.date,
                matched,
                idx,
                cfg.cap_seconds,
            );
            let status = if result.failure_reason.is_failure() {
                CreateStatus::NoData
            } else if result.computed_seconds > 0.0 {
                CreateStatus::Ok
            } else {
                CreateStatus::Zero
            };
            CreationRecord {
                activity: a.clone(),
                segment,
                result,
                status,
            }
        })
        .collect()
}

/// Number of distinct WOIds per day spread, with every spread from 1 to
/// the largest observed present (zero-filled).
pub fn spread_histogram(orders: &[WorkOrder]) -> BTreeMap<u32, u64> {
    let spread = spreads(orders);
    let max = spread.values().copied().max().unwrap_or(0);
    let mut hist: BTreeMap<u32, u64> = (1..=max).map(|d| (d, 0)).collect();
    for d in spread.values() {
        *hist.get_mut(d).expect("dense keys") += 1;
    }
    hist
}
