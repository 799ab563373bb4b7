use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::Serialize;

use crate::config::RunConfig;
use crate::fsutil::json_line;
use crate::inventory::PostRange;
use crate::segment_time::{EffectiveBounds, FailureReason};

use super::{CreateStatus, CreationRecord, VerificationRecord, VerifyStatus};

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn hours(h: f64) -> String {
    format!("{h:.2}")
}

fn post_cells(p: &PostRange) -> [String; 4] {
    [opt(p.start_post()), opt(p.end_post()), opt(p.start_offset()), opt(p.end_offset())]
}

fn with_config_header(cfg: &RunConfig, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut out = format!("# config: {}\n", cfg.to_json()).into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    out.extend(w.into_inner().expect("in-memory writer"));
    out
}

/// Verification report table: the work-order columns followed by
/// `ComputedHrs, MatchRatio, Status, Reason, SpreadDays`. Hours and ratios
/// are rounded to two decimals.
pub fn verification_csv(records: &[VerificationRecord], cfg: &RunConfig) -> Vec<u8> {
    let header = [
        "WOId", "VehicleId", "Date", "RouteRef", "StartPost", "EndPost", "StartOffset", "EndOffset", "ReportedHrs",
        "ComputedHrs", "MatchRatio", "Status", "Reason", "SpreadDays",
    ];
    let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in records {
        let o = &r.order;
        let mut row = vec![o.wo_id.clone(), o.vehicle_id.clone(), o.date.to_string(), o.route.raw.clone()];
        row.extend(post_cells(&o.posts));
        row.extend([
            o.reported_hours.to_string(),
            hours(r.computed_hours()),
            r.match_ratio.map(hours).unwrap_or_default(),
            r.status.as_str().to_owned(),
            r.result.failure_reason.to_string(),
            r.spread_days.to_string(),
        ]);
        rows.push(row);
    }
    with_config_header(cfg, rows)
}

/// Creation report table: the activity columns followed by
/// `TotalHrs, StartTime, EndTime, Status, Reason`.
pub fn creation_csv(records: &[CreationRecord], cfg: &RunConfig) -> Vec<u8> {
    let header = [
        "VehicleId", "Date", "RouteRef", "StartPost", "EndPost", "StartOffset", "EndOffset", "TotalHrs", "StartTime",
        "EndTime", "Status", "Reason",
    ];
    let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in records {
        let a = &r.activity;
        let mut row = vec![a.vehicle_id.clone(), a.date.to_string(), a.route.raw.clone()];
        row.extend(post_cells(&a.posts));
        row.extend([
            hours(r.total_hours()),
            opt(r.result.first_time.map(|t| t.to_rfc3339())),
            opt(r.result.last_time.map(|t| t.to_rfc3339())),
            r.status.as_str().to_owned(),
            r.result.failure_reason.to_string(),
        ]);
        rows.push(row);
    }
    with_config_header(cfg, rows)
}

#[derive(Serialize)]
struct SegmentJson<'a> {
    segment: &'a str,
    route_ref: &'a str,
    /// canonical route, empty when the route ref did not parse
    route: &'a str,
    start_post: Option<u32>,
    end_post: Option<u32>,
    start_offset: Option<f64>,
    end_offset: Option<f64>,
    bounds: Option<EffectiveBounds>,
}

impl<'a> SegmentJson<'a> {
    fn new(segment: &'a str, route: &'a crate::inventory::RouteRef, posts: &PostRange, bounds: Option<EffectiveBounds>) -> Self {
        SegmentJson {
            segment,
            route_ref: &route.raw,
            route: &route.canonical_name,
            start_post: posts.start_post(),
            end_post: posts.end_post(),
            start_offset: posts.start_offset(),
            end_offset: posts.end_offset(),
            bounds,
        }
    }
}

#[derive(Serialize)]
struct VerificationJson<'a> {
    wo_id: &'a str,
    vehicle_id: &'a str,
    date: NaiveDate,
    #[serde(flatten)]
    segment: SegmentJson<'a>,
    reported_hours: f64,
    computed_hours: f64,
    computed_seconds: f64,
    points_used: usize,
    match_ratio: Option<f64>,
    status: VerifyStatus,
    reason: FailureReason,
    spread_days: u32,
}

#[derive(Serialize)]
struct VerificationReport<'a> {
    config: &'a RunConfig,
    records: Vec<VerificationJson<'a>>,
    /// (days spread, distinct work orders)
    spread_histogram: Vec<(u32, u64)>,
}

/// Verification report for the viewer, with unrounded values.
pub fn verification_json(records: &[VerificationRecord], cfg: &RunConfig, spread: &BTreeMap<u32, u64>) -> Vec<u8> {
    let report = VerificationReport {
        config: cfg,
        records: records
            .iter()
            .map(|r| VerificationJson {
                wo_id: &r.order.wo_id,
                vehicle_id: &r.order.vehicle_id,
                date: r.order.date,
                segment: SegmentJson::new(&r.segment, &r.order.route, &r.order.posts, r.result.bounds),
                reported_hours: r.order.reported_hours,
                computed_hours: r.result.computed_hours,
                computed_seconds: r.result.computed_seconds,
                points_used: r.result.points_used,
                match_ratio: r.match_ratio,
                status: r.status,
                reason: r.result.failure_reason,
                spread_days: r.spread_days,
            })
            .collect(),
        spread_histogram: spread.iter().map(|(&d, &n)| (d, n)).collect(),
    };
    json_line(&report)
}

#[derive(Serialize)]
struct CreationJson<'a> {
    vehicle_id: &'a str,
    date: NaiveDate,
    #[serde(flatten)]
    segment: SegmentJson<'a>,
    total_hours: f64,
    computed_seconds: f64,
    points_used: usize,
    start_time: Option<DateTime<FixedOffset>>,
    end_time: Option<DateTime<FixedOffset>>,
    status: CreateStatus,
    reason: FailureReason,
}

#[derive(Serialize)]
struct CreationReport<'a> {
    config: &'a RunConfig,
    records: Vec<CreationJson<'a>>,
}

pub fn creation_json(records: &[CreationRecord], cfg: &RunConfig) -> Vec<u8> {
    let report = CreationReport {
        config: cfg,
        records: records
            .iter()
            .map(|r| CreationJson {
                vehicle_id: &r.activity.vehicle_id,
                date: r.activity.date,
                segment: SegmentJson::new(&r.segment, &r.activity.route, &r.activity.posts, r.result.bounds),
                total_hours: r.result.computed_hours,
                computed_seconds: r.result.computed_seconds,
                points_used: r.result.points_used,
                start_time: r.result.first_time,
                end_time: r.result.last_time,
                status: r.status,
                reason: r.result.failure_reason,
            })
            .collect(),
    };
    json_line(&report)
}
