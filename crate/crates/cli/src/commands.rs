use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use plowtrack::config::RunConfig;
use plowtrack::fsutil::write_atomic;
use plowtrack::inventory::{build_index as build, read_inventory, read_markers, write_tiles, TiledIndex};
use plowtrack::matching::{match_track, read_matched_dir, write_matched_tracks, MatchedTrack};
use plowtrack::track::{ingest_gps_file, rejects_csv, sampling_stats, IngestReport, Reject};
use plowtrack::workorder::{self, CreateStatus, VerifyStatus};

use crate::Settings;

/// A problem with the command line or config file (exit status 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<plowtrack::Error>() {
            return if err.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<InputError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
    }
    1
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(s: &Settings) -> Result<RunConfig> {
    let mut cfg = match &s.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(tz) = &s.tz {
        cfg.timezone = tz.clone();
    }
    if let Some(p) = s.precision {
        cfg.precision = p;
    }
    if let Some(c) = s.cap_seconds {
        cfg.cap_seconds = c;
    }
    if let Some(a) = s.abs_tol {
        cfg.abs_tol = a;
    }
    if let Some(r) = s.rel_tol {
        cfg.rel_tol = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_header(cfg: &RunConfig, body: Vec<u8>) -> Vec<u8> {
    let mut out = format!("# config: {}\n", cfg.to_json()).into_bytes();
    out.extend(body);
    out
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn open_index(dir: &Path, cfg: &RunConfig) -> Result<TiledIndex> {
    let idx = TiledIndex::open_lazy(dir)?;
    let built_for = idx.thresholds().max_snap_m();
    if cfg.thresholds.max_snap_m() > built_for {
        return Err(InputError(format!(
            "index {} was built for snap distances up to {built_for} m; the configured thresholds need {} m",
            dir.display(),
            cfg.thresholds.max_snap_m()
        ))
        .into());
    }
    Ok(idx)
}

pub fn build_index(cfg: &RunConfig, inventory: &Path, markers: &Path, out: &Path) -> Result<String> {
    let segments = read_inventory(inventory)?;
    let markers = read_markers(markers)?;
    let n_segments = segments.len();
    let n_markers = markers.len();
    let idx = build(segments, markers, cfg.precision, cfg.thresholds)?;
    let written = write_tiles(&idx, out)?;
    Ok(format!(
        "{n_segments} segments, {} tiles, {n_markers} mile markers on {} routes; wrote {} files to {}",
        idx.tile_count(),
        idx.routes().len(),
        written.total(),
        out.display()
    ))
}

fn ingest(cfg: &RunConfig, gps: &Path) -> Result<IngestReport> {
    Ok(ingest_gps_file(gps, cfg.tz()?)?)
}

pub fn match_gps(cfg: &RunConfig, gps: &Path, index: &Path, out: &Path) -> Result<String> {
    let idx = open_index(index, cfg)?;
    let report = ingest(cfg, gps)?;
    let tracks: Vec<_> = report.tracks.values().collect();
    let matched = tracks
        .par_iter()
        .map(|t| {
            Ok(MatchedTrack {
                vehicle_id: t.vehicle_id.clone(),
                day: t.day,
                points: match_track(&idx, t, &cfg.thresholds)?,
            })
        })
        .collect::<plowtrack::Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let files = write_matched_tracks(out, &matched)?;
    write_atomic(&out.join("rejects.csv"), &with_header(cfg, rejects_csv(&report.rejects)))?;

    let points: usize = matched.iter().map(|t| t.points.len()).sum();
    let off_road = matched
        .iter()
        .flat_map(|t| &t.points)
        .filter(|p| p.road.is_none())
        .count();
    let fraction = if points == 0 { 0.0 } else { off_road as f64 / points as f64 };
    Ok(format!(
        "{points} points in {} tracks matched, off-road fraction {fraction:.4}; {} rejects, {} duplicates dropped; wrote {files} track files to {}",
        matched.len(),
        report.rejects.len(),
        report.duplicates,
        out.display()
    ))
}

fn write_rejects_sidecar(cfg: &RunConfig, out: &Path, rejects: &[Reject]) -> Result<()> {
    write_atomic(&sidecar(out, ".rejects.csv"), &with_header(cfg, rejects_csv(rejects)))?;
    Ok(())
}

fn json_path(out: &Path) -> Result<PathBuf> {
    if out.extension().is_some_and(|e| e == "json") {
        return Err(InputError(format!("--out {} must not be the .json report path", out.display())).into());
    }
    Ok(out.with_extension("json"))
}

pub fn verify(cfg: &RunConfig, work_orders: &Path, matched: &Path, index: &Path, out: &Path) -> Result<String> {
    let json = json_path(out)?;
    let orders = workorder::read_work_orders(work_orders)?;
    let idx = open_index(index, cfg)?;
    let tracks = read_matched_dir(matched)?;
    let records = workorder::verify(&orders.rows, &tracks, &idx, cfg);
    let spread = workorder::spread_histogram(&orders.rows);

    write_atomic(out, &workorder::verification_csv(&records, cfg))?;
    write_atomic(&json, &workorder::verification_json(&records, cfg, &spread))?;
    write_rejects_sidecar(cfg, out, &orders.rejects)?;

    let count = |s: VerifyStatus| records.iter().filter(|r| r.status == s).count();
    let mut summary = format!(
        "{} work orders: MATCH {} / MISMATCH {} / NO_DATA {}; {} rejected rows",
        records.len(),
        count(VerifyStatus::Match),
        count(VerifyStatus::Mismatch),
        count(VerifyStatus::NoData),
        orders.rejects.len()
    );
    summary.push_str("\ndays spread:");
    for (days, n) in &spread {
        write!(summary, " {days}:{n}").expect("string write");
    }
    Ok(summary)
}

pub fn create(cfg: &RunConfig, activities: &Path, matched: &Path, index: &Path, out: &Path) -> Result<String> {
    let json = json_path(out)?;
    let acts = workorder::read_activities(activities)?;
    let idx = open_index(index, cfg)?;
    let tracks = read_matched_dir(matched)?;
    let records = workorder::create_orders(&acts.rows, &tracks, &idx, cfg);

    write_atomic(out, &workorder::creation_csv(&records, cfg))?;
    write_atomic(&json, &workorder::creation_json(&records, cfg))?;
    write_rejects_sidecar(cfg, out, &acts.rejects)?;

    let count = |s: CreateStatus| records.iter().filter(|r| r.status == s).count();
    Ok(format!(
        "{} work orders created: OK {} / ZERO {} / NO_DATA {}; {} rejected rows",
        records.len(),
        count(CreateStatus::Ok),
        count(CreateStatus::Zero),
        count(CreateStatus::NoData),
        acts.rejects.len()
    ))
}

pub fn stats(cfg: &RunConfig, gps: &Path, out: Option<&Path>) -> Result<String> {
    let report = ingest(cfg, gps)?;
    let s = sampling_stats(report.tracks.values());
    if let Some(out) = out {
        let doc = serde_json::json!({
            "config": cfg,
            "stats": s,
            "rows": report.rows,
            "rejects": report.rejects.len(),
            "duplicates": report.duplicates,
        });
        let mut bytes = serde_json::to_vec(&doc)?;
        bytes.push(b'\n');
        write_atomic(out, &bytes)?;
    }
    let mut text = String::new();
    writeln!(text, "points: {}", s.total_points)?;
    writeln!(text, "tracks: {}", s.total_tracks)?;
    writeln!(text, "intervals: {}", s.total_intervals)?;
    writeln!(text, "min interval: {} s", s.min_interval)?;
    writeln!(
        text,
        "exactly 1 min: {:.2}% ({})",
        100.0 * s.fraction_exactly_1min,
        s.intervals_exactly_1min
    )?;
    writeln!(text, "over 5 min: {:.2}% ({})", 100.0 * s.fraction_over_5min, s.intervals_over_5min)?;
    writeln!(text, "histogram:")?;
    for (bucket, n) in &s.histogram {
        writeln!(text, "  {bucket:>9} {n}")?;
    }
    write!(text, "rejects: {}, duplicates: {}", report.rejects.len(), report.duplicates)?;
    Ok(text)
}
