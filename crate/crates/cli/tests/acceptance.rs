//! One PASS/FAIL line per acceptance criterion. Exits non-zero when any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use plowtrack::geo::{geohash_encode, geohash_neighbors, Coordinate};
use plowtrack::inventory::{build_index, write_tiles, MileMarker, PostRange, RouteRef, TiledIndex};
use plowtrack::matching::{match_point, match_track, MatchState, MatchThresholds, MatchedTrack, MatchedTracks};
use plowtrack::segment_time::{compute_seconds, effective_bounds, FailureReason, SegmentRef, SegmentTimeResult};
use plowtrack::track::{sampling_stats, GpsPoint};
use plowtrack::workorder::{read_work_orders, spread_histogram};
use plowtrack_testkit::{self as kit, GridNetwork, RandomNetwork, StraightRoute};

type Outcome = Result<String, String>;
type Snapshot = BTreeMap<PathBuf, Vec<u8>>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn nearest_road_equivalence() -> Outcome {
    let th = MatchThresholds::default();
    let started = Instant::now();
    let (mut agree, mut total) = (0usize, 0usize);
    let mut first_miss = None;
    for n in 0..100u64 {
        let mut rng = kit::rng(1000 + n);
        let size = rng.gen_range(20..=200);
        let net = RandomNetwork::generate(&mut rng, size);
        let idx = build_index(net.segments.clone(), vec![], 5, th).map_err(|e| e.to_string())?;
        let mut state = MatchState::default();
        for _ in 0..1000 {
            let p = net.random_point(&mut rng);
            if rng.gen_bool(0.2) {
                // an arbitrary hint, not necessarily nearby
                state.previous_road = Some(net.segments[rng.gen_range(0..net.segments.len())].segment_id.clone());
            }
            let gps = GpsPoint {
                vehicle_id: "A".into(),
                time: kit::morning(),
                location: p,
            };
            let expected = kit::brute_force_select(&net.segments, state.previous_road.as_deref(), p, &th);
            let (m, next) = match_point(&idx, &state, gps, &th).map_err(|e| e.to_string())?;
            let got = m.road.clone().zip(m.snap_distance_m);
            total += 1;
            if got == expected {
                agree += 1;
            } else if first_miss.is_none() {
                first_miss = Some(format!("network {n} at {p:?}: {got:?} vs {expected:?}"));
            }
            state = next;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let detail = format!("{agree}/{total} agree with the full scan in {secs:.2} s{}", first_miss.map(|m| format!("; first miss {m}")).unwrap_or_default());
    check(agree == total && secs < 10.0, detail)
}

/// One east-west interstate, posts 0..=10, as one segment.
struct Road {
    route: StraightRoute,
    idx: TiledIndex,
}

impl Road {
    fn new(markers: impl Fn(&MileMarker) -> bool) -> Road {
        let route = StraightRoute::new("I-65", kit::c(39.7, -86.3), 10, 0);
        let markers = route.markers().into_iter().filter(|m| markers(m)).collect();
        let idx = build_index(route.segments(1), markers, 5, MatchThresholds::default()).expect("index");
        Road { route, idx }
    }

    fn tracks(&self, samples: &[(i64, Coordinate)]) -> MatchedTracks {
        let track = kit::day_track("T1", samples);
        let points = match_track(&self.idx, &track, self.idx.thresholds()).expect("match");
        BTreeMap::from([((track.day, track.vehicle_id.clone()), MatchedTrack { vehicle_id: track.vehicle_id, day: track.day, points })])
    }

    fn seconds(&self, tracks: &MatchedTracks, route: &RouteRef, posts: &PostRange) -> SegmentTimeResult {
        compute_seconds(SegmentRef { id: "wo", route, posts }, "T1", kit::day(), tracks, &self.idx, 600.0)
    }
}

fn hand_traces() -> Outcome {
    let road = Road::new(|_| true);
    let i65 = RouteRef::parse_lenient("I-65");
    let at = |mile: f64| road.route.at_mile(mile);

    let three = road.tracks(&[(0, at(2.2)), (60, at(2.4)), (120, at(2.6))]);
    let a = road.seconds(&three, &i65, &PostRange::whole_road());
    let gap = road.tracks(&[(0, at(3.3)), (900, at(3.6))]);
    let b = road.seconds(&gap, &i65, &PostRange::whole_road());
    let c = road.seconds(&three, &RouteRef::parse_lenient(""), &PostRange::whole_road());

    let ok_a = a.computed_seconds == 120.0 && a.computed_hours == 120.0 / 3600.0 && a.points_used == 3;
    let ok_b = b.computed_seconds == 600.0 && b.points_used == 2;
    let ok_c = c.computed_seconds == 0.0 && c.failure_reason == FailureReason::NoRouteRef;
    check(
        ok_a && ok_b && ok_c,
        format!(
            "three points {} s ({:.4} h), 900 s gap {} s, blank route {} s {}",
            a.computed_seconds, a.computed_hours, b.computed_seconds, c.computed_seconds, c.failure_reason
        ),
    )
}

fn offset_adjustment() -> Outcome {
    let posts = PostRange::new(Some(10), Some(20), Some(-0.3), Some(0.4)).map_err(|e| e.to_string())?;
    let marker = |post: u32| MileMarker {
        route: RouteRef::parse_lenient("I-65"),
        post,
        location: kit::c(39.7, -86.3 + post as f64 * 0.02),
    };
    let bounds = effective_bounds(&posts, &[marker(9), marker(21)]);
    let ok_bounds = matches!(bounds, Ok(Some(b)) if (b.lower - 9.7).abs() < 1e-12 && (b.upper - 20.4).abs() < 1e-12);
    let no_nine = effective_bounds(&posts, &(10..=21).map(marker).collect::<Vec<_>>());
    let no_21 = effective_bounds(&posts, &(9..=20).map(marker).collect::<Vec<_>>());

    // end to end: a vehicle on the road, but mile 9 missing from the inventory
    let road = Road::new(|m| m.post != 9);
    let tracks = road.tracks(&[(0, road.route.at_mile(9.8)), (60, road.route.at_mile(9.9)), (120, road.route.at_mile(9.95))]);
    let posts = PostRange::new(Some(10), Some(10), Some(-0.3), Some(0.0)).map_err(|e| e.to_string())?;
    let r = road.seconds(&tracks, &RouteRef::parse_lenient("I-65"), &posts);

    let ok = ok_bounds
        && no_nine == Err(FailureReason::PostNotFound)
        && no_21 == Err(FailureReason::PostNotFound)
        && r.computed_hours == 0.0
        && r.failure_reason == FailureReason::PostNotFound;
    check(
        ok,
        format!(
            "bounds {bounds:?}; without 9: {no_nine:?}; without 21: {no_21:?}; missing marker end to end: {} h {}",
            r.computed_hours, r.failure_reason
        ),
    )
}

fn whole_road_vs_miles() -> Outcome {
    let route = StraightRoute::new("SR 37", kit::c(40.2, -86.1), 20, 30);
    let idx = build_index(route.segments(4), route.markers(), 5, MatchThresholds::default()).map_err(|e| e.to_string())?;
    let mut rng = kit::rng(77);
    let mut t = 0;
    let mut samples = Vec::new();
    // about 12 hours of samples, inside one day
    for _ in 0..200 {
        // every point well inside a mile, away from marker boundaries
        let mile = rng.gen_range(0..20) as f64 + rng.gen_range(0.25..0.75);
        samples.push((t, kit::offset(route.at_mile(mile), rng.gen_range(-25.0..25.0), 0.0)));
        t += [60, 60, 60, 30, 240, 900][rng.gen_range(0..6)];
    }
    let track = kit::day_track("T1", &samples);
    let points = match_track(&idx, &track, idx.thresholds()).map_err(|e| e.to_string())?;
    let tracks = BTreeMap::from([((track.day, "T1".to_owned()), MatchedTrack { vehicle_id: "T1".into(), day: track.day, points })]);

    let sr37 = RouteRef::parse_lenient("SR 37");
    let whole = compute_seconds(SegmentRef { id: "all", route: &sr37, posts: &PostRange::whole_road() }, "T1", kit::day(), &tracks, &idx, 600.0);
    let miles = idx.synthesize_mile_segments(&sr37);
    let per_mile: Vec<SegmentTimeResult> = miles.iter().map(|m| compute_seconds(m, "T1", kit::day(), &tracks, &idx, 600.0)).collect();
    let sum_hours: f64 = per_mile.iter().map(|r| r.computed_hours).sum();
    let sum_seconds: f64 = per_mile.iter().map(|r| r.computed_seconds).sum();
    let used: usize = per_mile.iter().map(|r| r.points_used).sum();
    check(
        miles.len() == 20 && whole.computed_seconds == sum_seconds && whole.points_used == used && (whole.computed_hours - sum_hours).abs() < 1e-12,
        format!(
            "whole road {} s over {} points; {} synthesized miles sum to {} s over {used} points",
            whole.computed_seconds,
            whole.points_used,
            miles.len(),
            sum_seconds
        ),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plowtrack"))
}

fn run(args: &[&Path]) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok((out.stdout, out.stderr))
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

fn sampling_stats_fractions() -> Outcome {
    let mut rng = kit::rng(34);
    let gaps = kit::sampling_gaps(&mut rng, 10);
    // 25 gaps per vehicle keeps each track inside one local day
    let tracks: Vec<_> = gaps
        .chunks(25)
        .enumerate()
        .map(|(v, chunk)| {
            let mut t = 0;
            let mut samples = vec![(0, kit::c(39.8, -86.2))];
            for g in chunk {
                t += g;
                samples.push((t, kit::c(39.8, -86.2 + t as f64 * 1e-6)));
            }
            kit::day_track(&format!("V{v:02}"), &samples)
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gps = dir.path().join("gps.csv");
    let json = dir.path().join("stats.json");
    std::fs::write(&gps, kit::gps_csv(&tracks)).map_err(|e| e.to_string())?;
    run(&[p("stats"), p("--gps"), &gps, p("--out"), &json])?;
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let one = doc["stats"]["fraction_exactly_1min"].as_f64().unwrap_or(f64::NAN);
    let five = doc["stats"]["fraction_over_5min"].as_f64().unwrap_or(f64::NAN);
    // the library over the same tracks, without the file round trip
    let direct = sampling_stats(tracks.iter());
    check(
        one == 0.34 && five == 0.14 && direct.fraction_exactly_1min == 0.34 && direct.fraction_over_5min == 0.14,
        format!("{} intervals: exactly one minute {one}, over five minutes {five}", doc["stats"]["total_intervals"]),
    )
}

fn spread_table() -> Outcome {
    let target = kit::reference_spread_table();
    let mut rng = kit::rng(1);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let orders = dir.path().join("orders.csv");
    std::fs::write(&orders, kit::spread_work_orders_csv(&mut rng, &target)).map_err(|e| e.to_string())?;
    let parsed = read_work_orders(&orders).map_err(|e| e.to_string())?;
    let got = spread_histogram(&parsed.rows);

    // the same histogram through the verify command, against an empty index
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "SegmentId,RouteRef,StartPost,EndPost,StartOffset,EndOffset,Geometry\n").map_err(|e| e.to_string())?;
    let markers = dir.path().join("markers.csv");
    std::fs::write(&markers, "RouteRef,Post,Lat,Lon\n").map_err(|e| e.to_string())?;
    let index = dir.path().join("index");
    let matched = dir.path().join("matched");
    std::fs::create_dir(&matched).map_err(|e| e.to_string())?;
    run(&[p("build-index"), p("--inventory"), &empty, p("--markers"), &markers, p("--out"), &index])?;
    let (stdout, _) = run(&[p("verify"), p("--work-orders"), &orders, p("--matched"), &matched, p("--index"), &index, p("--out"), &dir.path().join("report.csv")])?;
    let stdout = String::from_utf8_lossy(&stdout);
    let line = stdout.lines().find(|l| l.starts_with("days spread:")).unwrap_or("").to_owned();
    let expected_line = format!("days spread:{}", target.iter().map(|(d, n)| format!(" {d}:{n}")).collect::<String>());
    check(
        got == target && line == expected_line && parsed.rejects.is_empty(),
        format!("{} rows, {} orders; {line}", parsed.rows.len(), got.values().sum::<u64>()),
    )
}

fn performance_smoke() -> Outcome {
    let started = Instant::now();
    // 50 x 50 roads 2 km apart, cut into 980 m pieces: 10,000 segments
    let grid = GridNetwork::generate(kit::c(39.0, -87.0), 50, 50, 2000.0, 980.0);
    let n_segments = grid.segments.len();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let built = build_index(grid.segments.clone(), vec![], 5, MatchThresholds::default()).map_err(|e| e.to_string())?;
    write_tiles(&built, dir.path()).map_err(|e| e.to_string())?;
    drop(built);
    let idx = TiledIndex::open_lazy(dir.path()).map_err(|e| e.to_string())?;
    let resident_before = idx.resident_tile_count();

    // 1,000 vehicles x 1,000 points, all in the western 30 km of the grid
    let tracks: Vec<_> = (0..1000u64)
        .into_par_iter()
        .map(|v| grid.drive(&mut kit::rng(v), &format!("V{v:04}"), 1000, 30_000.0))
        .collect();
    let n_points: usize = tracks.iter().map(|t| t.points.len()).sum();
    let setup = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let matched = tracks
        .par_iter()
        .map(|t| match_track(&idx, t, idx.thresholds()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let off_road = matched.iter().flatten().filter(|m| m.road.is_none()).count();

    // the tiles a query can touch: each point's cell and its neighbors
    let stored: BTreeSet<_> = idx.tile_ids().into_iter().collect();
    let mut visited = BTreeSet::new();
    for t in &tracks {
        for pt in &t.points {
            let cell = geohash_encode(pt.location, idx.precision()).map_err(|e| e.to_string())?;
            visited.extend(geohash_neighbors(&cell).into_iter().filter(|id| stored.contains(id)));
        }
    }
    let resident = idx.resident_tile_count();
    check(
        n_points == 1_000_000 && n_segments == 10_000 && secs < 60.0 && resident_before == 0 && resident == visited.len() && resident < stored.len(),
        format!(
            "{n_points} points against {n_segments} segments matched in {secs:.2} s (setup {setup:.2} s), {off_road} off road; {resident} of {} tiles loaded, {} visited",
            stored.len(),
            visited.len()
        ),
    )
}

/// Every file below `dir`, relative path to bytes.
fn snapshot(dir: &Path) -> Snapshot {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(bytes) = std::fs::read(&path) {
                out.insert(path.strip_prefix(dir).unwrap_or(&path).to_path_buf(), bytes);
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let input = tempfile::tempdir().map_err(|e| e.to_string())?;
    let at = |name: &str| input.path().join(name);
    let grid = GridNetwork::generate(kit::c(39.5, -86.5), 6, 6, 1500.0, 500.0);
    let route = StraightRoute::new("I-1", grid.origin, 4, 10);
    let mut rng = kit::rng(5);
    let tracks: Vec<_> = (0..40).map(|v| grid.drive(&mut rng, &format!("V{v}"), 300, 7000.0)).collect();
    std::fs::write(at("inventory.csv"), kit::inventory_csv(&grid.segments)).map_err(|e| e.to_string())?;
    std::fs::write(at("markers.csv"), kit::markers_csv(&route.markers())).map_err(|e| e.to_string())?;
    std::fs::write(at("gps.csv"), kit::gps_csv(&tracks)).map_err(|e| e.to_string())?;
    let mut orders = String::from("WOId,VehicleId,Date,RouteRef,StartPost,EndPost,StartOffset,EndOffset,ReportedHrs\n");
    let mut acts = String::from("VehicleId,Date,RouteRef,StartPost,EndPost,StartOffset,EndOffset\n");
    for v in 0..40 {
        orders.push_str(&format!("W{v},V{v},01/05/2021,I-1,10,12,-0.2,0.3,{:.2}\n", rng.gen_range(0.0..2.0)));
        orders.push_str(&format!("X{v},V{v},01/05/2021,SR 3,,,,,1.5\n"));
        acts.push_str(&format!("V{v},01/05/2021,I 1,11,13,,\nV{v},2021-01-05,Col Rd 2,,,,\n"));
    }
    std::fs::write(at("orders.csv"), orders).map_err(|e| e.to_string())?;
    std::fs::write(at("acts.csv"), acts).map_err(|e| e.to_string())?;

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = |name: &str| out.path().join(name);
    let once = || -> Result<(Vec<Vec<u8>>, Snapshot), String> {
        let arg = |s: &str| PathBuf::from(s);
        let steps = [
            vec![arg("build-index"), arg("--inventory"), at("inventory.csv"), arg("--markers"), at("markers.csv"), arg("--out"), o("index")],
            vec![arg("match"), arg("--gps"), at("gps.csv"), arg("--index"), o("index"), arg("--out"), o("matched")],
            vec![arg("verify"), arg("--work-orders"), at("orders.csv"), arg("--matched"), o("matched"), arg("--index"), o("index"), arg("--out"), o("verify.csv")],
            vec![arg("create"), arg("--activities"), at("acts.csv"), arg("--matched"), o("matched"), arg("--index"), o("index"), arg("--out"), o("create.csv")],
            vec![arg("stats"), arg("--gps"), at("gps.csv"), arg("--out"), o("stats.json")],
        ];
        let mut stdout = Vec::new();
        for step in &steps {
            let step: Vec<&Path> = step.iter().map(PathBuf::as_path).collect();
            stdout.push(run(&step)?.0);
        }
        Ok((stdout, snapshot(out.path())))
    };
    let (out_a, files_a) = once()?;
    std::fs::remove_dir_all(out.path()).map_err(|e| e.to_string())?;
    std::fs::create_dir(out.path()).map_err(|e| e.to_string())?;
    let (out_b, files_b) = once()?;
    let differing: Vec<_> = files_a
        .iter()
        .filter(|(k, v)| files_b.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    check(
        out_a == out_b && files_a.keys().eq(files_b.keys()) && differing.is_empty() && files_a.len() > 40,
        format!("5 commands run twice, {} output files, {} differ {differing:?}", files_a.len(), differing.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("nearest-road oracle equivalence", nearest_road_equivalence),
        ("segment-time hand traces", hand_traces),
        ("offset adjustment", offset_adjustment),
        ("whole road vs mile segments", whole_road_vs_miles),
        ("sampling stats fractions", sampling_stats_fractions),
        ("work-order day spread histogram", spread_table),
        ("performance smoke", performance_smoke),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
