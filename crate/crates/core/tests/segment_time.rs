use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use plowtrack::config::RunConfig;
use plowtrack::geo::Coordinate;
use plowtrack::inventory::{build_index, PostRange, RouteRef, TiledIndex};
use plowtrack::matching::{match_track, MatchThresholds, MatchedTrack, MatchedTracks};
use plowtrack::segment_time::{compute_seconds, FailureReason, SegmentRef};
use plowtrack::workorder::{verify, VerifyStatus, WorkOrder};
use plowtrack_testkit::{self as kit, RefPoint, StraightRoute};

const MILES: u32 = 30;

struct Fixture {
    interstate: StraightRoute,
    state: StraightRoute,
    idx: TiledIndex,
}

fn fixture() -> Fixture {
    let interstate = StraightRoute::new("I-65", kit::c(39.70, -86.40), MILES, 0);
    // parallel state road 2 km north, without markers
    let state = StraightRoute::new("SR 37", kit::offset(interstate.start, 2000.0, 0.0), MILES, 0);
    let mut segments = interstate.segments(6);
    segments.extend(state.segments(3));
    let idx = build_index(segments, interstate.markers(), 5, MatchThresholds::default()).unwrap();
    Fixture { interstate, state, idx }
}

/// Up to `n` samples with uneven gaps, some on each road and some off-road.
fn random_samples(f: &Fixture, rng: &mut ChaCha8Rng, n: usize) -> Vec<(i64, Coordinate)> {
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += match rng.gen_range(0..10) {
                0..=5 => 60,
                6..=7 => rng.gen_range(1..300),
                _ => rng.gen_range(300..1200),
            };
            let mile = rng.gen_range(-0.5..MILES as f64 + 0.5);
            let jitter = rng.gen_range(-30.0..30.0);
            let p = match rng.gen_range(0..5) {
                0..=2 => kit::offset(f.interstate.at_mile(mile), jitter, 0.0),
                3 => kit::offset(f.state.at_mile(mile), jitter, 0.0),
                _ => kit::offset(f.interstate.at_mile(mile), -5000.0, 0.0),
            };
            (t, p)
        })
        .collect()
}

fn matched(f: &Fixture, samples: &[(i64, Coordinate)]) -> MatchedTracks {
    let track = kit::day_track("T1", samples);
    let points = match_track(&f.idx, &track, f.idx.thresholds()).unwrap();
    let mut out = BTreeMap::new();
    out.insert((track.day, track.vehicle_id.clone()), MatchedTrack { vehicle_id: track.vehicle_id, day: track.day, points });
    out
}

fn reference_points(f: &Fixture, tracks: &MatchedTracks) -> Vec<RefPoint> {
    let track = tracks.values().next().unwrap();
    let t0 = track.points[0].point.time;
    track
        .points
        .iter()
        .map(|m| RefPoint {
            t: (m.point.time - t0).num_seconds(),
            route: m.road.as_deref().map(|id| f.idx.segment(id).unwrap().route.canonical_name.clone()),
            milepost: m.milepost,
        })
        .collect()
}

fn seconds(f: &Fixture, tracks: &MatchedTracks, route: &str, posts: &PostRange, cap: f64) -> (f64, usize, FailureReason) {
    let route = RouteRef::parse_lenient(route);
    let r = compute_seconds(SegmentRef { id: "s", route: &route, posts }, "T1", kit::day(), tracks, &f.idx, cap);
    (r.computed_seconds, r.points_used, r.failure_reason)
}

fn offset_posts(rng: &mut ChaCha8Rng) -> (u32, u32, f64, f64) {
    let s = rng.gen_range(1..MILES - 1);
    let e = rng.gen_range(s..MILES);
    (s, e, rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equals_reference_sum(seed in any::<u64>(), n in 1usize..=50) {
        let f = fixture();
        let mut rng = kit::rng(seed);
        let tracks = matched(&f, &random_samples(&f, &mut rng, n));
        let refs = reference_points(&f, &tracks);
        let cap = [600.0, 120.0, 1e9][rng.gen_range(0..3)];

        let (s, e, so, eo) = offset_posts(&mut rng);
        let posts = PostRange::new(Some(s), Some(e), Some(so), Some(eo)).unwrap();
        let lo = (s as f64 + so).min(e as f64 + eo);
        let hi = (s as f64 + so).max(e as f64 + eo);
        let (got, _, reason) = seconds(&f, &tracks, "I-65", &posts, cap);
        prop_assert_eq!(reason, FailureReason::None);
        prop_assert!((got - kit::brute_force_seconds(&refs, "I-65", Some((lo, hi)), cap)).abs() < 1e-9);

        for route in ["I-65", "SR-37"] {
            let (got, _, _) = seconds(&f, &tracks, route, &PostRange::whole_road(), cap);
            prop_assert!((got - kit::brute_force_seconds(&refs, route, None, cap)).abs() < 1e-9);
        }
    }

    #[test]
    fn capped_by_points_and_track_span(seed in any::<u64>(), n in 1usize..=50) {
        let f = fixture();
        let mut rng = kit::rng(seed);
        let samples = random_samples(&f, &mut rng, n);
        let tracks = matched(&f, &samples);
        let span = (samples.last().unwrap().0 - samples[0].0) as f64;
        for route in ["I-65", "SR-37"] {
            let (secs, used, _) = seconds(&f, &tracks, route, &PostRange::whole_road(), 600.0);
            prop_assert!(secs <= 600.0 * used as f64);
            prop_assert!(secs <= span);
            prop_assert!(secs <= 86_400.0);
        }
    }

    #[test]
    fn widening_never_loses_time(seed in any::<u64>(), n in 1usize..=50) {
        let f = fixture();
        let mut rng = kit::rng(seed);
        let tracks = matched(&f, &random_samples(&f, &mut rng, n));
        let s = rng.gen_range(1..MILES - 1);
        let e = rng.gen_range(s..MILES - 1);
        let ws = rng.gen_range(0..=s);
        let we = rng.gen_range(e..=MILES);
        let narrow = seconds(&f, &tracks, "I-65", &PostRange::posts(s, e).unwrap(), 600.0);
        let wide = seconds(&f, &tracks, "I-65", &PostRange::posts(ws, we).unwrap(), 600.0);
        let whole = seconds(&f, &tracks, "I-65", &PostRange::whole_road(), 600.0);
        prop_assert!(narrow.0 <= wide.0 && wide.0 <= whole.0);
        prop_assert!(narrow.1 <= wide.1 && wide.1 <= whole.1);
    }

    #[test]
    fn whole_road_is_the_sum_of_its_miles(seed in any::<u64>(), n in 1usize..=50) {
        let f = fixture();
        let mut rng = kit::rng(seed);
        let tracks = matched(&f, &random_samples(&f, &mut rng, n));
        let whole = seconds(&f, &tracks, "I-65", &PostRange::whole_road(), 600.0);
        let miles: Vec<_> = (0..MILES).map(|k| seconds(&f, &tracks, "I-65", &PostRange::posts(k, k + 1).unwrap(), 600.0)).collect();
        let sum: f64 = miles.iter().map(|m| m.0).sum();
        let used: usize = miles.iter().map(|m| m.1).sum();
        // a point exactly on an interior post (a projection clamped to a
        // segment end) belongs to both neighbouring miles
        let refs = reference_points(&f, &tracks);
        let on_post: Vec<usize> = (0..refs.len())
            .filter(|&i| refs[i].route.as_deref() == Some("I-65"))
            .filter(|&i| refs[i].milepost.is_some_and(|m| m.fract() == 0.0 && m > 0.0 && m < MILES as f64))
            .collect();
        let twice: f64 = on_post
            .iter()
            .filter(|&&i| i + 1 < refs.len())
            .map(|&i| ((refs[i + 1].t - refs[i].t) as f64).min(600.0))
            .sum();
        prop_assert!((whole.0 + twice - sum).abs() < 1e-6, "{} + {} vs {}", whole.0, twice, sum);
        prop_assert_eq!(whole.1 + on_post.len(), used);
    }

    #[test]
    fn tolerances_change_status_only(seed in any::<u64>(), n in 1usize..=50, orders in 1usize..20) {
        let f = fixture();
        let mut rng = kit::rng(seed);
        let tracks = matched(&f, &random_samples(&f, &mut rng, n));
        let orders: Vec<WorkOrder> = (0..orders)
            .map(|k| {
                let (s, e, so, eo) = offset_posts(&mut rng);
                let route = ["I-65", "SR 37", "County Line Rd", "", "I-65"][rng.gen_range(0..5)];
                WorkOrder {
                    line: k as u64 + 2,
                    wo_id: format!("W{}", rng.gen_range(0..5)),
                    vehicle_id: if rng.gen_bool(0.8) { "T1".into() } else { "T2".into() },
                    date: kit::day(),
                    route: RouteRef::parse_lenient(route),
                    posts: PostRange::new(Some(s), Some(e), Some(so), Some(eo)).unwrap(),
                    reported_hours: rng.gen_range(0.0..3.0),
                }
            })
            .collect();
        let tight = RunConfig { abs_tol: 0.0, rel_tol: 0.0, ..RunConfig::default() };
        let loose = RunConfig { abs_tol: 5.0, rel_tol: 1.0, ..RunConfig::default() };
        let a = verify(&orders, &tracks, &f.idx, &tight);
        let b = verify(&orders, &tracks, &f.idx, &loose);
        prop_assert_eq!(a.len(), orders.len());
        prop_assert_eq!(b.len(), orders.len());
        for ((x, y), o) in a.iter().zip(&b).zip(&orders) {
            prop_assert_eq!(&x.order, o);
            prop_assert_eq!(&x.result, &y.result);
            prop_assert_eq!(x.match_ratio, y.match_ratio);
            if x.result.failure_reason.is_failure() {
                prop_assert_eq!(x.status, VerifyStatus::NoData);
                prop_assert_eq!(y.status, VerifyStatus::NoData);
            } else {
                // loose tolerance accepts anything within 5 hours
                let diff = (x.result.computed_hours - o.reported_hours).abs();
                prop_assert_eq!(y.status == VerifyStatus::Match, diff <= 5.0f64.max(o.reported_hours));
                prop_assert_eq!(x.status == VerifyStatus::Match, diff == 0.0);
            }
        }
    }
}

