use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use plowtrack::geo::{geohash_encode, great_circle_distance, point_to_polyline, Coordinate, Polyline};
use plowtrack::inventory::{build_index, write_tiles, MileMarker, PostRange, RoadClass, RouteRef, TiledIndex};
use plowtrack::matching::{match_point, match_track, milepost_of, MatchState, MatchThresholds};
use plowtrack::track::GpsPoint;
use plowtrack_testkit::{self as kit, RandomNetwork, StraightRoute};

fn gps(p: Coordinate) -> GpsPoint {
    GpsPoint {
        vehicle_id: "T1".into(),
        time: kit::morning(),
        location: p,
    }
}

fn random_index(seed: u64, n: usize, precision: usize) -> (RandomNetwork, TiledIndex) {
    let mut rng = kit::rng(seed);
    let net = RandomNetwork::generate(&mut rng, n);
    let idx = build_index(net.segments.clone(), vec![], precision, MatchThresholds::default()).unwrap();
    (net, idx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn candidates_cover_every_segment_within_snap_range(seed in any::<u64>(), precision in 4usize..=7) {
        let (net, idx) = random_index(seed, 60, precision);
        let mut rng = kit::rng(seed ^ 1);
        let max = idx.thresholds().max_snap_m();
        for _ in 0..200 {
            let p = net.random_point(&mut rng);
            let tiles = idx.tiles_for_query(p).unwrap();
            prop_assert!(tiles.len() <= 9);
            let found: BTreeSet<&str> = idx.candidate_segments(p).unwrap().iter().map(|s| s.segment_id.as_str()).collect();
            for s in &net.segments {
                if point_to_polyline(p, &s.geometry).distance_m <= max {
                    prop_assert!(found.contains(s.segment_id.as_str()), "{} missing at {:?}", s.segment_id, p);
                }
            }
        }
    }

    #[test]
    fn every_vertex_tile_lists_its_segment(seed in any::<u64>()) {
        let (net, idx) = random_index(seed, 80, 5);
        for s in &net.segments {
            for &v in s.geometry.vertices() {
                let id = geohash_encode(v, idx.precision()).unwrap();
                let tile = idx.tile(&id).unwrap().expect("vertex tile exists");
                prop_assert!(tile.segments.contains(&s.segment_id));
            }
        }
    }

    #[test]
    fn matching_equals_full_scan(seed in any::<u64>()) {
        let (net, idx) = random_index(seed, 120, 5);
        let th = MatchThresholds::default();
        let mut rng = kit::rng(seed ^ 2);
        for _ in 0..300 {
            let p = net.random_point(&mut rng);
            let previous = rng.gen_bool(0.4).then(|| net.segments[rng.gen_range(0..net.segments.len())].segment_id.clone());
            let state = MatchState { previous_road: previous.clone() };
            let (m, next) = match_point(&idx, &state, gps(p), &th).unwrap();
            let expected = kit::brute_force_select(&net.segments, previous.as_deref(), p, &th);
            prop_assert_eq!(m.road.clone().zip(m.snap_distance_m), expected);
            prop_assert_eq!(next.previous_road, m.road.clone());
            prop_assert_eq!(m.road.is_none(), m.road_class.is_none());
        }
    }

    #[test]
    fn interstate_in_range_dominates_without_hint(seed in any::<u64>()) {
        let (net, idx) = random_index(seed, 120, 5);
        let th = MatchThresholds::default();
        let mut rng = kit::rng(seed ^ 3);
        for _ in 0..300 {
            let p = net.random_point(&mut rng);
            let interstate_close = net.segments.iter().any(|s| {
                s.route.road_class == RoadClass::Interstate && point_to_polyline(p, &s.geometry).distance_m <= th.interstate_m
            });
            let (m, _) = match_point(&idx, &MatchState::default(), gps(p), &th).unwrap();
            if interstate_close {
                prop_assert_eq!(m.road_class, Some(RoadClass::Interstate));
            }
        }
    }

    #[test]
    fn persistence_round_trips(seed in any::<u64>()) {
        let mut rng = kit::rng(seed);
        let route = StraightRoute::new("I-65", kit::offset(kit::c(39.7, -86.3), rng.gen_range(0.0..5000.0), 0.0), 6, 100);
        let mut net = RandomNetwork::generate(&mut rng, 30);
        net.segments.extend(route.segments(3));
        let idx = build_index(net.segments.clone(), route.markers(), 5, MatchThresholds::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tiles(&idx, dir.path()).unwrap();
        for reopened in [TiledIndex::open(dir.path()).unwrap(), TiledIndex::open_lazy(dir.path()).unwrap()] {
            prop_assert_eq!(reopened.precision(), idx.precision());
            prop_assert_eq!(reopened.thresholds(), idx.thresholds());
            prop_assert_eq!(reopened.segments(), idx.segments());
            prop_assert_eq!(reopened.routes(), idx.routes());
            prop_assert_eq!(reopened.tile_ids(), idx.tile_ids());
            for id in idx.tile_ids() {
                prop_assert_eq!(reopened.tile(&id).unwrap(), idx.tile(&id).unwrap());
            }
        }
    }
}

#[test]
fn matching_is_deterministic() {
    let (net, idx) = random_index(11, 150, 5);
    let mut rng = kit::rng(12);
    let samples: Vec<(i64, Coordinate)> = (0..500).map(|k| (k * 60, net.random_point(&mut rng))).collect();
    let track = kit::day_track("T1", &samples);
    let a = match_track(&idx, &track, idx.thresholds()).unwrap();
    let b = match_track(&idx, &track, idx.thresholds()).unwrap();
    assert_eq!(a, b);
}

/// A bending route cut into three segments sharing endpoints, with markers
/// on some of its vertices.
fn bent_route(seed: u64) -> (Vec<Coordinate>, Vec<plowtrack::inventory::RoadSegment>, Vec<MileMarker>) {
    let mut rng = kit::rng(seed);
    let mut p = kit::c(40.1, -86.9);
    let mut heading: f64 = 0.3;
    let mut vertices = vec![p];
    for _ in 0..24 {
        heading += rng.gen_range(-0.4..0.4);
        let step = rng.gen_range(200.0..900.0);
        p = kit::offset(p, step * heading.cos(), step * heading.sin());
        vertices.push(p);
    }
    let segments = [(0, 8), (8, 17), (17, 24)]
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| kit::segment(&format!("sr{k}"), "SR 26", vertices[a..=b].to_vec(), PostRange::whole_road()))
        .collect();
    let markers = (0..=24)
        .step_by(3)
        .enumerate()
        .map(|(k, v)| MileMarker {
            route: RouteRef::parse_lenient("SR 26"),
            post: 30 + k as u32,
            location: vertices[v],
        })
        .collect();
    (vertices, segments, markers)
}

#[test]
fn milepost_matches_arc_length_oracle() {
    let (vertices, segments, markers) = bent_route(5);
    let idx = build_index(segments.clone(), markers.clone(), 5, MatchThresholds::default()).unwrap();
    // cumulative arc length along the route, summed edge by edge
    let mut cum = vec![0.0];
    for w in vertices.windows(2) {
        cum.push(cum.last().unwrap() + great_circle_distance(w[0], w[1]));
    }
    let marker_arcs: Vec<(f64, f64)> = markers
        .iter()
        .map(|m| (m.post as f64, cum[vertices.iter().position(|v| *v == m.location).unwrap()]))
        .collect();
    let ranges = [(0usize, 8usize), (8, 17), (17, 24)];
    let mut rng = kit::rng(6);
    for _ in 0..2000 {
        let k = rng.gen_range(0..3);
        let (a, b) = ranges[k];
        let seg_len = cum[b] - cum[a];
        let along = rng.gen_range(0.0..seg_len);
        let arc = cum[a] + along;
        let w = marker_arcs.windows(2).find(|w| arc >= w[0].1 && arc <= w[1].1).unwrap();
        let expected = w[0].0 + (arc - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0);
        let got = milepost_of(&idx, &segments[k].segment_id, along / seg_len).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
}

#[test]
fn one_way_drive_has_monotone_mileposts() {
    let route = StraightRoute::new("I-69", kit::c(39.9, -86.0), 12, 200);
    let idx = build_index(route.segments(4), route.markers(), 5, MatchThresholds::default()).unwrap();
    let mut rng = kit::rng(8);
    let samples: Vec<(i64, Coordinate)> = (0..400)
        .map(|k| {
            let p = route.at_mile(0.05 + k as f64 * 0.0295);
            (k * 60, kit::offset(p, rng.gen_range(-20.0..20.0), 0.0))
        })
        .collect();
    let matched = match_track(&idx, &kit::day_track("T1", &samples), idx.thresholds()).unwrap();
    let posts: Vec<f64> = matched.iter().map(|m| m.milepost.unwrap()).collect();
    assert!(posts.windows(2).all(|w| w[0] <= w[1]), "{posts:?}");
    assert!(posts[0] > 200.0 && *posts.last().unwrap() < 212.0);
}

#[test]
fn synthesized_miles_cover_the_marker_span() {
    for seed in 0..10 {
        let (_, segments, markers) = bent_route(seed);
        let idx = build_index(segments, markers.clone(), 5, MatchThresholds::default()).unwrap();
        let route = RouteRef::parse_lenient("SR 26");
        let miles = idx.synthesize_mile_segments(&route);
        assert_eq!(miles.len(), markers.len() - 1);
        for (k, w) in miles.windows(2).enumerate() {
            assert_eq!(w[0].posts.end_post(), w[1].posts.start_post(), "mile {k}");
            assert!(w[0].posts.start_post() < w[1].posts.start_post());
            assert_eq!(w[0].geometry.vertices().last(), w[1].geometry.vertices().first());
        }
        let total: f64 = miles.iter().map(|m| m.geometry.length_m()).sum();
        let line = idx.route("SR-26").unwrap().centerline.clone().unwrap();
        let first = point_to_polyline(markers[0].location, &line).arc_m;
        let last = point_to_polyline(markers.last().unwrap().location, &line).arc_m;
        let span = (last - first).abs();
        assert!((total - span).abs() <= 0.001 * span, "{total} vs {span}");
        // no two miles share any interior stretch
        for (i, a) in miles.iter().enumerate() {
            for b in &miles[i + 1..] {
                let mid = a.geometry.point_at_fraction(0.5);
                assert!(point_to_polyline(mid, &b.geometry).distance_m > 1.0);
            }
        }
    }
}

#[test]
fn one_marker_synthesizes_nothing() {
    let route = StraightRoute::new("I-70", kit::c(39.6, -86.5), 3, 0);
    let idx = build_index(route.segments(1), route.markers()[..1].to_vec(), 5, MatchThresholds::default()).unwrap();
    assert!(idx.synthesize_mile_segments(&RouteRef::parse_lenient("I-70")).is_empty());
    let poly = Polyline::new(vec![kit::c(0.0, 0.0), kit::c(0.0, 0.1)]).unwrap();
    assert!(poly.length_m() > 0.0);
}
