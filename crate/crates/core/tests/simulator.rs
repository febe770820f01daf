use roadsearch::geometry::{reconstruct, validate, Pose, RoadGenome};
use roadsearch::simulator::{
    detect_oob, generate_seed_pool, simulate, AgentConfig, Outcome, RoadConfig, SimulationTrace, VehicleState,
};

fn constant(c: f64) -> SimulationTrace {
    let g = RoadGenome::from_curvatures(vec![c; 50], 1.0).unwrap();
    simulate(&reconstruct(&g, Pose::default()), &AgentConfig::default()).unwrap()
}

/// Smallest constant curvature (to 1e-6) at which the agent leaves the lane,
/// located by bisection between a passing and a failing curvature.
fn failing_curvature() -> f64 {
    let (mut lo, mut hi) = (0.0, 0.1);
    assert_eq!(constant(lo).outcome, Outcome::Pass);
    assert_eq!(constant(hi).outcome, Outcome::Fail);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if constant(mid).outcome == Outcome::Fail {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[test]
fn too_sharp_constant_curve_fails_reproducibly() {
    let c = failing_curvature();
    assert!(c > 0.0 && c <= 0.1);
    let first = constant(c);
    assert_eq!(first.outcome, Outcome::Fail);
    assert!(!first.oob_events.is_empty());
    assert_eq!(constant(c), first);
    assert_eq!(failing_curvature(), c);
}

#[test]
fn straight_duration_matches_distance_over_speed() {
    let trace = constant(0.0);
    let agent = AgentConfig::default();
    assert_eq!(trace.outcome, Outcome::Pass);
    assert!((trace.duration - 50.0 / agent.v_max).abs() <= agent.timestep);
    assert!((trace.duration - trace.states.len() as f64 * agent.timestep).abs() < 1e-12);
}

#[test]
fn traces_are_deterministic_and_consistent() {
    let roads = RoadConfig::default();
    let agent = AgentConfig::default();
    let pool = generate_seed_pool(40, 3, &roads, &agent).unwrap();
    for l in &pool {
        let road = roads.road(&l.genome);
        let a = simulate(&road, &agent).unwrap();
        let b = simulate(&road, &agent).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.outcome == Outcome::Fail, !a.oob_events.is_empty());
        assert!(a.states.iter().all(|s| (0.0..=agent.v_max).contains(&s.speed)));
        if let Some(e) = a.oob_events.first() {
            assert_eq!(e.trace_index, a.states.len() - 1);
            assert_eq!(a.oob_events.len(), 1);
        }
    }
}

#[test]
fn mirrored_roads_give_mirrored_traces() {
    let roads = RoadConfig::default();
    let agent = AgentConfig::default();
    let pool = generate_seed_pool(60, 17, &roads, &agent).unwrap();
    let mut fails = 0;
    for l in &pool {
        let a = simulate(&roads.road(&l.genome), &agent).unwrap();
        let b = simulate(&roads.road(&l.genome.negated()), &agent).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.states.len(), b.states.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert!((sa.pose.x - sb.pose.x).abs() < 1e-6);
            assert!((sa.pose.y + sb.pose.y).abs() < 1e-6);
        }
        for (ea, eb) in a.oob_events.iter().zip(&b.oob_events) {
            assert!((ea.lateral_offset + eb.lateral_offset).abs() < 1e-6);
        }
        fails += (a.outcome == Outcome::Fail) as usize;
    }
    assert!(fails > 0, "fixture should contain failing roads");
}

#[test]
fn detect_oob_is_monotone_in_tolerance() {
    let g = RoadGenome::straight(50, 1.0).unwrap();
    let road = reconstruct(&g, Pose::default());
    for k in 0..=60 {
        let y = -3.0 + 0.1 * k as f64;
        let state = VehicleState { pose: Pose::new(20.0, y, 0.0), speed: 5.0 };
        let tolerances: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for w in tolerances.windows(2) {
            if detect_oob(&state, &road, w[1], 2.0).is_some() {
                assert!(detect_oob(&state, &road, w[0], 2.0).is_some());
            }
        }
    }
}

#[test]
fn seed_pool_is_deterministic_valid_and_has_both_classes() {
    let roads = RoadConfig::default();
    let agent = AgentConfig::default();
    let a = generate_seed_pool(10, 5, &roads, &agent).unwrap();
    let b = generate_seed_pool(10, 5, &roads, &agent).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let pool = generate_seed_pool(2000, 0, &roads, &agent).unwrap();
    assert_eq!(pool.len(), 2000);
    for l in &pool {
        assert_eq!(l.labels.len(), 50);
        assert!(validate(&roads.road(&l.genome), &l.genome, roads.map_size).valid);
    }
    let positive = pool.iter().filter(|l| l.positives() > 0).count();
    assert!(positive >= 1 && positive < pool.len());
}
