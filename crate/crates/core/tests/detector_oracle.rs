mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::*;
use wzsim::safety::{detect_all, detect_vehicle_conflicts, ConflictKind};

fn check(log: &Log, thr: f64, brake: f64) -> Result<(), String> {
    let config = open_road_config(thr, brake);
    let samples = flatten(log);
    let got = detect_all(&samples, config.clone());
    let want = brute_events(log, &config);
    if got != want {
        return Err(format!("detector {got:#?}\noracle {want:#?}"));
    }
    let episodes = brute_episodes(log, thr);
    if !exclusive(&got, &episodes) {
        return Err("a braking run is attributed twice".into());
    }
    Ok(())
}

#[test]
fn hand_logs_match_brute_force() {
    for (i, log) in hand_logs().iter().enumerate() {
        check(log, 1.5, 6.75).unwrap_or_else(|e| panic!("hand log {i}: {e}"));
    }
}

#[test]
fn closing_then_braking_is_one_rear_end() {
    let log = &hand_logs()[0];
    let events = detect_vehicle_conflicts(&flatten(log), 1.5, DT);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].kind, ConflictKind::RearEnd);
    assert_eq!(events[0].max_decel, 8.0);
}

#[test]
fn random_logs_match_brute_force() {
    let mut kinds = BTreeSet::new();
    for seed in 0..200 {
        let log = random_log(seed);
        check(&log, 1.5, 6.0).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        kinds.extend(brute_events(&log, &open_road_config(1.5, 6.0)).iter().map(|e| e.kind));
    }
    // the generator must actually exercise every event kind
    assert_eq!(kinds.len(), 3, "{kinds:?}");
}

/// Raising the threshold can bridge a quiet period and merge two episodes,
/// so the episode count is not monotone in the threshold.
#[test]
fn count_is_not_monotone_in_threshold() {
    let mut log = Vec::new();
    for k in 0..150 {
        let t = k as f64 * DT;
        // TTC 1.0 s, then 1.2 s for 6 s, then 1.0 s again
        let ttc: f64 = if (20..80).contains(&k) { 1.2 } else { 1.0 };
        let gap = 10.0 * ttc;
        log.push(vec![sample(t, 1, 1, 0.0, 20.0, 0.0), sample(t, 2, 1, gap + 5.0, 10.0, 0.0)]);
    }
    let samples = flatten(&log);
    assert_eq!(detect_vehicle_conflicts(&samples, 1.1, DT).len(), 2);
    assert_eq!(detect_vehicle_conflicts(&samples, 1.5, DT).len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// What does hold: every pair in conflict at a lower threshold is in
    /// conflict at a higher one.
    #[test]
    fn conflicting_pairs_grow_with_threshold(seed in 0u64..10_000, lo in 0.5f64..3.0, extra in 0.0f64..3.0) {
        let samples = flatten(&random_log(seed));
        let pairs = |thr: f64| -> BTreeSet<(u64, Option<u64>)> {
            detect_vehicle_conflicts(&samples, thr, DT).iter().map(|e| (e.primary, e.secondary)).collect()
        };
        prop_assert!(pairs(lo).is_subset(&pairs(lo + extra)));
    }
}
