mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::desk_scenario;
use wzsim::domain::{NormalSpec, ScenarioConfig};
use wzsim::engine::run;
use wzsim::toc::TocEventKind;

fn short(f: impl FnOnce(&mut ScenarioConfig)) -> ScenarioConfig {
    let mut c = desk_scenario();
    c.warmup = 60.0;
    c.duration = 120.0;
    f(&mut c);
    c
}

#[test]
fn same_seed_same_outcome() {
    let c = short(|_| {}).validate().unwrap();
    let (a, b) = (run(&c).unwrap(), run(&c).unwrap());
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.conflicts, b.conflicts);
    assert_eq!(a.toc_events, b.toc_events);
}

#[test]
fn toc_events_follow_the_phase_machine() {
    let c = short(|c| {
        c.mpr = 1.0;
        c.duration = 300.0;
    })
    .validate()
    .unwrap();
    let out = run(&c).unwrap();
    let mut per_vehicle: BTreeMap<u64, Vec<(f64, TocEventKind)>> = BTreeMap::new();
    for e in &out.toc_events {
        per_vehicle.entry(e.vehicle_id).or_default().push((e.time, e.kind));
    }
    assert!(!per_vehicle.is_empty(), "no take-over requests at full penetration");
    use TocEventKind::*;
    for (id, events) in per_vehicle {
        assert!(events.windows(2).all(|w| w[0].0 <= w[1].0), "vehicle {id} out of order");
        let kinds: Vec<TocEventKind> = events.iter().map(|e| e.1).collect();
        let legal: [&[TocEventKind]; 6] = [
            &[TorIssued],
            &[TorIssued, TakenOver],
            &[TorIssued, MrmStarted],
            &[TorIssued, MrmStarted, MrmStopped],
            &[TorIssued, MrmStarted, MrmStopped, TakenOver],
            &[TorIssued, MrmStarted, TakenOver],
        ];
        assert!(legal.contains(&kinds.as_slice()), "vehicle {id}: {kinds:?}");
    }
    assert!(out.indicators.is_consistent());
}

#[test]
fn no_automation_no_disengagements() {
    let out = run(&short(|c| c.mpr = 0.0).validate().unwrap()).unwrap();
    assert!(out.toc_events.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn deterministic_drivers_never_overlap(seed in 0u64..1_000, mpr in 0.0f64..=1.0) {
        let c = short(|c| {
            c.seed = seed;
            c.mpr = mpr;
            c.traffic_volume = 4500.0;
            c.warmup = 0.0;
            c.duration = 90.0;
            c.layout.closure_enabled = false;
            c.driver.sigma = NormalSpec::new(0.0, 0.0);
        })
        .validate()
        .unwrap();
        let out = run(&c).unwrap();
        prop_assert_eq!(out.diagnostics.negative_gaps, 0);
        prop_assert_eq!(out.diagnostics.teleport_violations, 0);
    }
}
