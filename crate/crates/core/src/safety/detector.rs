use std::collections::HashMap;

use crate::domain::{Lane, ScenarioConfig, VehicleId, WorkZoneLayout};
use crate::trajectory::TrajectorySample;

use super::{compute_ttc, ConflictEvent, ConflictKind};

/// Quiet time that closes a pair episode, s.
pub const EPISODE_GAP: f64 = 5.0;
/// Look-back from an episode start for a lane change by either party, s.
pub const LANE_CHANGE_WINDOW: f64 = 2.0;
/// Shortest hard-braking run that counts as evasive, s.
pub const MIN_BRAKING_DURATION: f64 = 0.5;
/// Minimum spacing between single-vehicle events of one vehicle, s.
pub const SINGLE_VEHICLE_COOLDOWN: f64 = 10.0;

const EPS: f64 = 1e-9;

/// Partner id used for episodes against the end of a closed lane.
const FIXED_OBJECT: VehicleId = VehicleId::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub ttc_threshold: f64,
    /// Deceleration at or above which braking is evasive, m/s².
    pub brake_threshold: f64,
    pub step_length: f64,
    pub layout: WorkZoneLayout,
}

impl DetectorConfig {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            ttc_threshold: s.ttc_threshold,
            brake_threshold: s.emergency_brake_fraction * s.driver.emergency_decel,
            step_length: s.step_length,
            layout: s.layout.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Episode {
    start: f64,
    last_below: f64,
    min_ttc: f64,
    max_decel: f64,
    /// Follower deceleration seen since `last_below`.
    pending_decel: f64,
    kind: ConflictKind,
    lane: Lane,
    position: f64,
}

#[derive(Debug, Clone, Copy)]
struct BrakingRun {
    first: f64,
    last: f64,
    max_decel: f64,
    lane: Lane,
    position: f64,
    attributed: bool,
}

#[derive(Debug, Clone, Copy)]
struct Previous {
    lane: Lane,
    closed: bool,
}

/// Streaming conflict detector. Feed one time step of samples at a time
/// with [`ConflictDetector::observe`], then call [`ConflictDetector::finish`].
///
/// Memory is bounded by the vehicles on the road plus the events found.
#[derive(Debug)]
pub struct ConflictDetector {
    config: DetectorConfig,
    previous: HashMap<VehicleId, Previous>,
    last_lane_change: HashMap<VehicleId, f64>,
    open: HashMap<(VehicleId, VehicleId), Episode>,
    runs: HashMap<VehicleId, BrakingRun>,
    pairs: Vec<ConflictEvent>,
    /// (follower, start, last_below) of every closed pair episode.
    pair_spans: Vec<(VehicleId, f64, f64)>,
    braking: Vec<(VehicleId, BrakingRun)>,
    /// Closed-area entries and fixed-object episodes.
    boundary: Vec<ConflictEvent>,
    last_time: Option<f64>,
}

impl ConflictDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self {
            config,
            previous: HashMap::new(),
            last_lane_change: HashMap::new(),
            open: HashMap::new(),
            runs: HashMap::new(),
            pairs: Vec::new(),
            pair_spans: Vec::new(),
            braking: Vec::new(),
            boundary: Vec::new(),
            last_time: None,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Consumes the samples of one time step. All samples must share a time
    /// later than the previous call's.
    pub fn observe(&mut self, step: &[TrajectorySample]) {
        let Some(now) = step.first().map(|s| s.time) else {
            return;
        };
        debug_assert!(step.iter().all(|s| s.time == now));
        let thr = self.config.ttc_threshold;

        // lane changes and closed-area entries against the previous step
        let consecutive = self
            .last_time
            .is_some_and(|t| now - t <= 1.5 * self.config.step_length + EPS);
        let mut previous = HashMap::with_capacity(step.len());
        for s in step {
            let closed = self.config.layout.is_closed_at(s.lane, s.position);
            let prev = if consecutive { self.previous.get(&s.vehicle_id) } else { None };
            if let Some(p) = prev {
                if p.lane != s.lane {
                    self.last_lane_change.insert(s.vehicle_id, now);
                }
            }
            if closed && !prev.is_some_and(|p| p.closed) {
                self.boundary.push(ConflictEvent {
                    kind: ConflictKind::SingleVehicle,
                    time: now,
                    primary: s.vehicle_id,
                    secondary: None,
                    min_ttc: None,
                    max_decel: (-s.accel).max(0.0),
                    position: s.position,
                    lane: s.lane,
                });
            }
            previous.insert(s.vehicle_id, Previous { lane: s.lane, closed });
        }
        self.previous = previous;
        self.last_lane_change
            .retain(|_, t| now - *t <= LANE_CHANGE_WINDOW + EPS);

        // adjacent same-lane pairs
        let mut order: Vec<&TrajectorySample> = step.iter().collect();
        order.sort_by(|a, b| {
            a.lane
                .cmp(&b.lane)
                .then(a.position.total_cmp(&b.position))
                .then(a.vehicle_id.cmp(&b.vehicle_id))
        });
        let mut leader_ttc: HashMap<VehicleId, Option<f64>> = HashMap::with_capacity(step.len());
        let mut below: Vec<(VehicleId, VehicleId, f64)> = Vec::new();
        for w in order.windows(2) {
            let (f, l) = (w[0], w[1]);
            if f.lane != l.lane {
                continue;
            }
            let gap = l.position - l.class.class().length - f.position;
            let ttc = compute_ttc(gap, f.speed, l.speed);
            leader_ttc.insert(f.vehicle_id, ttc);
            if let Some(t) = ttc.filter(|&t| t < thr) {
                below.push((f.vehicle_id, l.vehicle_id, t));
            }
        }

        // the end of a closed lane is a stopped obstacle at the taper
        let layout = &self.config.layout;
        let taper = layout.taper_start();
        for s in step {
            if layout.is_closed_lane(s.lane) && s.position <= taper {
                if let Some(t) = compute_ttc(taper - s.position, s.speed, 0.0).filter(|&t| t < thr) {
                    below.push((s.vehicle_id, FIXED_OBJECT, t));
                }
            }
        }

        let decel: HashMap<VehicleId, &TrajectorySample> =
            step.iter().map(|s| (s.vehicle_id, s)).collect();
        for (f, l, ttc) in below {
            let key = (f, l);
            let fs = decel[&f];
            match self.open.get_mut(&key) {
                Some(ep) if now - ep.last_below < EPISODE_GAP - EPS => {
                    ep.last_below = now;
                    ep.min_ttc = ep.min_ttc.min(ttc);
                }
                _ => {
                    if let Some(old) = self.open.remove(&key) {
                        self.close(key, old);
                    }
                    let changed = |v: VehicleId| {
                        self.last_lane_change
                            .get(&v)
                            .is_some_and(|&t| now - t <= LANE_CHANGE_WINDOW + EPS)
                    };
                    let kind = if l == FIXED_OBJECT {
                        ConflictKind::SingleVehicle
                    } else if changed(f) || changed(l) {
                        ConflictKind::LaneChange
                    } else {
                        ConflictKind::RearEnd
                    };
                    self.open.insert(
                        key,
                        Episode {
                            start: now,
                            last_below: now,
                            min_ttc: ttc,
                            max_decel: 0.0,
                            pending_decel: 0.0,
                            kind,
                            lane: fs.lane,
                            position: fs.position,
                        },
                    );
                }
            }
        }
        let mut closing = Vec::new();
        for (key, ep) in self.open.iter_mut() {
            if let Some(fs) = decel.get(&key.0) {
                ep.pending_decel = ep.pending_decel.max(-fs.accel);
            }
            if ep.last_below == now {
                ep.max_decel = ep.max_decel.max(ep.pending_decel);
                ep.pending_decel = 0.0;
            } else if now - ep.last_below >= EPISODE_GAP - EPS {
                closing.push(*key);
            }
        }
        for key in closing {
            let ep = self.open.remove(&key).expect("listed above");
            self.close(key, ep);
        }

        // hard-braking runs
        let dt = self.config.step_length;
        for s in step {
            let d = -s.accel;
            let hard = d >= self.config.brake_threshold - EPS;
            let run = self.runs.get_mut(&s.vehicle_id);
            match (hard, run) {
                (true, Some(r)) if now - r.last <= 1.5 * dt + EPS => {
                    r.last = now;
                    r.max_decel = r.max_decel.max(d);
                }
                (true, _) => {
                    self.end_run(s.vehicle_id);
                    let attributed = leader_ttc
                        .get(&s.vehicle_id)
                        .copied()
                        .flatten()
                        .is_some_and(|t| t < 2.0 * thr);
                    self.runs.insert(
                        s.vehicle_id,
                        BrakingRun {
                            first: now,
                            last: now,
                            max_decel: d,
                            lane: s.lane,
                            position: s.position,
                            attributed,
                        },
                    );
                }
                (false, _) => self.end_run(s.vehicle_id),
            }
        }
        let gone: Vec<VehicleId> = self
            .runs
            .keys()
            .filter(|id| !decel.contains_key(id))
            .copied()
            .collect();
        for id in gone {
            self.end_run(id);
        }
        self.last_time = Some(now);
    }

    fn close(&mut self, key: (VehicleId, VehicleId), ep: Episode) {
        let fixed = key.1 == FIXED_OBJECT;
        let event = ConflictEvent {
            kind: ep.kind,
            time: ep.start,
            primary: key.0,
            secondary: (!fixed).then_some(key.1),
            min_ttc: Some(ep.min_ttc),
            max_decel: ep.max_decel.max(0.0),
            position: ep.position,
            lane: ep.lane,
        };
        if fixed {
            self.boundary.push(event);
        } else {
            self.pair_spans.push((key.0, ep.start, ep.last_below));
            self.pairs.push(event);
        }
    }

    fn end_run(&mut self, id: VehicleId) {
        if let Some(r) = self.runs.remove(&id) {
            if r.last - r.first + self.config.step_length >= MIN_BRAKING_DURATION - EPS {
                self.braking.push((id, r));
            }
        }
    }

    /// Closes every open episode and returns all events ordered by time,
    /// then primary vehicle.
    pub fn finish(mut self) -> Vec<ConflictEvent> {
        let mut keys: Vec<_> = self.open.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let ep = self.open.remove(&key).expect("listed above");
            self.close(key, ep);
        }
        let ids: Vec<VehicleId> = self.runs.keys().copied().collect();
        for id in ids {
            self.end_run(id);
        }

        let mut spans: HashMap<VehicleId, Vec<(f64, f64)>> = HashMap::new();
        for &(f, a, b) in &self.pair_spans {
            spans.entry(f).or_default().push((a, b));
        }
        let mut single = std::mem::take(&mut self.boundary);
        for (id, r) in &self.braking {
            let overlaps = spans
                .get(id)
                .is_some_and(|v| v.iter().any(|&(a, b)| a <= r.last + EPS && r.first <= b + EPS));
            if r.attributed || overlaps {
                continue;
            }
            single.push(ConflictEvent {
                kind: ConflictKind::SingleVehicle,
                time: r.first,
                primary: *id,
                secondary: None,
                min_ttc: None,
                max_decel: r.max_decel,
                position: r.position,
                lane: r.lane,
            });
        }
        single.sort_by(|a, b| a.primary.cmp(&b.primary).then(a.time.total_cmp(&b.time)));
        let mut kept: Vec<ConflictEvent> = Vec::with_capacity(single.len());
        let mut last: Option<(VehicleId, f64)> = None;
        for e in single {
            if let Some((v, t)) = last {
                if v == e.primary && e.time - t < SINGLE_VEHICLE_COOLDOWN - EPS {
                    continue;
                }
            }
            last = Some((e.primary, e.time));
            kept.push(e);
        }

        let mut all = self.pairs;
        all.extend(kept);
        sort_events(&mut all);
        all
    }
}

pub(crate) fn sort_events(events: &mut [ConflictEvent]) {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.primary.cmp(&b.primary))
            .then(a.kind.cmp(&b.kind))
            .then(a.secondary.cmp(&b.secondary))
    });
}

fn run_batch(samples: &[TrajectorySample], config: DetectorConfig) -> Vec<ConflictEvent> {
    let mut det = ConflictDetector::new(config);
    for step in samples.chunk_by(|a, b| a.time == b.time) {
        det.observe(step);
    }
    det.finish()
}

/// Pair episodes (rear-end and lane-change conflicts) in a time-sorted log.
pub fn detect_vehicle_conflicts(
    samples: &[TrajectorySample],
    ttc_threshold: f64,
    step_length: f64,
) -> Vec<ConflictEvent> {
    let config = DetectorConfig {
        ttc_threshold,
        brake_threshold: f64::INFINITY,
        step_length,
        layout: WorkZoneLayout {
            closure_enabled: false,
            ..Default::default()
        },
    };
    run_batch(samples, config)
        .into_iter()
        .filter(|e| e.kind.is_multi_vehicle())
        .collect()
}

/// Single-vehicle conflicts in a time-sorted log. Pair episodes are still
/// computed so that braking explained by a leader is not double counted.
pub fn detect_single_vehicle_conflicts(samples: &[TrajectorySample], config: DetectorConfig) -> Vec<ConflictEvent> {
    run_batch(samples, config)
        .into_iter()
        .filter(|e| !e.kind.is_multi_vehicle())
        .collect()
}

/// Every conflict in a time-sorted log.
pub fn detect_all(samples: &[TrajectorySample], config: DetectorConfig) -> Vec<ConflictEvent> {
    run_batch(samples, config)
}
