//! Fixed-step simulation of one trial.
//!
//! Every step runs the same sub-phases in order: TOR checks, ToC phase
//! machines, lane changes, longitudinal control, position integration,
//! removal at the road end, insertion from the entry queues, and sampling.
//! Within a phase vehicles are visited upstream to downstream.

mod demand;
mod run;

pub use demand::{generate_demand, Arrival};
pub use run::{in_trial, run, run_observed, SimSummary, StepObserver, TrialOutput};

use std::collections::VecDeque;

use crate::domain::{
    stream_rng, Lane, SimRng, SpeedProfile, ValidatedScenario, VehicleId, VehicleKind,
};
use crate::driving::{
    acc_acceleration, closure_urgency, gap_preparation_accel, gap_preparation_target,
    krauss_speed_update, lane_change_decision, safe_speed, AdjacentLane, Ego, FollowContext,
    LaneChange, Leader, Neighbor, Neighbors,
};
use crate::error::{Error, Result};
use crate::toc::{
    check_dynamic_tor, current_awareness, effective_driver_params, issue_tor, mrm_speed_update,
    step_toc, ToCState, TocEvent, TocEventKind, TocVehicle,
};
use crate::trajectory::{Mode, TrajectorySample};
use crate::domain::DriverParams;

/// Seconds a lane change stays flagged as in progress.
pub const LANE_CHANGE_HOLD: f64 = 2.0;

/// Entry speed as a fraction of the posted limit at the road start.
pub const INSERTION_SPEED_FACTOR: f64 = 0.8;

/// Distance over which lane leaders shape the expected speed of a lane, m.
pub const LANE_LOOKAHEAD: f64 = 100.0;

const DEMAND_STREAM: u64 = 1;
const DYNAMICS_STREAM: u64 = 2;

/// Tolerance for gap and displacement checks, m.
const GEOMETRY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub automated: bool,
    pub lane: Lane,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub driver: DriverParams,
    pub toc: Option<ToCState>,
    /// Seconds left on the lane-change flag.
    pub lane_change_remaining: f64,
    record_toc: bool,
}

impl Vehicle {
    pub fn length(&self) -> f64 {
        self.kind.class().length
    }

    pub fn lane_change_in_progress(&self) -> bool {
        self.lane_change_remaining > 0.0
    }

    pub fn mode(&self) -> Mode {
        match self.toc {
            None | Some(ToCState::Manual) => Mode::Manual,
            Some(ToCState::Automated) => Mode::Automated,
            Some(ToCState::TorPending { .. }) => Mode::TorPending,
            Some(ToCState::Recovering { .. }) => Mode::Recovering,
            Some(ToCState::MrmActive { .. } | ToCState::MrmStopped { .. }) => Mode::Mrm,
        }
    }

    fn may_change_lane(&self) -> bool {
        !self.lane_change_in_progress()
            && !matches!(
                self.toc,
                Some(ToCState::TorPending { .. } | ToCState::MrmActive { .. } | ToCState::MrmStopped { .. })
            )
    }
}

/// Per-trial kinematic health counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    /// Steps where the no-overlap bound overrode a control law.
    pub overlap_interventions: u64,
    pub negative_gaps: u64,
    pub teleport_violations: u64,
    pub min_gap: f64,
}

pub struct World {
    scenario: ValidatedScenario,
    profile: SpeedProfile,
    dt: f64,
    step_index: u64,
    vehicles: Vec<Vehicle>,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    queues: Vec<VecDeque<Arrival>>,
    rng: SimRng,
    next_id: VehicleId,
    inserted: u64,
    exited: u64,
    toc_log: Vec<TocEvent>,
    diagnostics: Diagnostics,
}

/// Per-lane vehicle indices sorted upstream to downstream.
type LaneIndex = Vec<Vec<usize>>;

impl World {
    pub fn new(scenario: ValidatedScenario) -> Self {
        let horizon = scenario.warmup + scenario.duration;
        let arrivals = generate_demand(&scenario, horizon, &mut stream_rng(scenario.seed, DEMAND_STREAM));
        Self::with_arrivals(scenario, arrivals)
    }

    /// World fed from an explicit arrival schedule (sorted by time).
    pub fn with_arrivals(scenario: ValidatedScenario, arrivals: Vec<Arrival>) -> Self {
        let lanes = scenario.layout.lane_count as usize;
        Self {
            profile: SpeedProfile::new(&scenario.layout),
            dt: scenario.step_length,
            rng: stream_rng(scenario.seed, DYNAMICS_STREAM),
            scenario,
            step_index: 0,
            vehicles: Vec::new(),
            arrivals,
            next_arrival: 0,
            queues: vec![VecDeque::new(); lanes],
            next_id: 0,
            inserted: 0,
            exited: 0,
            toc_log: Vec::new(),
            diagnostics: Diagnostics {
                min_gap: f64::INFINITY,
                ..Default::default()
            },
        }
    }

    pub fn scenario(&self) -> &ValidatedScenario {
        &self.scenario
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn exited(&self) -> u64 {
        self.exited
    }

    pub fn queued(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn toc_events(&self) -> &[TocEvent] {
        &self.toc_log
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Places a vehicle directly on the road, bypassing the entry queues.
    pub fn spawn(&mut self, mut vehicle: Vehicle) -> VehicleId {
        vehicle.id = self.next_id;
        self.next_id += 1;
        self.inserted += 1;
        let id = vehicle.id;
        self.vehicles.push(vehicle);
        id
    }

    /// A fresh vehicle template for [`World::spawn`].
    pub fn make_vehicle(
        kind: VehicleKind,
        automated: bool,
        lane: Lane,
        position: f64,
        speed: f64,
        driver: DriverParams,
    ) -> Vehicle {
        Vehicle {
            id: 0,
            kind,
            automated,
            lane,
            position,
            speed,
            accel: 0.0,
            driver,
            toc: automated.then_some(ToCState::Automated),
            lane_change_remaining: 0.0,
            record_toc: false,
        }
    }

    fn recording(&self, now: f64) -> bool {
        now + 1e-9 >= self.scenario.warmup
    }

    fn upstream_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
            va.position.total_cmp(&vb.position).then(va.id.cmp(&vb.id))
        });
        order
    }

    fn lane_index(&self, order: &[usize]) -> LaneIndex {
        let mut lanes = vec![Vec::new(); self.scenario.layout.lane_count as usize + 1];
        for &i in order {
            lanes[self.vehicles[i].lane as usize].push(i);
        }
        lanes
    }

    /// Advances one step; returns the samples of this step (empty during
    /// warm-up).
    pub fn step(&mut self) -> Result<Vec<TrajectorySample>> {
        self.step_index += 1;
        let now = self.time();

        let order = self.upstream_order();
        self.tor_checks(&order, now)?;
        self.advance_toc(&order, now);
        let mut lanes = self.lane_index(&order);
        if self.scenario.lane_changes {
            self.lane_changes(&order, &mut lanes, now);
        } else {
            for v in &mut self.vehicles {
                v.lane_change_remaining = (v.lane_change_remaining - self.dt).max(0.0);
            }
        }
        let desired = self.longitudinal(&order, &lanes, now);
        self.integrate(&lanes, desired, now)?;
        self.remove_exited();
        self.insert(now);

        if !self.recording(now) {
            return Ok(Vec::new());
        }
        let mut samples: Vec<TrajectorySample> = self
            .vehicles
            .iter()
            .map(|v| TrajectorySample {
                time: now,
                vehicle_id: v.id,
                class: v.kind,
                automated: v.automated,
                lane: v.lane,
                position: v.position,
                speed: v.speed,
                accel: v.accel,
                mode: v.mode(),
            })
            .collect();
        samples.sort_by_key(|s| s.vehicle_id);
        Ok(samples)
    }

    fn tor_checks(&mut self, order: &[usize], now: f64) -> Result<()> {
        let layout = &self.scenario.layout;
        let taper = layout.taper_start();
        let threshold = self.scenario.disengagement_threshold;
        let mrm_decel = self.scenario.takeover_style.mrm_decel;
        let recording = self.recording(now);
        for &i in order {
            let v = &self.vehicles[i];
            let due = v.toc.is_some_and(|s| s.is_automated())
                && layout.is_closed_lane(v.lane)
                && v.position < taper
                && check_dynamic_tor(taper - v.position, v.speed, threshold, mrm_decel);
            if !due {
                continue;
            }
            let (state, event) = {
                let tv = TocVehicle {
                    id: v.id,
                    class: v.kind,
                    lead_time: self.scenario.tor_lead_time,
                    style: &self.scenario.takeover_style,
                };
                issue_tor(&ToCState::Automated, now, &tv, &self.scenario.response_time, &mut self.rng)?
            };
            let v = &mut self.vehicles[i];
            v.toc = Some(state);
            v.record_toc = recording;
            if recording {
                self.toc_log.push(event);
            }
        }
        Ok(())
    }

    fn advance_toc(&mut self, order: &[usize], now: f64) {
        for &i in order {
            let v = &self.vehicles[i];
            let Some(state) = v.toc else { continue };
            if matches!(state, ToCState::Automated | ToCState::Manual) {
                continue;
            }
            let (next, events) = {
                let tv = TocVehicle {
                    id: v.id,
                    class: v.kind,
                    lead_time: self.scenario.tor_lead_time,
                    style: &self.scenario.takeover_style,
                };
                step_toc(&state, now, v.speed, &tv, &mut self.rng)
            };
            let v = &mut self.vehicles[i];
            v.toc = Some(next);
            if v.record_toc {
                self.toc_log.extend(events);
            }
        }
    }

    /// Leader in `lane` strictly ahead of `position`, as (index, net gap).
    fn leader_in(&self, lanes: &LaneIndex, lane: Lane, position: f64) -> Option<(usize, f64)> {
        let list = &lanes[lane as usize];
        let k = list.partition_point(|&j| self.vehicles[j].position <= position);
        list.get(k).map(|&j| {
            let l = &self.vehicles[j];
            (j, l.position - l.length() - position)
        })
    }

    /// Follower in `lane` at or behind `position`, as (index, net gap to a
    /// vehicle of `length` placed there).
    fn follower_in(&self, lanes: &LaneIndex, lane: Lane, position: f64, length: f64, skip: usize) -> Option<(usize, f64)> {
        let list = &lanes[lane as usize];
        let k = list.partition_point(|&j| self.vehicles[j].position <= position);
        list[..k].iter().rev().find(|&&j| j != skip).map(|&j| {
            let f = &self.vehicles[j];
            (j, position - length - f.position)
        })
    }

    /// Posted limit now, and the anticipated limit one step ahead so that
    /// the vehicle never crosses into a lower limit too fast.
    fn speed_cap(&self, v: &Vehicle) -> f64 {
        self.profile
            .anticipated_limit(v.position + v.speed * self.dt, v.driver.decel)
            .min(self.profile.limit_at(v.position))
            .min(v.kind.class().max_speed)
    }

    fn expected_speed(&self, lanes: &LaneIndex, v: &Vehicle, lane: Lane) -> f64 {
        let cap = self.speed_cap(v);
        match self.leader_in(lanes, lane, v.position) {
            Some((j, gap)) if gap <= LANE_LOOKAHEAD => cap.min(self.vehicles[j].speed),
            _ => cap,
        }
    }

    fn lane_changes(&mut self, order: &[usize], lanes: &mut LaneIndex, now: f64) {
        let _ = now;
        let layout = self.scenario.layout.clone();
        let lane_count = layout.lane_count;
        for &i in order {
            {
                let v = &mut self.vehicles[i];
                v.lane_change_remaining = (v.lane_change_remaining - self.dt).max(0.0);
            }
            let v = &self.vehicles[i];
            if !v.may_change_lane() {
                continue;
            }
            let ego = Ego {
                lane: v.lane,
                position: v.position,
                speed: v.speed,
                length: v.length(),
            };
            let adjacent = |target: Lane| -> AdjacentLane {
                let leader = self.leader_in(lanes, target, v.position).map(|(j, gap)| Neighbor {
                    gap,
                    speed: self.vehicles[j].speed,
                });
                let follower = self
                    .follower_in(lanes, target, v.position, v.length(), i)
                    .map(|(j, gap)| Neighbor {
                        gap,
                        speed: self.vehicles[j].speed,
                    });
                AdjacentLane {
                    leader,
                    follower,
                    expected_speed: self.expected_speed(lanes, v, target),
                }
            };
            let neighbors = Neighbors {
                current_expected_speed: self.expected_speed(lanes, v, v.lane),
                left: (v.lane < lane_count).then(|| adjacent(v.lane + 1)),
                right: (v.lane > 1).then(|| adjacent(v.lane - 1)),
            };
            let urgency = if layout.is_closed_lane(v.lane) {
                closure_urgency(&layout, v.position)
            } else {
                0.0
            };
            let decision = lane_change_decision(&ego, &neighbors, &layout, &v.driver, urgency);
            if decision == LaneChange::Stay {
                continue;
            }
            let from = v.lane;
            let to = decision.target(from);
            let position = v.position;
            lanes[from as usize].retain(|&j| j != i);
            let list = &lanes[to as usize];
            let k = list.partition_point(|&j| {
                let o = &self.vehicles[j];
                o.position < position || (o.position == position && o.id < self.vehicles[i].id)
            });
            lanes[to as usize].insert(k, i);
            let v = &mut self.vehicles[i];
            v.lane = to;
            v.lane_change_remaining = LANE_CHANGE_HOLD;
        }
    }

    /// Leader seen by vehicle `i`: the nearer of the next vehicle in its
    /// lane and the end of a closed lane. Returns the leader plus the
    /// leader's braking capability (None for the fixed obstruction).
    fn follow_leader(&self, lanes: &LaneIndex, i: usize) -> Option<(Leader, Option<f64>)> {
        let v = &self.vehicles[i];
        let layout = &self.scenario.layout;
        let vehicle = self.leader_in(lanes, v.lane, v.position).map(|(j, gap)| {
            let l = &self.vehicles[j];
            (Leader { speed: l.speed, gap }, Some(l.driver.decel))
        });
        let obstruction = (layout.is_closed_lane(v.lane) && v.position <= layout.taper_start()).then(|| {
            (
                Leader {
                    speed: 0.0,
                    gap: layout.taper_start() - v.position,
                },
                None,
            )
        });
        match (vehicle, obstruction) {
            (Some(a), Some(b)) => Some(if b.0.gap < a.0.gap { b } else { a }),
            (a, b) => a.or(b),
        }
    }

    fn longitudinal(&mut self, order: &[usize], lanes: &LaneIndex, now: f64) -> Vec<f64> {
        let dt = self.dt;
        let mut desired = vec![0.0; self.vehicles.len()];
        for &i in order {
            let v = &self.vehicles[i];
            let limit = self.speed_cap(v);
            let seen = self.follow_leader(lanes, i);
            // leader speed rescaled so the follower's own-decel safe speed
            // accounts for a leader that brakes harder
            let scaled = seen.map(|(l, b_leader)| {
                let speed = match b_leader {
                    Some(bl) if bl > v.driver.decel => l.speed * (v.driver.decel / bl).sqrt(),
                    _ => l.speed,
                };
                Leader { speed, ..l }
            });
            let ctx = FollowContext {
                ego_speed: v.speed,
                leader: scaled,
                speed_limit: limit,
                dt,
            };
            let automation_cap = |ctx: &FollowContext| {
                ctx.leader
                    .map_or(f64::INFINITY, |l| safe_speed(l.gap, l.speed, v.driver.decel, dt))
            };
            let acc = &self.scenario.acc;
            let new_speed = match v.toc {
                None | Some(ToCState::Manual) => krauss_speed_update(&ctx, &v.driver, &mut self.rng),
                Some(state @ ToCState::Recovering { .. }) => {
                    let p = effective_driver_params(&v.driver, current_awareness(&state, now));
                    krauss_speed_update(&ctx, &p, &mut self.rng)
                }
                Some(ToCState::Automated) => {
                    let raw = FollowContext { leader: seen.map(|s| s.0), ..ctx };
                    let a = acc_acceleration(&raw, acc, &v.driver);
                    (v.speed + a * dt).clamp(0.0, limit).min(automation_cap(&ctx))
                }
                Some(ToCState::TorPending { .. }) => {
                    let raw = FollowContext { leader: seen.map(|s| s.0), ..ctx };
                    let target = gap_preparation_target(acc, &v.driver);
                    let a = gap_preparation_accel(&raw, acc, &v.driver, target);
                    (v.speed + a * dt).clamp(0.0, limit).min(automation_cap(&ctx))
                }
                Some(ToCState::MrmActive { .. }) => {
                    mrm_speed_update(v.speed, self.scenario.takeover_style.mrm_decel, dt)
                        .min(automation_cap(&ctx))
                }
                Some(ToCState::MrmStopped { .. }) => 0.0,
            };
            desired[i] = new_speed.max(0.0);
        }
        desired
    }

    fn integrate(&mut self, lanes: &LaneIndex, mut speeds: Vec<f64>, now: f64) -> Result<()> {
        let dt = self.dt;
        let layout = &self.scenario.layout;
        let taper = layout.taper_start();
        for (lane, list) in lanes.iter().enumerate() {
            // downstream first so each leader's final speed is known
            for k in (0..list.len()).rev() {
                let i = list[k];
                let v = &self.vehicles[i];
                let mut cap = f64::INFINITY;
                if let Some(&j) = list.get(k + 1) {
                    let l = &self.vehicles[j];
                    let gap = l.position - l.length() - v.position;
                    cap = cap.min(gap / dt + speeds[j]);
                }
                if layout.is_closed_lane(lane as Lane) && v.position <= taper {
                    cap = cap.min((taper - v.position) / dt);
                }
                let cap = cap.max(0.0);
                if speeds[i] > cap + 1e-12 {
                    self.diagnostics.overlap_interventions += 1;
                    speeds[i] = cap;
                }
            }
        }
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            let speed = speeds[i];
            let dx = speed * dt;
            if dx > v.kind.class().max_speed * dt + GEOMETRY_EPS {
                self.diagnostics.teleport_violations += 1;
            }
            v.accel = (speed - v.speed) / dt;
            v.speed = speed;
            v.position += dx;
        }
        for (lane, list) in lanes.iter().enumerate() {
            for w in list.windows(2) {
                let (f, l) = (&self.vehicles[w[0]], &self.vehicles[w[1]]);
                let gap = l.position - l.length() - f.position;
                self.diagnostics.min_gap = self.diagnostics.min_gap.min(gap);
                if gap < -GEOMETRY_EPS {
                    self.diagnostics.negative_gaps += 1;
                    return Err(Error::LaneOverlap {
                        time: now,
                        lane: lane as Lane,
                        follower: f.id,
                        leader: l.id,
                        overlap: -gap,
                    });
                }
            }
        }
        Ok(())
    }

    fn remove_exited(&mut self) {
        let end = self.scenario.layout.road_length;
        let before = self.vehicles.len();
        self.vehicles.retain(|v| v.position <= end);
        self.exited += (before - self.vehicles.len()) as u64;
    }

    fn insert(&mut self, now: f64) {
        while let Some(a) = self.arrivals.get(self.next_arrival) {
            if a.time > now + 1e-9 {
                break;
            }
            self.queues[a.lane as usize - 1].push_back(*a);
            self.next_arrival += 1;
        }
        let entry_limit = self.profile.limit_at(0.0) * INSERTION_SPEED_FACTOR;
        for lane_idx in 0..self.queues.len() {
            let Some(a) = self.queues[lane_idx].front().copied() else {
                continue;
            };
            let lane = lane_idx as Lane + 1;
            let speed = entry_limit.min(a.kind.class().max_speed);
            let last = self
                .vehicles
                .iter()
                .filter(|v| v.lane == lane)
                .min_by(|x, y| x.position.total_cmp(&y.position));
            let fits = match last {
                None => true,
                Some(l) => {
                    let gap = l.position - l.length();
                    let leader_speed = if l.driver.decel > a.driver.decel {
                        l.speed * (a.driver.decel / l.driver.decel).sqrt()
                    } else {
                        l.speed
                    };
                    gap >= 0.0 && safe_speed(gap, leader_speed, a.driver.decel, a.driver.tau) >= speed
                }
            };
            if !fits {
                continue;
            }
            self.queues[lane_idx].pop_front();
            let mut v = Self::make_vehicle(a.kind, a.automated, lane, 0.0, speed, a.driver);
            v.id = self.next_id;
            self.next_id += 1;
            self.inserted += 1;
            self.vehicles.push(v);
        }
    }
}

/// Count of recorded events of `kind`.
pub fn count_events(events: &[TocEvent], kind: TocEventKind) -> usize {
    events.iter().filter(|e| e.kind == kind).count()
}
