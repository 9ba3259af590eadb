//! Transition of control for Level 2/3 vehicles: dynamic take-over request
//! trigger, driver response, minimum risk maneuver and awareness recovery.
//!
//! Phase machine per automated vehicle:
//!
//! ```text
//! Automated -> TorPending -> Recovering -> Manual
//!                   |             ^
//!                   v             |
//!               MrmActive -> MrmStopped
//! ```
//!
//! There is no way back to `Automated` within a trial.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DriverParams, TakeoverStyle, TruncatedNormalSpec, VehicleId, VehicleKind};
use crate::error::{Error, Result};

/// Slack for comparing step times against scheduled transition times.
const TIME_EPS: f64 = 1e-9;

/// Speeds below this are treated as standstill at the end of an MRM step.
const STOP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToCState {
    Automated,
    TorPending {
        tor_time: f64,
        response_time: f64,
    },
    Recovering {
        takeover_time: f64,
        initial_awareness: f64,
        recovery_rate: f64,
    },
    Manual,
    MrmActive {
        tor_time: f64,
        response_time: f64,
    },
    MrmStopped {
        tor_time: f64,
        response_time: f64,
    },
}

impl ToCState {
    pub fn is_automated(&self) -> bool {
        matches!(self, ToCState::Automated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TocEventKind {
    TorIssued,
    TakenOver,
    MrmStarted,
    MrmStopped,
}

impl TocEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TocEventKind::TorIssued => "TorIssued",
            TocEventKind::TakenOver => "TakenOver",
            TocEventKind::MrmStarted => "MrmStarted",
            TocEventKind::MrmStopped => "MrmStopped",
        }
    }
}

impl fmt::Display for TocEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TocEventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TorIssued" => Ok(TocEventKind::TorIssued),
            "TakenOver" => Ok(TocEventKind::TakenOver),
            "MrmStarted" => Ok(TocEventKind::MrmStarted),
            "MrmStopped" => Ok(TocEventKind::MrmStopped),
            other => Err(format!("unknown ToC event {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TocEvent {
    pub kind: TocEventKind,
    pub time: f64,
    pub vehicle_id: VehicleId,
    pub vehicle_class: VehicleKind,
}

/// Braking distance to standstill at a constant MRM deceleration.
pub fn mrm_dist(current_speed: f64, mrm_brake_rate: f64) -> f64 {
    0.5 * current_speed * current_speed / mrm_brake_rate
}

/// Distance below which a TOR is due: `threshold · v + mrm_dist(v)`.
pub fn tor_distance(current_speed: f64, threshold: f64, mrm_brake_rate: f64) -> f64 {
    threshold * current_speed + mrm_dist(current_speed, mrm_brake_rate)
}

/// Dynamic TOR trigger.
pub fn check_dynamic_tor(
    dist_to_obstruction: f64,
    current_speed: f64,
    threshold: f64,
    mrm_brake_rate: f64,
) -> bool {
    dist_to_obstruction < tor_distance(current_speed, threshold, mrm_brake_rate)
}

/// Driver performance `t` seconds after taking over: `min(1, A0 + r·t)`.
pub fn awareness(initial: f64, rate: f64, t_since_takeover: f64) -> f64 {
    (initial + rate * t_since_takeover).min(1.0)
}

/// Driver parameters degraded by awareness `a`: imperfection blends toward
/// 1 and the headway stretches up to double. `a = 1` is the identity.
pub fn effective_driver_params(base: &DriverParams, a: f64) -> DriverParams {
    if a >= 1.0 {
        return *base;
    }
    let deficit = 1.0 - a;
    DriverParams {
        sigma: base.sigma + deficit * (1.0 - base.sigma),
        tau: base.tau * (2.0 - a),
        ..*base
    }
}

/// Identity and configuration of the vehicle whose phase machine is stepped.
#[derive(Debug, Clone, Copy)]
pub struct TocVehicle<'a> {
    pub id: VehicleId,
    pub class: VehicleKind,
    pub lead_time: f64,
    pub style: &'a TakeoverStyle,
}

impl TocVehicle<'_> {
    fn event(&self, kind: TocEventKind, time: f64) -> TocEvent {
        TocEvent {
            kind,
            time,
            vehicle_id: self.id,
            vehicle_class: self.class,
        }
    }
}

/// Raises a take-over request and draws the driver's response time.
pub fn issue_tor<R: Rng + ?Sized>(
    state: &ToCState,
    now: f64,
    vehicle: &TocVehicle<'_>,
    response_time: &TruncatedNormalSpec,
    rng: &mut R,
) -> Result<(ToCState, TocEvent)> {
    if !state.is_automated() {
        return Err(Error::IllegalTransition {
            vehicle: vehicle.id,
            message: format!("TOR issued in phase {state:?}"),
        });
    }
    let response_time = response_time.sample(rng)?;
    Ok((
        ToCState::TorPending {
            tor_time: now,
            response_time,
        },
        vehicle.event(TocEventKind::TorIssued, now),
    ))
}

fn take_over<R: Rng + ?Sized>(
    now: f64,
    vehicle: &TocVehicle<'_>,
    rng: &mut R,
    events: &mut Vec<TocEvent>,
) -> ToCState {
    let initial_awareness = vehicle.style.sample_initial_awareness(rng);
    let recovery_rate = vehicle.style.sample_recovery_rate(rng);
    events.push(vehicle.event(TocEventKind::TakenOver, now));
    ToCState::Recovering {
        takeover_time: now,
        initial_awareness,
        recovery_rate,
    }
}

/// Advances the phase machine to `now`. `speed` is the vehicle's current
/// speed; it decides when an MRM has reached standstill.
///
/// A response time equal to the lead time counts as a successful takeover.
/// After an MRM stop the driver takes over once the full response time
/// since the TOR has elapsed.
pub fn step_toc<R: Rng + ?Sized>(
    state: &ToCState,
    now: f64,
    speed: f64,
    vehicle: &TocVehicle<'_>,
    rng: &mut R,
) -> (ToCState, Vec<TocEvent>) {
    let mut events = Vec::new();
    let mut state = *state;
    loop {
        let next = match state {
            ToCState::TorPending {
                tor_time,
                response_time,
            } => {
                if response_time <= vehicle.lead_time {
                    (now + TIME_EPS >= tor_time + response_time)
                        .then(|| take_over(now, vehicle, rng, &mut events))
                } else if now + TIME_EPS >= tor_time + vehicle.lead_time {
                    events.push(vehicle.event(TocEventKind::MrmStarted, now));
                    Some(ToCState::MrmActive {
                        tor_time,
                        response_time,
                    })
                } else {
                    None
                }
            }
            ToCState::MrmActive {
                tor_time,
                response_time,
            } => (speed <= 0.0).then(|| {
                events.push(vehicle.event(TocEventKind::MrmStopped, now));
                ToCState::MrmStopped {
                    tor_time,
                    response_time,
                }
            }),
            ToCState::MrmStopped {
                tor_time,
                response_time,
            } => (now + TIME_EPS >= tor_time + response_time)
                .then(|| take_over(now, vehicle, rng, &mut events)),
            ToCState::Recovering {
                takeover_time,
                initial_awareness,
                recovery_rate,
            } => (awareness(initial_awareness, recovery_rate, now - takeover_time) >= 1.0)
                .then_some(ToCState::Manual),
            ToCState::Automated | ToCState::Manual => None,
        };
        match next {
            Some(s) => state = s,
            None => return (state, events),
        }
    }
}

/// Speed after one step of constant-deceleration MRM braking.
pub fn mrm_speed_update(speed: f64, mrm_decel: f64, dt: f64) -> f64 {
    let v = speed - mrm_decel * dt;
    if v <= STOP_EPS {
        0.0
    } else {
        v
    }
}

/// Awareness implied by the current phase, 1 outside recovery.
pub fn current_awareness(state: &ToCState, now: f64) -> f64 {
    match *state {
        ToCState::Recovering {
            takeover_time,
            initial_awareness,
            recovery_rate,
        } => awareness(initial_awareness, recovery_rate, (now - takeover_time).max(0.0)),
        _ => 1.0,
    }
}
