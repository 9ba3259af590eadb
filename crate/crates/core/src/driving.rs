//! Longitudinal control laws (Krauss for human drivers, ACC for the
//! automation) and the gap-acceptance lane-change decision.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DriverParams, Lane, WorkZoneLayout};

/// Nearest vehicle (or obstruction) ahead in the ego lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub speed: f64,
    /// Bumper-to-bumper distance, m.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowContext {
    pub ego_speed: f64,
    pub leader: Option<Leader>,
    pub speed_limit: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccSettings {
    pub desired_time_gap: f64,
    pub min_gap: f64,
    pub speed_gain: f64,
    pub gap_gain: f64,
    pub speed_diff_gain: f64,
    pub detection_range: f64,
}

impl Default for AccSettings {
    fn default() -> Self {
        Self {
            desired_time_gap: 1.0,
            min_gap: 2.0,
            speed_gain: 0.4,
            gap_gain: 0.23,
            speed_diff_gain: 0.07,
            detection_range: 120.0,
        }
    }
}

/// Krauss safe speed: the largest speed from which, after reacting for
/// `tau` and braking at `decel`, the follower stops behind a leader that
/// brakes at the same rate.
pub fn safe_speed(gap: f64, leader_speed: f64, decel: f64, tau: f64) -> f64 {
    let gap = gap.max(0.0);
    let bt = decel * tau;
    -bt + (bt * bt + leader_speed * leader_speed + 2.0 * decel * gap).sqrt()
}

/// One Krauss step for a human driver.
///
/// `v_des = min(limit, v + a·dt, v_safe)`, then dawdling by
/// `sigma·a·dt·eta` with `eta ~ U(0,1)`. One uniform is drawn per call
/// regardless of `sigma`.
pub fn krauss_speed_update<R: Rng + ?Sized>(ctx: &FollowContext, p: &DriverParams, rng: &mut R) -> f64 {
    let eta: f64 = rng.random();
    let mut v_des = ctx.speed_limit.min(ctx.ego_speed + p.accel * ctx.dt);
    if let Some(leader) = ctx.leader {
        v_des = v_des.min(safe_speed(leader.gap, leader.speed, p.decel, p.tau));
    }
    (v_des - p.sigma * p.accel * ctx.dt * eta).max(0.0)
}

/// ACC acceleration: speed control with no leader in detection range,
/// gap control otherwise. Clamped to the vehicle's capabilities.
pub fn acc_acceleration(ctx: &FollowContext, s: &AccSettings, p: &DriverParams) -> f64 {
    acc_law(ctx, s, s.desired_time_gap).clamp(-p.decel, p.accel)
}

fn acc_law(ctx: &FollowContext, s: &AccSettings, time_gap: f64) -> f64 {
    match ctx.leader {
        Some(l) if l.gap <= s.detection_range => {
            s.gap_gain * (l.gap - s.min_gap - time_gap * ctx.ego_speed)
                + s.speed_diff_gain * (l.speed - ctx.ego_speed)
        }
        _ => s.speed_gain * (ctx.speed_limit - ctx.ego_speed),
    }
}

/// Bound on the gap-preparation command while a take-over is pending, m/s².
pub const GAP_PREPARATION_LIMIT: f64 = 1.5;

/// Headway the automation opens before handing over: the larger of its own
/// desired gap and 1.5 times the driver's manual headway.
pub fn gap_preparation_target(s: &AccSettings, p: &DriverParams) -> f64 {
    s.desired_time_gap.max(1.5 * p.tau)
}

/// Acceleration during a pending take-over.
///
/// Once the actual headway is at or above `target_headway` (or there is no
/// leader in range) this is the ordinary ACC command. Below target, the
/// gap law runs against the larger headway and the result is bounded by
/// [`GAP_PREPARATION_LIMIT`].
pub fn gap_preparation_accel(
    ctx: &FollowContext,
    s: &AccSettings,
    p: &DriverParams,
    target_headway: f64,
) -> f64 {
    let leader = match ctx.leader {
        Some(l) if l.gap <= s.detection_range => l,
        _ => return acc_acceleration(ctx, s, p),
    };
    let headway = if ctx.ego_speed > 0.0 {
        leader.gap / ctx.ego_speed
    } else {
        f64::INFINITY
    };
    if headway >= target_headway {
        return acc_acceleration(ctx, s, p);
    }
    let limit = GAP_PREPARATION_LIMIT.min(p.accel).min(p.decel);
    acc_law(ctx, s, target_headway).clamp(-limit, limit)
}

/// Smallest net gap ever accepted on either side of a lane change, m.
pub const MIN_LANE_CHANGE_GAP: f64 = 2.0;

/// Speed advantage that motivates a discretionary change, m/s.
pub const SPEED_GAIN_THRESHOLD: f64 = 1.0;

/// Deceleration a follower needs to match its leader's speed within `gap`.
/// Gaps below [`MIN_LANE_CHANGE_GAP`] are unacceptable (infinite).
pub fn required_decel(gap: f64, follower_speed: f64, leader_speed: f64) -> f64 {
    if gap < MIN_LANE_CHANGE_GAP {
        return f64::INFINITY;
    }
    let closing = follower_speed - leader_speed;
    if closing <= 0.0 {
        0.0
    } else {
        closing * closing / (2.0 * gap)
    }
}

/// Urgency of leaving a closed lane: 0 at the start of the warning area,
/// rising linearly to 1 at the taper.
pub fn closure_urgency(layout: &WorkZoneLayout, position: f64) -> f64 {
    let dist = layout.taper_start() - position;
    (1.0 - dist / layout.warning_area_length).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneChange {
    Stay,
    Left,
    Right,
}

impl LaneChange {
    pub fn target(self, lane: Lane) -> Lane {
        match self {
            LaneChange::Stay => lane,
            LaneChange::Left => lane + 1,
            LaneChange::Right => lane - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ego {
    pub lane: Lane,
    pub position: f64,
    pub speed: f64,
    pub length: f64,
}

/// Vehicle adjacent to the ego's projected slot in a target lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Net gap to the ego's projected slot, m.
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacentLane {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
    /// Speed the ego expects to reach in this lane.
    pub expected_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbors {
    pub current_expected_speed: f64,
    pub left: Option<AdjacentLane>,
    pub right: Option<AdjacentLane>,
}

fn gaps_acceptable(ego: &Ego, lane: &AdjacentLane, limit: f64) -> bool {
    let ahead = lane
        .leader
        .map_or(0.0, |l| required_decel(l.gap, ego.speed, l.speed));
    let behind = lane
        .follower
        .map_or(0.0, |f| required_decel(f.gap, f.speed, ego.speed));
    ahead <= limit && behind <= limit
}

/// Simplified LC2013: a mandatory exit from a closed lane inside the
/// warning area, otherwise a discretionary change for a speed gain of at
/// least [`SPEED_GAIN_THRESHOLD`]. Either way both gaps must pass the
/// required-deceleration test against `decel · lc_assertive · (1 + urgency)`.
/// Discretionary changes never enter a closed lane near the closure.
pub fn lane_change_decision(
    ego: &Ego,
    neighbors: &Neighbors,
    layout: &WorkZoneLayout,
    p: &DriverParams,
    urgency: f64,
) -> LaneChange {
    let limit = p.decel * p.lc_assertive * (1.0 + urgency);
    let side = |dir: LaneChange| match dir {
        LaneChange::Left => neighbors.left.as_ref(),
        LaneChange::Right => neighbors.right.as_ref(),
        LaneChange::Stay => None,
    };

    let mandatory = layout.is_closed_lane(ego.lane)
        && layout.in_closure_influence(ego.position)
        && ego.position <= layout.taper_start();
    if mandatory {
        let dir = match layout.exit_direction(ego.lane) {
            Some(1) => LaneChange::Left,
            Some(_) => LaneChange::Right,
            None => return LaneChange::Stay,
        };
        return match side(dir) {
            Some(lane) if gaps_acceptable(ego, lane, limit) => dir,
            _ => LaneChange::Stay,
        };
    }

    let mut best = LaneChange::Stay;
    let mut best_gain = SPEED_GAIN_THRESHOLD;
    for dir in [LaneChange::Left, LaneChange::Right] {
        let Some(lane) = side(dir) else { continue };
        let target = dir.target(ego.lane);
        if layout.is_closed_lane(target) && layout.in_closure_influence(ego.position) {
            continue;
        }
        let gain = lane.expected_speed - neighbors.current_expected_speed;
        if gain >= best_gain && gaps_acceptable(ego, lane, limit) {
            // strict improvement needed to displace an earlier (left) choice
            if best == LaneChange::Stay || gain > best_gain {
                best = dir;
                best_gain = gain;
            }
        }
    }
    best
}
