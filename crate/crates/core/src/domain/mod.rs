//! Domain types shared by every subsystem: vehicle classes, driver
//! parameters, takeover styles, work-zone geometry and scenario config.

mod config;
pub mod sampling;

pub use config::{ScenarioConfig, ValidatedScenario, Violation};
pub use sampling::{
    sample_truncated_normal, stream_rng, trial_seed, NormalSpec, SimRng, TruncatedNormalSpec,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use std::fmt;
use std::str::FromStr;

/// Lane index, 1 = rightmost.
pub type Lane = u8;
pub type VehicleId = u64;

pub const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Small,
    Large,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Small => "small",
            VehicleKind::Large => "large",
        }
    }

    pub fn class(self) -> &'static VehicleClass {
        match self {
            VehicleKind::Small => &VehicleClass::SMALL,
            VehicleKind::Large => &VehicleClass::LARGE,
        }
    }
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(VehicleKind::Small),
            "large" => Ok(VehicleKind::Large),
            other => Err(format!("unknown vehicle class {other:?}")),
        }
    }
}

/// Physical envelope of a vehicle class. `default_accel` and
/// `default_decel` cap the per-driver sampled capabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleClass {
    pub kind: VehicleKind,
    pub length: f64,
    pub max_speed: f64,
    pub default_accel: f64,
    pub default_decel: f64,
}

impl VehicleClass {
    pub const SMALL: VehicleClass = VehicleClass {
        kind: VehicleKind::Small,
        length: 5.0,
        max_speed: 120.0 * KMH,
        default_accel: 5.0,
        default_decel: 9.0,
    };

    pub const LARGE: VehicleClass = VehicleClass {
        kind: VehicleKind::Large,
        length: 12.0,
        max_speed: 90.0 * KMH,
        default_accel: 1.3,
        default_decel: 4.0,
    };
}

/// Behavioural parameters of one driver (or of the automation acting for it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// Imperfection in [0, 1].
    pub sigma: f64,
    /// Desired minimum time headway, s.
    pub tau: f64,
    pub decel: f64,
    pub accel: f64,
    pub emergency_decel: f64,
    pub lc_assertive: f64,
}

impl DriverParams {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.sigma)
            && self.tau > 0.0
            && self.decel > 0.0
            && self.decel <= self.emergency_decel
            && self.accel > 0.0
            && self.lc_assertive >= 1.0
    }
}

/// Clamp ranges applied after drawing a driver from [`DriverDistributions`].
pub const TAU_RANGE: (f64, f64) = (0.2, 3.0);
pub const ACCEL_MIN: f64 = 0.5;
pub const DECEL_MIN: f64 = 1.0;

/// Population distributions from which each driver is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverDistributions {
    pub sigma: NormalSpec,
    pub tau: NormalSpec,
    pub decel: NormalSpec,
    pub accel: NormalSpec,
    pub emergency_decel: f64,
    pub lc_assertive: f64,
}

impl Default for DriverDistributions {
    fn default() -> Self {
        Self {
            sigma: NormalSpec::new(0.2, 0.5),
            tau: NormalSpec::new(0.6, 0.5),
            decel: NormalSpec::new(3.5, 1.0),
            accel: NormalSpec::new(2.0, 1.0),
            emergency_decel: 9.0,
            lc_assertive: 1.3,
        }
    }
}

impl DriverDistributions {
    /// Draws one driver and clamps into the valid envelope of `class`.
    pub fn sample<R: Rng + ?Sized>(&self, class: &VehicleClass, rng: &mut R) -> DriverParams {
        let sigma = self.sigma.sample(rng).clamp(0.0, 1.0);
        let tau = self.tau.sample(rng).clamp(TAU_RANGE.0, TAU_RANGE.1);
        let decel_cap = class.default_decel.min(self.emergency_decel).max(DECEL_MIN);
        let decel = self.decel.sample(rng).clamp(DECEL_MIN, decel_cap);
        let accel_cap = class.default_accel.max(ACCEL_MIN);
        let accel = self.accel.sample(rng).clamp(ACCEL_MIN, accel_cap);
        DriverParams {
            sigma,
            tau,
            decel,
            accel,
            emergency_decel: self.emergency_decel.max(decel),
            lc_assertive: self.lc_assertive.max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleName {
    Aggressive,
    Normal,
    Conservative,
}

impl StyleName {
    pub const ALL: [StyleName; 3] = [StyleName::Aggressive, StyleName::Normal, StyleName::Conservative];

    pub fn as_str(self) -> &'static str {
        match self {
            StyleName::Aggressive => "aggressive",
            StyleName::Normal => "normal",
            StyleName::Conservative => "conservative",
        }
    }
}

impl fmt::Display for StyleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StyleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StyleName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown takeover style {s:?}"))
    }
}

/// Lowest recovery rate a driver can be drawn with, 1/s.
pub const MIN_RECOVERY_RATE: f64 = 0.02;

/// How a driver regains control after a take-over request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "StyleFile", into = "StyleFile")]
pub struct TakeoverStyle {
    pub name: StyleName,
    pub initial_awareness: NormalSpec,
    pub recovery_rate: NormalSpec,
    pub mrm_decel: f64,
}

impl TakeoverStyle {
    pub fn preset(name: StyleName) -> Self {
        let awareness_mean = match name {
            StyleName::Aggressive => 0.7,
            StyleName::Normal => 0.5,
            StyleName::Conservative => 0.3,
        };
        Self {
            name,
            initial_awareness: NormalSpec::new(awareness_mean, 0.3),
            recovery_rate: NormalSpec::new(0.2, 0.1),
            mrm_decel: 3.0,
        }
    }

    pub fn sample_initial_awareness<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.initial_awareness.sample(rng).clamp(0.0, 1.0)
    }

    pub fn sample_recovery_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.recovery_rate.sample(rng).max(MIN_RECOVERY_RATE)
    }
}

impl Default for TakeoverStyle {
    fn default() -> Self {
        Self::preset(StyleName::Normal)
    }
}

/// File form of a takeover style: the name selects the preset and any
/// other key overrides it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StyleFile {
    name: StyleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_awareness: Option<NormalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recovery_rate: Option<NormalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mrm_decel: Option<f64>,
}

impl From<StyleFile> for TakeoverStyle {
    fn from(f: StyleFile) -> Self {
        let base = TakeoverStyle::preset(f.name);
        TakeoverStyle {
            name: f.name,
            initial_awareness: f.initial_awareness.unwrap_or(base.initial_awareness),
            recovery_rate: f.recovery_rate.unwrap_or(base.recovery_rate),
            mrm_decel: f.mrm_decel.unwrap_or(base.mrm_decel),
        }
    }
}

impl From<TakeoverStyle> for StyleFile {
    fn from(s: TakeoverStyle) -> Self {
        StyleFile {
            name: s.name,
            initial_awareness: Some(s.initial_awareness),
            recovery_rate: Some(s.recovery_rate),
            mrm_decel: Some(s.mrm_decel),
        }
    }
}

/// One-direction freeway with a lane closure.
///
/// Stations along the road: warning area `[warning_area_start, taper_start)`,
/// closed region `[taper_start, closed_end)` covering taper and activity
/// area, then the downstream area. Closed lanes end at `taper_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkZoneLayout {
    pub lane_count: Lane,
    pub closed_lanes: Vec<Lane>,
    pub closure_enabled: bool,
    pub road_length: f64,
    pub warning_area_start: f64,
    pub warning_area_length: f64,
    pub taper_length: f64,
    pub activity_area_length: f64,
    pub downstream_length: f64,
    pub normal_speed_limit_kmh: f64,
    pub work_zone_speed_limit_kmh: f64,
}

pub const DEFAULT_TAPER_START: f64 = 3000.0;

impl Default for WorkZoneLayout {
    fn default() -> Self {
        Self {
            lane_count: 4,
            closed_lanes: vec![1, 2],
            closure_enabled: true,
            road_length: 5000.0,
            warning_area_start: DEFAULT_TAPER_START - 600.0,
            warning_area_length: 600.0,
            taper_length: 150.0,
            activity_area_length: 500.0,
            downstream_length: 100.0,
            normal_speed_limit_kmh: 80.0,
            work_zone_speed_limit_kmh: 40.0,
        }
    }
}

/// Piece of road with one posted limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSegment {
    pub start: f64,
    pub end: f64,
    pub limit: f64,
}

impl WorkZoneLayout {
    pub fn taper_start(&self) -> f64 {
        self.warning_area_start + self.warning_area_length
    }

    pub fn closed_end(&self) -> f64 {
        self.taper_start() + self.taper_length + self.activity_area_length
    }

    pub fn normal_speed_limit(&self) -> f64 {
        self.normal_speed_limit_kmh * KMH
    }

    pub fn work_zone_speed_limit(&self) -> f64 {
        self.work_zone_speed_limit_kmh * KMH
    }

    /// Moves the warning area so that it ends at the same taper station
    /// with a new length.
    pub fn with_warning_length(mut self, length: f64) -> Self {
        let taper = self.taper_start();
        self.warning_area_length = length;
        self.warning_area_start = taper - length;
        self
    }

    pub fn is_closed_lane(&self, lane: Lane) -> bool {
        self.closure_enabled && self.closed_lanes.contains(&lane)
    }

    pub fn is_open_lane(&self, lane: Lane) -> bool {
        lane >= 1 && lane <= self.lane_count && !self.is_closed_lane(lane)
    }

    /// Stations where a closed lane cannot be entered by a discretionary
    /// change: from the warning area to the end of the closure.
    pub fn in_closure_influence(&self, position: f64) -> bool {
        self.closure_enabled && position >= self.warning_area_start && position < self.closed_end()
    }

    /// True when `position` lies inside the closed region of a closed lane.
    pub fn is_closed_at(&self, lane: Lane, position: f64) -> bool {
        self.is_closed_lane(lane) && position > self.taper_start() && position < self.closed_end()
    }

    /// Direction (+1 left, -1 right) from a closed lane toward the nearest
    /// open lane; ties go left.
    pub fn exit_direction(&self, lane: Lane) -> Option<i8> {
        if !self.is_closed_lane(lane) {
            return None;
        }
        let nearest = |step: i16| {
            let mut l = lane as i16 + step;
            while l >= 1 && l <= self.lane_count as i16 {
                if self.is_open_lane(l as Lane) {
                    return Some((l - lane as i16).unsigned_abs());
                }
                l += step;
            }
            None
        };
        match (nearest(1), nearest(-1)) {
            (Some(up), Some(down)) if down < up => Some(-1),
            (Some(_), _) => Some(1),
            (None, Some(_)) => Some(-1),
            (None, None) => None,
        }
    }

    /// Posted speed-limit profile, ordered by station.
    ///
    /// Normal limit upstream; the warning area steps down in thirds
    /// (`normal - k/3 * (normal - work_zone)` for k = 1, 2, 3); the work-zone
    /// limit holds through taper and activity area; normal limit downstream.
    pub fn speed_limit_segments(&self) -> Vec<LimitSegment> {
        let normal = self.normal_speed_limit();
        let wz = self.work_zone_speed_limit();
        let ws = self.warning_area_start;
        let third = self.warning_area_length / 3.0;
        let mut segs = vec![LimitSegment { start: 0.0, end: ws, limit: normal }];
        for k in 1..=3 {
            segs.push(LimitSegment {
                start: ws + (k - 1) as f64 * third,
                end: if k == 3 { self.taper_start() } else { ws + k as f64 * third },
                limit: normal - k as f64 / 3.0 * (normal - wz),
            });
        }
        segs.push(LimitSegment {
            start: self.taper_start(),
            end: self.closed_end(),
            limit: wz,
        });
        segs.push(LimitSegment {
            start: self.closed_end(),
            end: f64::INFINITY,
            limit: normal,
        });
        segs.retain(|s| s.end > s.start);
        segs
    }
}

/// Posted limit lookup with look-ahead for upcoming reductions.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    segments: Vec<LimitSegment>,
}

impl SpeedProfile {
    pub fn new(layout: &WorkZoneLayout) -> Self {
        Self {
            segments: layout.speed_limit_segments(),
        }
    }

    pub fn segments(&self) -> &[LimitSegment] {
        &self.segments
    }

    fn index_at(&self, position: f64) -> usize {
        self.segments
            .partition_point(|s| s.end <= position)
            .min(self.segments.len() - 1)
    }

    pub fn limit_at(&self, position: f64) -> f64 {
        self.segments[self.index_at(position)].limit
    }

    /// Highest speed from which a driver braking at `decel` can meet every
    /// downstream limit in time.
    pub fn anticipated_limit(&self, position: f64, decel: f64) -> f64 {
        let i = self.index_at(position);
        self.segments[i + 1..]
            .iter()
            .map(|seg| (seg.limit * seg.limit + 2.0 * decel * (seg.start - position)).sqrt())
            .fold(self.segments[i].limit, f64::min)
    }
}
