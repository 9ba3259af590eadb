use std::fmt;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DriverDistributions, TakeoverStyle, TruncatedNormalSpec, WorkZoneLayout};
use crate::driving::AccSettings;
use crate::error::{Error, Result, Violations};

/// One fully specified simulation trial.
///
/// Loaded from TOML; every key is optional and falls back to [`Default`],
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// veh/h entering upstream.
    pub traffic_volume: f64,
    pub large_vehicle_share: f64,
    /// Market penetration rate of automated vehicles.
    pub mpr: f64,
    /// `dynamicToCThreshold`, s.
    pub disengagement_threshold: f64,
    /// Reserved time between TOR and MRM start, s.
    pub tor_lead_time: f64,
    pub step_length: f64,
    /// Recorded duration after warm-up, s.
    pub duration: f64,
    pub warmup: f64,
    pub ttc_threshold: f64,
    pub emergency_brake_fraction: f64,
    pub lane_changes: bool,
    pub takeover_style: TakeoverStyle,
    pub response_time: TruncatedNormalSpec,
    pub layout: WorkZoneLayout,
    pub driver: DriverDistributions,
    pub acc: AccSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            traffic_volume: 2500.0,
            large_vehicle_share: 0.02,
            mpr: 0.0,
            disengagement_threshold: 5.0,
            tor_lead_time: 10.0,
            step_length: 0.1,
            duration: 3600.0,
            warmup: 600.0,
            ttc_threshold: 1.5,
            emergency_brake_fraction: 0.75,
            lane_changes: true,
            takeover_style: TakeoverStyle::default(),
            response_time: TruncatedNormalSpec::new(5.0, 4.0, 0.5, 30.0),
            layout: WorkZoneLayout::default(),
            driver: DriverDistributions::default(),
            acc: AccSettings::default(),
        }
    }
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub value: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} (got {})", self.field, self.message, self.value)
    }
}

/// A scenario that passed [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario(ScenarioConfig);

impl Deref for ValidatedScenario {
    type Target = ScenarioConfig;

    fn deref(&self) -> &ScenarioConfig {
        &self.0
    }
}

impl ValidatedScenario {
    pub fn into_inner(self) -> ScenarioConfig {
        self.0
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, ok: bool, field: &str, value: impl fmt::Debug, message: &str) {
        if !ok {
            self.0.push(Violation {
                field: field.to_string(),
                value: format!("{value:?}"),
                message: message.to_string(),
            });
        }
    }

    fn positive(&mut self, field: &str, v: f64) {
        self.check(v.is_finite() && v > 0.0, field, v, "must be positive");
    }

    fn fraction(&mut self, field: &str, v: f64) {
        self.check((0.0..=1.0).contains(&v), field, v, "out of [0,1]");
    }

    fn non_negative(&mut self, field: &str, v: f64) {
        self.check(v.is_finite() && v >= 0.0, field, v, "must be non-negative");
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<ValidatedScenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let config = Self::from_toml_str(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })?;
        config.validate()
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(self) -> Result<ValidatedScenario> {
        let mut c = Checker(Vec::new());
        c.positive("traffic_volume", self.traffic_volume);
        c.fraction("large_vehicle_share", self.large_vehicle_share);
        c.fraction("mpr", self.mpr);
        c.positive("disengagement_threshold", self.disengagement_threshold);
        c.positive("tor_lead_time", self.tor_lead_time);
        c.positive("step_length", self.step_length);
        c.positive("duration", self.duration);
        c.non_negative("warmup", self.warmup);
        c.positive("ttc_threshold", self.ttc_threshold);
        c.check(
            self.emergency_brake_fraction > 0.0 && self.emergency_brake_fraction <= 1.0,
            "emergency_brake_fraction",
            self.emergency_brake_fraction,
            "out of (0,1]",
        );

        let rt = &self.response_time;
        c.non_negative("response_time.sd", rt.sd);
        c.non_negative("response_time.lo", rt.lo);
        c.check(rt.lo < rt.hi, "response_time.hi", rt.hi, "must exceed response_time.lo");

        let st = &self.takeover_style;
        c.non_negative("takeover_style.initial_awareness.sd", st.initial_awareness.sd);
        c.non_negative("takeover_style.recovery_rate.sd", st.recovery_rate.sd);
        c.positive("takeover_style.mrm_decel", st.mrm_decel);

        let d = &self.driver;
        for (name, spec) in [
            ("driver.sigma.sd", d.sigma),
            ("driver.tau.sd", d.tau),
            ("driver.decel.sd", d.decel),
            ("driver.accel.sd", d.accel),
        ] {
            c.non_negative(name, spec.sd);
        }
        c.positive("driver.emergency_decel", d.emergency_decel);
        c.check(d.lc_assertive >= 1.0, "driver.lc_assertive", d.lc_assertive, "must be at least 1");

        let a = &self.acc;
        c.positive("acc.desired_time_gap", a.desired_time_gap);
        c.positive("acc.min_gap", a.min_gap);
        c.positive("acc.speed_gain", a.speed_gain);
        c.positive("acc.gap_gain", a.gap_gain);
        c.positive("acc.speed_diff_gain", a.speed_diff_gain);
        c.positive("acc.detection_range", a.detection_range);

        let l = &self.layout;
        c.check(l.lane_count >= 2, "layout.lane_count", l.lane_count, "must be at least 2");
        c.check(!l.closed_lanes.is_empty(), "layout.closed_lanes", &l.closed_lanes, "must be nonempty");
        let mut distinct = l.closed_lanes.clone();
        distinct.sort_unstable();
        distinct.dedup();
        c.check(
            distinct.len() == l.closed_lanes.len(),
            "layout.closed_lanes",
            &l.closed_lanes,
            "contains duplicates",
        );
        c.check(
            l.closed_lanes.iter().all(|&x| x >= 1 && x <= l.lane_count),
            "layout.closed_lanes",
            &l.closed_lanes,
            "references a lane outside [1, lane_count]",
        );
        c.check(
            distinct.len() < l.lane_count as usize,
            "layout.closed_lanes",
            &l.closed_lanes,
            "must leave at least one lane open",
        );
        c.positive("layout.road_length", l.road_length);
        c.non_negative("layout.warning_area_start", l.warning_area_start);
        c.positive("layout.warning_area_length", l.warning_area_length);
        c.non_negative("layout.taper_length", l.taper_length);
        c.non_negative("layout.activity_area_length", l.activity_area_length);
        c.non_negative("layout.downstream_length", l.downstream_length);
        let extent = l.warning_area_start
            + l.warning_area_length
            + l.taper_length
            + l.activity_area_length
            + l.downstream_length;
        c.check(
            extent <= l.road_length,
            "layout",
            extent,
            "work zone extends beyond road_length",
        );
        c.positive("layout.normal_speed_limit_kmh", l.normal_speed_limit_kmh);
        c.positive("layout.work_zone_speed_limit_kmh", l.work_zone_speed_limit_kmh);
        c.check(
            l.work_zone_speed_limit_kmh <= l.normal_speed_limit_kmh,
            "layout.work_zone_speed_limit_kmh",
            l.work_zone_speed_limit_kmh,
            "exceeds normal_speed_limit_kmh",
        );

        if c.0.is_empty() {
            Ok(ValidatedScenario(self))
        } else {
            Err(Error::Validation(Violations(c.0)))
        }
    }
}
