use std::fmt;

use crate::domain::{trial_seed, ScenarioConfig, StyleName, TakeoverStyle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    DisengagementThreshold,
    TakeoverStyle,
    TrafficVolume,
    LargeVehicleShare,
    WarningAreaLength,
    WorkZoneSpeedLimit,
    Mpr,
}

pub const FACTOR_COUNT: usize = 7;

impl Factor {
    pub const ALL: [Factor; FACTOR_COUNT] = [
        Factor::DisengagementThreshold,
        Factor::TakeoverStyle,
        Factor::TrafficVolume,
        Factor::LargeVehicleShare,
        Factor::WarningAreaLength,
        Factor::WorkZoneSpeedLimit,
        Factor::Mpr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name in the indicator table.
    pub fn name(self) -> &'static str {
        match self {
            Factor::DisengagementThreshold => "disengagementThreshold",
            Factor::TakeoverStyle => "takeoverStyle",
            Factor::TrafficVolume => "trafficVolume",
            Factor::LargeVehicleShare => "largeVehicleShare",
            Factor::WarningAreaLength => "warningAreaLength",
            Factor::WorkZoneSpeedLimit => "workZoneSpeedLimit",
            Factor::Mpr => "mpr",
        }
    }

    /// Level labels in level order. Numeric labels are in the table's
    /// units: s, veh/h, %, m, km/h, %.
    pub fn levels(self) -> &'static [&'static str] {
        match self {
            Factor::DisengagementThreshold => &["5", "10", "15"],
            Factor::TakeoverStyle => &["aggressive", "normal", "conservative"],
            Factor::TrafficVolume => &["2500", "3500", "4500"],
            Factor::LargeVehicleShare => &["2", "22", "50"],
            Factor::WarningAreaLength => &["600", "800", "1000"],
            Factor::WorkZoneSpeedLimit => &["40", "60", "80"],
            Factor::Mpr => &["0", "20", "40", "60", "80", "100"],
        }
    }

    pub fn level_count(self) -> usize {
        self.levels().len()
    }

    pub fn level_of(self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.levels().iter().position(|l| {
            *l == label || matches!((l.parse::<f64>(), label.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
        })
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the orthogonal design, as level indices per factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DesignRow {
    pub row: u8,
    pub levels: [usize; FACTOR_COUNT],
}

// threshold, style, volume, large share, warning length, work-zone limit, MPR
const L18: [[usize; FACTOR_COUNT]; 18] = [
    [0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 1, 1, 1],
    [0, 0, 0, 2, 2, 2, 2],
    [0, 1, 2, 0, 1, 2, 3],
    [0, 1, 2, 1, 2, 0, 4],
    [0, 1, 2, 2, 0, 1, 5],
    [1, 1, 1, 0, 0, 0, 2],
    [1, 1, 1, 1, 1, 1, 0],
    [1, 1, 1, 2, 2, 2, 1],
    [1, 2, 0, 0, 1, 2, 5],
    [1, 2, 0, 1, 2, 0, 3],
    [1, 2, 0, 2, 0, 1, 4],
    [2, 0, 1, 0, 1, 2, 4],
    [2, 0, 1, 1, 2, 0, 5],
    [2, 0, 1, 2, 0, 1, 3],
    [2, 2, 2, 0, 0, 0, 1],
    [2, 2, 2, 1, 1, 1, 2],
    [2, 2, 2, 2, 2, 2, 0],
];

/// The 18-run design with one 6-level and six 3-level factors.
pub fn build_l18_design() -> Vec<DesignRow> {
    L18.iter()
        .enumerate()
        .map(|(i, levels)| DesignRow {
            row: i as u8 + 1,
            levels: *levels,
        })
        .collect()
}

const THRESHOLDS: [f64; 3] = [5.0, 10.0, 15.0];
const VOLUMES: [f64; 3] = [2500.0, 3500.0, 4500.0];
const LARGE_SHARES: [f64; 3] = [0.02, 0.22, 0.50];
const WARNING_LENGTHS: [f64; 3] = [600.0, 800.0, 1000.0];
const WORK_ZONE_LIMITS: [f64; 3] = [40.0, 60.0, 80.0];
const MPRS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

impl DesignRow {
    pub fn level(&self, f: Factor) -> usize {
        self.levels[f.index()]
    }

    pub fn label(&self, f: Factor) -> &'static str {
        f.levels()[self.level(f)]
    }

    pub fn disengagement_threshold(&self) -> f64 {
        THRESHOLDS[self.level(Factor::DisengagementThreshold)]
    }

    pub fn takeover_style(&self) -> StyleName {
        StyleName::ALL[self.level(Factor::TakeoverStyle)]
    }

    pub fn traffic_volume(&self) -> f64 {
        VOLUMES[self.level(Factor::TrafficVolume)]
    }

    /// Fraction in [0, 1].
    pub fn large_vehicle_share(&self) -> f64 {
        LARGE_SHARES[self.level(Factor::LargeVehicleShare)]
    }

    pub fn warning_area_length(&self) -> f64 {
        WARNING_LENGTHS[self.level(Factor::WarningAreaLength)]
    }

    /// km/h.
    pub fn work_zone_speed_limit(&self) -> f64 {
        WORK_ZONE_LIMITS[self.level(Factor::WorkZoneSpeedLimit)]
    }

    /// Fraction in [0, 1].
    pub fn mpr(&self) -> f64 {
        MPRS[self.level(Factor::Mpr)]
    }

    /// `base` with this row's factor levels and the trial seed applied.
    pub fn apply(&self, base: &ScenarioConfig, master_seed: u64, replication: u32) -> ScenarioConfig {
        let mut c = base.clone();
        c.seed = trial_seed(master_seed, self.row as u64, replication as u64);
        c.disengagement_threshold = self.disengagement_threshold();
        c.takeover_style = TakeoverStyle::preset(self.takeover_style());
        c.traffic_volume = self.traffic_volume();
        c.large_vehicle_share = self.large_vehicle_share();
        c.layout = c.layout.with_warning_length(self.warning_area_length());
        c.layout.work_zone_speed_limit_kmh = self.work_zone_speed_limit();
        c.mpr = self.mpr();
        c
    }
}
