//! Conflict detection over trajectory logs and per-trial indicators.

mod detector;

pub use detector::{
    detect_all, detect_single_vehicle_conflicts, detect_vehicle_conflicts, ConflictDetector, DetectorConfig,
    EPISODE_GAP, LANE_CHANGE_WINDOW, MIN_BRAKING_DURATION, SINGLE_VEHICLE_COOLDOWN,
};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Lane, VehicleId, VehicleKind};
use crate::error::{Error, Result};
use crate::toc::{TocEvent, TocEventKind};

/// Time to collision, or `None` when the gap is not closing.
pub fn compute_ttc(gap: f64, follower_speed: f64, leader_speed: f64) -> Option<f64> {
    let closing = follower_speed - leader_speed;
    (closing > 0.0).then(|| gap.max(0.0) / closing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConflictKind {
    SingleVehicle,
    RearEnd,
    LaneChange,
}

impl ConflictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConflictKind::SingleVehicle => "singleVehicle",
            ConflictKind::RearEnd => "rearEnd",
            ConflictKind::LaneChange => "laneChange",
        }
    }

    pub fn is_multi_vehicle(self) -> bool {
        self != ConflictKind::SingleVehicle
    }
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConflictKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "singleVehicle" => Ok(ConflictKind::SingleVehicle),
            "rearEnd" => Ok(ConflictKind::RearEnd),
            "laneChange" => Ok(ConflictKind::LaneChange),
            other => Err(format!("unknown conflict kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictEvent {
    pub kind: ConflictKind,
    /// Start of the episode, s.
    pub time: f64,
    /// The follower in a pair conflict.
    pub primary: VehicleId,
    pub secondary: Option<VehicleId>,
    pub min_ttc: Option<f64>,
    pub max_decel: f64,
    pub position: f64,
    pub lane: Lane,
}

pub const CONFLICT_HEADER: [&str; 8] = [
    "time",
    "kind",
    "primary",
    "secondary",
    "minTtc",
    "maxDecel",
    "lane",
    "position",
];

pub fn write_conflicts<W: Write>(w: W, events: &[ConflictEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CONFLICT_HEADER)?;
    for e in events {
        out.write_record([
            format!("{:.3}", e.time),
            e.kind.to_string(),
            e.primary.to_string(),
            e.secondary.map(|v| v.to_string()).unwrap_or_default(),
            e.min_ttc.map(|t| format!("{t:.4}")).unwrap_or_default(),
            format!("{:.4}", e.max_decel),
            e.lane.to_string(),
            format!("{:.4}", e.position),
        ])?;
    }
    out.flush().map_err(|e| Error::io("writing conflict log", e))
}

pub const TOC_HEADER: [&str; 4] = ["time", "vehicleId", "vehicleClass", "eventKind"];

pub fn write_toc_events<W: Write>(w: W, events: &[TocEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TOC_HEADER)?;
    for e in events {
        out.write_record([
            format!("{:.3}", e.time),
            e.vehicle_id.to_string(),
            e.vehicle_class.to_string(),
            e.kind.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("writing ToC event log", e))
}

/// Per-trial safety indicators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorTable {
    pub single_vehicle_conflicts: u64,
    pub multi_vehicle_conflicts: u64,
    pub total_conflicts: u64,
    pub disengagements_sv: u64,
    pub disengagements_lv: u64,
    pub disengagements_total: u64,
    pub mrm_sv: u64,
    pub mrm_lv: u64,
    pub mrm_total: u64,
}

/// Indicator columns in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Indicator {
    SingleVehicleConflicts,
    MultiVehicleConflicts,
    TotalConflicts,
    DisengagementsSv,
    DisengagementsLv,
    DisengagementsTotal,
    MrmSv,
    MrmLv,
    MrmTotal,
}

impl Indicator {
    pub const ALL: [Indicator; 9] = [
        Indicator::SingleVehicleConflicts,
        Indicator::MultiVehicleConflicts,
        Indicator::TotalConflicts,
        Indicator::DisengagementsSv,
        Indicator::DisengagementsLv,
        Indicator::DisengagementsTotal,
        Indicator::MrmSv,
        Indicator::MrmLv,
        Indicator::MrmTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::SingleVehicleConflicts => "singleVehicleConflicts",
            Indicator::MultiVehicleConflicts => "multiVehicleConflicts",
            Indicator::TotalConflicts => "totalConflicts",
            Indicator::DisengagementsSv => "disengagementsSV",
            Indicator::DisengagementsLv => "disengagementsLV",
            Indicator::DisengagementsTotal => "disengagementsTotal",
            Indicator::MrmSv => "mrmSV",
            Indicator::MrmLv => "mrmLV",
            Indicator::MrmTotal => "mrmTotal",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl IndicatorTable {
    pub fn get(&self, which: Indicator) -> u64 {
        match which {
            Indicator::SingleVehicleConflicts => self.single_vehicle_conflicts,
            Indicator::MultiVehicleConflicts => self.multi_vehicle_conflicts,
            Indicator::TotalConflicts => self.total_conflicts,
            Indicator::DisengagementsSv => self.disengagements_sv,
            Indicator::DisengagementsLv => self.disengagements_lv,
            Indicator::DisengagementsTotal => self.disengagements_total,
            Indicator::MrmSv => self.mrm_sv,
            Indicator::MrmLv => self.mrm_lv,
            Indicator::MrmTotal => self.mrm_total,
        }
    }

    pub fn set(&mut self, which: Indicator, value: u64) {
        let slot = match which {
            Indicator::SingleVehicleConflicts => &mut self.single_vehicle_conflicts,
            Indicator::MultiVehicleConflicts => &mut self.multi_vehicle_conflicts,
            Indicator::TotalConflicts => &mut self.total_conflicts,
            Indicator::DisengagementsSv => &mut self.disengagements_sv,
            Indicator::DisengagementsLv => &mut self.disengagements_lv,
            Indicator::DisengagementsTotal => &mut self.disengagements_total,
            Indicator::MrmSv => &mut self.mrm_sv,
            Indicator::MrmLv => &mut self.mrm_lv,
            Indicator::MrmTotal => &mut self.mrm_total,
        };
        *slot = value;
    }

    pub fn is_consistent(&self) -> bool {
        self.total_conflicts == self.single_vehicle_conflicts + self.multi_vehicle_conflicts
            && self.disengagements_total == self.disengagements_sv + self.disengagements_lv
            && self.mrm_total == self.mrm_sv + self.mrm_lv
    }
}

pub fn aggregate_indicators(conflicts: &[ConflictEvent], toc: &[TocEvent]) -> IndicatorTable {
    let mut t = IndicatorTable::default();
    for c in conflicts {
        if c.kind.is_multi_vehicle() {
            t.multi_vehicle_conflicts += 1;
        } else {
            t.single_vehicle_conflicts += 1;
        }
    }
    t.total_conflicts = t.single_vehicle_conflicts + t.multi_vehicle_conflicts;
    for e in toc {
        let (sv, lv) = match e.kind {
            TocEventKind::TorIssued => (&mut t.disengagements_sv, &mut t.disengagements_lv),
            TocEventKind::MrmStarted => (&mut t.mrm_sv, &mut t.mrm_lv),
            _ => continue,
        };
        match e.vehicle_class {
            VehicleKind::Small => *sv += 1,
            VehicleKind::Large => *lv += 1,
        }
    }
    t.disengagements_total = t.disengagements_sv + t.disengagements_lv;
    t.mrm_total = t.mrm_sv + t.mrm_lv;
    t
}
