//! Per-step vehicle samples: the hand-off between the simulator and the
//! conflict detector, plus their CSV form.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::domain::{Lane, VehicleId, VehicleKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Manual,
    Automated,
    TorPending,
    Recovering,
    Mrm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Manual => "manual",
            Mode::Automated => "automated",
            Mode::TorPending => "torPending",
            Mode::Recovering => "recovering",
            Mode::Mrm => "mrm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "manual" => Ok(Mode::Manual),
            "automated" => Ok(Mode::Automated),
            "torPending" => Ok(Mode::TorPending),
            "recovering" => Ok(Mode::Recovering),
            "mrm" => Ok(Mode::Mrm),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub vehicle_id: VehicleId,
    pub class: VehicleKind,
    pub automated: bool,
    pub lane: Lane,
    /// Front bumper station, m.
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub mode: Mode,
}

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "time",
    "vehicleId",
    "class",
    "automated",
    "lane",
    "position",
    "speed",
    "accel",
    "mode",
];

pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(TRAJECTORY_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, s: &TrajectorySample) -> Result<()> {
        self.inner.write_record([
            format!("{:.3}", s.time),
            s.vehicle_id.to_string(),
            s.class.to_string(),
            u8::from(s.automated).to_string(),
            s.lane.to_string(),
            format!("{:.4}", s.position),
            format!("{:.4}", s.speed),
            format!("{:.4}", s.accel),
            s.mode.to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io("flushing trajectory log", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::io("finishing trajectory log", e.into_error()))
    }
}

/// Parses a trajectory CSV. Malformed rows are reported with their line.
pub fn read_trajectory_csv<R: Read>(reader: R, source: &str) -> Result<Vec<TrajectorySample>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("expected header {}", TRAJECTORY_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        if rec.len() != TRAJECTORY_HEADER.len() {
            return Err(bad(format!("expected 9 fields, found {}", rec.len())));
        }
        fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            rec[i]
                .trim()
                .parse::<T>()
                .map_err(|e| format!("column {}: {e}", TRAJECTORY_HEADER[i]))
        }
        let automated = match rec[3].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad(format!("column automated: bad flag {other:?}"))),
        };
        let sample = TrajectorySample {
            time: field(&rec, 0).map_err(bad)?,
            vehicle_id: field(&rec, 1).map_err(bad)?,
            class: field(&rec, 2).map_err(bad)?,
            automated,
            lane: field(&rec, 4).map_err(bad)?,
            position: field(&rec, 5).map_err(bad)?,
            speed: field(&rec, 6).map_err(bad)?,
            accel: field(&rec, 7).map_err(bad)?,
            mode: field(&rec, 8).map_err(bad)?,
        };
        if let Some(prev) = out.last().map(|p: &TrajectorySample| p.time) {
            if sample.time < prev {
                return Err(bad(format!("time {} precedes {prev}", sample.time)));
            }
        }
        out.push(sample);
    }
    Ok(out)
}
