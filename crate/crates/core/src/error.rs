use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario:\n{0}")]
    Validation(Violations),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("truncated normal needs lo < hi (got lo {lo}, hi {hi})")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("illegal control transition for vehicle {vehicle}: {message}")]
    IllegalTransition { vehicle: u64, message: String },

    #[error(
        "lane overlap at t={time:.3}s lane {lane}: vehicle {follower} overlaps leader {leader} by {overlap:.6} m"
    )]
    LaneOverlap {
        time: f64,
        lane: u8,
        follower: u64,
        leader: u64,
        overlap: f64,
    },

    #[error("trial row {row} replication {replication}: {source}")]
    Trial {
        row: u8,
        replication: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("analysis: {0}")]
    Analysis(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// Every invariant violation found in one validation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}
