use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;

use super::design::DesignRow;
use crate::domain::ScenarioConfig;
use crate::engine::{in_trial, run_observed, StepObserver, TrialOutput};
use crate::error::{Error, Result};
use crate::safety::{write_conflicts, write_toc_events, IndicatorTable};
use crate::trajectory::TrajectoryWriter;

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub master_seed: u64,
    pub replications: u32,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    /// Per-trial logs go under `out/trial_<row>_<rep>/` when set.
    pub out: Option<PathBuf>,
    /// Also write the (large) trajectory CSV of every trial.
    pub trajectories: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            master_seed: 1,
            replications: 2,
            jobs: 0,
            out: None,
            trajectories: false,
        }
    }
}

/// Outcome of one (row, replication). `indicators` is `None` for a failed
/// trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub design: DesignRow,
    pub replication: u32,
    pub indicators: Option<IndicatorTable>,
}

/// Results keyed by (row, replication), replications counted from 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResults {
    pub trials: BTreeMap<(u8, u32), TrialRecord>,
}

impl ExperimentResults {
    pub fn completed(&self) -> impl Iterator<Item = (&TrialRecord, &IndicatorTable)> {
        self.trials
            .values()
            .filter_map(|t| t.indicators.as_ref().map(|i| (t, i)))
    }

    pub fn failed(&self) -> usize {
        self.trials.values().filter(|t| t.indicators.is_none()).count()
    }
}

pub fn trial_dir(out: &Path, row: u8, replication: u32) -> PathBuf {
    out.join(format!("trial_{row}_{replication}"))
}

/// Runs one trial and, with `dir`, writes its logs there.
pub fn run_trial(scenario: ScenarioConfig, dir: Option<&Path>, trajectories: bool) -> Result<TrialOutput> {
    let scenario = scenario.validate()?;
    let Some(dir) = dir else {
        return run_observed(&scenario, &mut ());
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))
    };
    let output = if trajectories {
        let mut writer = TrajectoryWriter::new(create("trajectory.csv")?)?;
        let out = run_observed(&scenario, &mut writer as &mut dyn StepObserver)?;
        writer.flush()?;
        out
    } else {
        run_observed(&scenario, &mut ())?
    };
    write_conflicts(create("conflicts.csv")?, &output.conflicts)?;
    write_toc_events(create("toc_events.csv")?, &output.toc_events)?;
    let summary = dir.join("summary.toml");
    fs::write(&summary, output.summary.to_toml_string())
        .map_err(|e| Error::io(format!("writing {}", summary.display()), e))?;
    Ok(output)
}

/// Runs every design row `replications` times, concurrently up to
/// `options.jobs`. A failed trial is logged and left as a hole.
pub fn run_experiment(
    design: &[DesignRow],
    base: &ScenarioConfig,
    options: &ExperimentOptions,
) -> Result<ExperimentResults> {
    let jobs: Vec<(DesignRow, u32)> = design
        .iter()
        .flat_map(|d| (1..=options.replications).map(move |r| (*d, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Analysis(format!("thread pool: {e}")))?;
    let outcomes: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(row, rep)| {
                let scenario = row.apply(base, options.master_seed, rep);
                let dir = options.out.as_ref().map(|o| trial_dir(o, row.row, rep));
                let result = run_trial(scenario, dir.as_deref(), options.trajectories)
                    .map_err(in_trial(row.row, rep));
                let indicators = match result {
                    Ok(out) => {
                        info!("trial {}/{} done: {:?}", row.row, rep, out.indicators);
                        Some(out.indicators)
                    }
                    Err(e) => {
                        error!("{e}");
                        None
                    }
                };
                TrialRecord {
                    design: row,
                    replication: rep,
                    indicators,
                }
            })
            .collect()
    });
    Ok(ExperimentResults {
        trials: outcomes
            .into_iter()
            .map(|t| ((t.design.row, t.replication), t))
            .collect(),
    })
}
