//! Orthogonal design, replicated trials and their statistical analysis.

mod design;
mod report;
mod runner;
pub mod stats;

pub use design::{build_l18_design, DesignRow, Factor, FACTOR_COUNT};
pub use report::{
    analyze_file, analyze_results, emit_report, observations, read_indicators_csv, summary_text,
    write_anova_csv, write_indicators_csv, write_range_csv, Analysis,
};
pub use runner::{run_experiment, run_trial, trial_dir, ExperimentOptions, ExperimentResults, TrialRecord};
pub use stats::{anova, range_analysis, Anova, AnovaRow, FactorRange, Observation};
