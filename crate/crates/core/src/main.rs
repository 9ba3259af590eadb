use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use wzsim::domain::ScenarioConfig;
use wzsim::error::{Error, Result};
use wzsim::experiment::{analyze_file, build_l18_design, emit_report, run_experiment, run_trial, ExperimentOptions};

#[derive(Parser)]
#[command(name = "wzsim", version, about = "Freeway work-zone traffic simulation and safety experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip the trajectory CSV.
        #[arg(long)]
        no_trajectory: bool,
    },
    /// Run the 18-row orthogonal design on top of a base scenario.
    Experiment {
        base: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2)]
        replications: u32,
        /// Concurrent trials; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-trial trajectory CSVs.
        #[arg(long)]
        trajectories: bool,
    },
    /// Recompute range analysis and ANOVA from an indicator table.
    Analyze {
        indicators: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_unvalidated(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    ScenarioConfig::from_toml_str(&text).map_err(|message| Error::Config {
        path: path.to_path_buf(),
        message,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            no_trajectory,
        } => {
            let mut config = load_unvalidated(&scenario)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let output = run_trial(config, Some(&out), !no_trajectory)?;
            print!("{}", output.summary.to_toml_string());
            info!("logs written to {}", out.display());
        }
        Command::Experiment {
            base,
            seed,
            replications,
            jobs,
            out,
            trajectories,
        } => {
            let config = load_unvalidated(&base)?;
            let checked = config.clone().validate()?;
            let options = ExperimentOptions {
                master_seed: seed.unwrap_or(checked.seed),
                replications,
                jobs,
                out: Some(out.clone()),
                trajectories,
            };
            let results = run_experiment(&build_l18_design(), &config, &options)?;
            emit_report(&results, &out)?;
            if results.failed() > 0 {
                error!("{} trial(s) failed; see the log above", results.failed());
            }
            print!("{}", fs::read_to_string(out.join("summary.txt")).unwrap_or_default());
        }
        Command::Analyze { indicators, out } => {
            analyze_file(&indicators, &out)?;
            print!("{}", fs::read_to_string(out.join("summary.txt")).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
