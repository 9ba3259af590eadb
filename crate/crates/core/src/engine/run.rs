use std::io::Write;

use serde::Serialize;

use super::{Diagnostics, World};
use crate::domain::ValidatedScenario;
use crate::error::{Error, Result};
use crate::safety::{aggregate_indicators, ConflictDetector, ConflictEvent, DetectorConfig, IndicatorTable};
use crate::toc::TocEvent;
use crate::trajectory::{TrajectorySample, TrajectoryWriter};

/// Receives the recorded samples of every post-warm-up step.
pub trait StepObserver {
    fn on_step(&mut self, samples: &[TrajectorySample]) -> Result<()>;
}

impl<W: Write> StepObserver for TrajectoryWriter<W> {
    fn on_step(&mut self, samples: &[TrajectorySample]) -> Result<()> {
        samples.iter().try_for_each(|s| self.write(s))
    }
}

impl StepObserver for Vec<TrajectorySample> {
    fn on_step(&mut self, samples: &[TrajectorySample]) -> Result<()> {
        self.extend_from_slice(samples);
        Ok(())
    }
}

/// Observer that ignores everything.
impl StepObserver for () {
    fn on_step(&mut self, _: &[TrajectorySample]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub seed: u64,
    pub warmup: f64,
    pub duration: f64,
    pub steps: u64,
    pub vehicles_inserted: u64,
    pub vehicles_exited: u64,
    pub vehicles_on_road: u64,
    pub vehicles_queued: u64,
    /// Exits per hour over the recorded period.
    pub throughput: f64,
    /// Mean over all recorded samples, m/s.
    pub mean_speed: f64,
    pub samples: u64,
    pub toc_events: u64,
    pub conflicts: u64,
    pub overlap_interventions: u64,
    pub negative_gaps: u64,
    pub teleport_violations: u64,
    /// Smallest same-lane gap seen, m. Absent when no two vehicles shared a lane.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
}

impl SimSummary {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("summary is plain data")
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub conflicts: Vec<ConflictEvent>,
    pub toc_events: Vec<TocEvent>,
    pub indicators: IndicatorTable,
    pub summary: SimSummary,
    pub diagnostics: Diagnostics,
}

pub fn run(scenario: &ValidatedScenario) -> Result<TrialOutput> {
    run_observed(scenario, &mut ())
}

/// Runs warm-up plus the recorded duration, streaming samples to
/// `observer` and the conflict detector.
pub fn run_observed(scenario: &ValidatedScenario, observer: &mut dyn StepObserver) -> Result<TrialOutput> {
    let mut world = World::new(scenario.clone());
    let mut detector = ConflictDetector::new(DetectorConfig::from_scenario(scenario));
    let steps = ((scenario.warmup + scenario.duration) / scenario.step_length).round() as u64;
    let mut exited_at_warmup = None;
    let mut speed_sum = 0.0;
    let mut samples = 0u64;
    for _ in 0..steps {
        let recorded = world.step()?;
        if recorded.is_empty() {
            if world.time() + 1e-9 >= scenario.warmup && exited_at_warmup.is_none() {
                exited_at_warmup = Some(world.exited());
            }
            continue;
        }
        exited_at_warmup.get_or_insert(world.exited());
        speed_sum += recorded.iter().map(|s| s.speed).sum::<f64>();
        samples += recorded.len() as u64;
        observer.on_step(&recorded)?;
        detector.observe(&recorded);
    }
    let conflicts = detector.finish();
    let toc_events = world.toc_events().to_vec();
    let indicators = aggregate_indicators(&conflicts, &toc_events);
    let diagnostics = *world.diagnostics();
    let exited_recorded = world.exited() - exited_at_warmup.unwrap_or(world.exited());
    let summary = SimSummary {
        seed: scenario.seed,
        warmup: scenario.warmup,
        duration: scenario.duration,
        steps,
        vehicles_inserted: world.inserted(),
        vehicles_exited: world.exited(),
        vehicles_on_road: world.vehicles().len() as u64,
        vehicles_queued: world.queued() as u64,
        throughput: if scenario.duration > 0.0 {
            exited_recorded as f64 * 3600.0 / scenario.duration
        } else {
            0.0
        },
        mean_speed: if samples > 0 { speed_sum / samples as f64 } else { 0.0 },
        samples,
        toc_events: toc_events.len() as u64,
        conflicts: conflicts.len() as u64,
        overlap_interventions: diagnostics.overlap_interventions,
        negative_gaps: diagnostics.negative_gaps,
        teleport_violations: diagnostics.teleport_violations,
        min_gap: diagnostics.min_gap.is_finite().then_some(diagnostics.min_gap),
    };
    Ok(TrialOutput {
        conflicts,
        toc_events,
        indicators,
        summary,
        diagnostics,
    })
}

/// Wraps a trial failure with its design coordinates.
pub fn in_trial(row: u8, replication: u32) -> impl FnOnce(Error) -> Error {
    move |source| Error::Trial {
        row,
        replication,
        source: Box::new(source),
    }
}
