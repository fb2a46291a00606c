use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scheduler::{EpisodeReport, Environment, Scheduler, SchedulerState};
use crate::tasks::build_world;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::MetricsRow;

/// Sidecar written next to a metrics CSV so runs can be compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub config: RunConfig,
    /// Held-out target loss of the freshly initialized parameters.
    pub initial_target_loss: f64,
}

impl RunMeta {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `<csv>.meta.json`, where the sidecar for `csv` lives.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn build_environment(config: &RunConfig) -> Result<Environment> {
    config.validate()?;
    let world = build_world(config.world_seed(), config.vocab_size, config.context_len)?;
    Environment::new(
        world,
        config.encoder(),
        config.task_specs()?,
        &config.sources,
        &config.targets,
        config.mode,
        config.seed,
    )
}

/// Scheduler for `config`, either fresh or continuing from `resume`.
pub fn build_scheduler<T: Scalar>(
    config: &RunConfig,
    resume: Option<&Checkpoint<T>>,
) -> Result<Scheduler<T>> {
    let env = build_environment(config)?;
    let sched = match resume {
        None => Scheduler::new(env, config.scheduler())?,
        Some(ckpt) => {
            if !config.resumable_from(&ckpt.config) {
                return Err(Error::config(
                    "resume",
                    "checkpoint was written under a different configuration",
                ));
            }
            Scheduler::resume(
                env,
                config.scheduler(),
                SchedulerState {
                    theta: ckpt.params.clone(),
                    episode: ckpt.episode,
                    cumulative_updates: ckpt.cumulative_updates,
                },
            )?
        }
    };
    sched
        .with_eval_batches(config.eval_batches)?
        .with_workers(config.workers)
}

pub fn metrics_row<T: Scalar>(config: &RunConfig, report: &EpisodeReport<T>, wallclock_ms: u64) -> MetricsRow {
    MetricsRow {
        episode: report.episode,
        policy: report.policy.name().to_string(),
        seed: config.seed,
        chosen_task: report.chosen_task.clone(),
        explored: report.explored,
        utilities: report
            .utilities
            .as_ref()
            .map(|u| u.values().map(Scalar::as_f64).collect()),
        target_loss_mean: report.target_loss_after.as_f64(),
        cumulative_updates: report.cumulative_updates,
        wallclock_ms,
    }
}

/// Result of [`run_experiment_with`].
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub sources: Vec<String>,
    pub rows: Vec<MetricsRow>,
    pub reports: Vec<EpisodeReport<T>>,
    pub checkpoint: Checkpoint<T>,
    pub meta: RunMeta,
}

/// Runs episodes until `config.episodes` have completed, calling `on_row`
/// after each. An error stops the run; rows already handed to `on_row`
/// stay valid.
pub fn run_experiment_with<T: Scalar>(
    config: &RunConfig,
    resume: Option<&Checkpoint<T>>,
    mut on_row: impl FnMut(&MetricsRow) -> Result<()>,
) -> Result<RunOutput<T>> {
    let mut sched = build_scheduler(config, resume)?;
    let initial = sched
        .eval_target_loss(&sched.env().encoder.init_parameters(config.seed))?
        .as_f64();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    while sched.state().episode < config.episodes {
        let start = Instant::now();
        let report = sched.run_episode()?;
        let row = metrics_row(config, &report, start.elapsed().as_millis() as u64);
        on_row(&row)?;
        rows.push(row);
        reports.push(report);
    }
    let state = sched.state();
    Ok(RunOutput {
        sources: sched.env().source_ids(),
        rows,
        reports,
        checkpoint: Checkpoint {
            config: config.resolved(),
            episode: state.episode,
            cumulative_updates: state.cumulative_updates,
            params: state.theta.clone(),
        },
        meta: RunMeta {
            config: config.resolved(),
            initial_target_loss: initial,
        },
    })
}

/// Runs `config` from scratch and returns its rows and final checkpoint.
pub fn run_experiment<T: Scalar>(config: &RunConfig) -> Result<(Vec<MetricsRow>, Checkpoint<T>)> {
    let out = run_experiment_with::<T>(config, None, |_| Ok(()))?;
    Ok((out.rows, out.checkpoint))
}
