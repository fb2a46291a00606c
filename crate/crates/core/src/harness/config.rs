//! JSON run configuration.
//!
//! A single flat document; every field is optional and unknown keys are
//! errors. See `docs/config.md` for the schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, TrunkKind};
use crate::scheduler::{Mode, Policy, SchedulerConfig, DEFAULT_EVAL_BATCHES};
use crate::tasks::{validate_task_id, TaskKind, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub id: String,
    pub kind: TaskKind,
    /// Defaults to the run's `batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Class count, noise tasks only (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

impl TaskDef {
    pub fn new(id: &str, kind: TaskKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            batch_size: None,
            classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub episodes: u64,

    pub alpha: f64,
    pub lambda: f64,
    pub m_batches: usize,
    pub n_batches: usize,
    pub epsilon: f64,
    pub mode: Mode,
    pub policy: Policy,
    pub fixed_sequence: Vec<usize>,
    pub head_warmup_steps: usize,
    pub normalize_target_losses: bool,

    pub vocab_size: usize,
    pub context_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub trunk: TrunkKind,
    pub bias: bool,
    /// Follows `seed` when absent.
    pub world_seed: Option<u64>,
    pub batch_size: usize,

    pub tasks: Vec<TaskDef>,
    pub sources: Vec<String>,
    pub targets: Vec<String>,

    /// Held-out batches per target task for `target_loss_mean`.
    pub eval_batches: usize,
    /// Threads for per-source utility evaluation.
    pub workers: usize,

    pub metrics_path: Option<String>,
    pub checkpoint_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sched = SchedulerConfig::default();
        Self {
            seed: 0,
            episodes: 200,
            alpha: sched.alpha,
            lambda: sched.lambda,
            m_batches: sched.m_batches,
            n_batches: sched.n_batches,
            epsilon: sched.epsilon,
            mode: sched.mode,
            policy: sched.policy,
            fixed_sequence: sched.fixed_sequence,
            head_warmup_steps: sched.head_warmup_steps,
            normalize_target_losses: sched.normalize_target_losses,
            vocab_size: 16,
            context_len: 16,
            embed_dim: 8,
            hidden_dim: 16,
            trunk: TrunkKind::MeanPoolMlp,
            bias: false,
            world_seed: None,
            batch_size: 32,
            tasks: vec![
                TaskDef::new("bigram", TaskKind::BigramPresence),
                TaskDef::new("masked", TaskKind::MaskedToken),
                TaskDef::new("noise", TaskKind::Noise),
            ],
            sources: vec!["bigram".into(), "masked".into(), "noise".into()],
            targets: vec!["bigram".into()],
            eval_batches: DEFAULT_EVAL_BATCHES,
            workers: 1,
            metrics_path: None,
            checkpoint_path: None,
        }
    }
}

/// Parses and validates a configuration document, with every default
/// written out.
pub fn load_run_config(text: &str) -> Result<RunConfig> {
    Ok(parse_run_config(text)?.resolved())
}

/// Like [`load_run_config`] but leaves `world_seed` unset when the document
/// omits it, so a later seed override still carries the world along.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field"))
            .unwrap_or("document")
            .to_string();
        Error::config(field, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn world_seed(&self) -> u64 {
        self.world_seed.unwrap_or(self.seed)
    }

    /// Copy with every implicit default written out.
    pub fn resolved(&self) -> Self {
        Self {
            world_seed: Some(self.world_seed()),
            ..self.clone()
        }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            m_batches: self.m_batches,
            n_batches: self.n_batches,
            epsilon: self.epsilon,
            mode: self.mode,
            policy: self.policy,
            head_warmup_steps: self.head_warmup_steps,
            fixed_sequence: self.fixed_sequence.clone(),
            normalize_target_losses: self.normalize_target_losses,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            vocab_size: self.vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            context_len: self.context_len,
            trunk: self.trunk,
            bias: self.bias,
        }
    }

    pub fn task_specs(&self) -> Result<Vec<TaskSpec>> {
        self.tasks
            .iter()
            .map(|t| {
                TaskSpec::new(
                    &t.id,
                    t.kind,
                    t.batch_size.unwrap_or(self.batch_size),
                    self.vocab_size,
                    t.classes,
                )
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.vocab_size < 4 {
            return Err(Error::config("vocab_size", "must be at least 4"));
        }
        self.encoder().validate()?;
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        if self.eval_batches < 1 {
            return Err(Error::config("eval_batches", "must be at least 1"));
        }
        if self.workers < 1 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            validate_task_id(&t.id)?;
            if self.tasks[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::config("tasks", format!("duplicate task id `{}`", t.id)));
            }
        }
        self.task_specs()?;
        for (field, list) in [("sources", &self.sources), ("targets", &self.targets)] {
            if list.is_empty() {
                return Err(Error::config(field, "must list at least one task"));
            }
            for (i, id) in list.iter().enumerate() {
                if list[..i].contains(id) {
                    return Err(Error::config(field, format!("`{id}` listed twice")));
                }
                if !self.tasks.iter().any(|t| &t.id == id) {
                    return Err(Error::config(field, format!("unknown task `{id}`")));
                }
            }
        }
        if self.mode == Mode::DownstreamAgnostic && self.sources != self.targets {
            return Err(Error::config(
                "targets",
                "downstream_agnostic mode requires targets to equal sources",
            ));
        }
        self.scheduler().validate(self.sources.len())
    }

    /// World and model fields; runs are comparable only when these agree.
    pub fn setting_key(&self) -> serde_json::Value {
        serde_json::json!({
            "vocab_size": self.vocab_size,
            "context_len": self.context_len,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "trunk": self.trunk,
            "bias": self.bias,
            "batch_size": self.batch_size,
            "tasks": self.tasks,
            "sources": self.sources,
            "targets": self.targets,
            "mode": self.mode,
        })
    }

    /// True when `other` can continue a run started under `self`: only the
    /// episode budget, worker count and output paths may differ.
    pub fn resumable_from(&self, other: &RunConfig) -> bool {
        let strip = |c: &RunConfig| RunConfig {
            episodes: 0,
            workers: 1,
            metrics_path: None,
            checkpoint_path: None,
            ..c.resolved()
        };
        strip(self) == strip(other)
    }
}
