//! Episodic task selection by fast adaptation.
//!
//! Each episode samples a fixed list of target batches, then scores every
//! source task by how much single gradient steps on that task's batches
//! lower the summed target loss. The best-scoring task (or a random one,
//! with probability epsilon) is trained on for the rest of the episode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_update, ParameterSet};
use crate::error::{Error, Result};
use crate::model::{is_head_param, Encoder};
use crate::rng::{Purpose, StreamId};
use crate::scalar::Scalar;
use crate::tasks::{sample_subtask, Subtask, TaskSpec, World};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Targets are their own downstream-style tasks with heads trained
    /// alongside the trunk.
    #[default]
    DownstreamAware,
    /// The target set is the source set.
    DownstreamAgnostic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Meta,
    RoundRobin,
    UniformRandom,
    FixedSequence,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Meta => "meta",
            Policy::RoundRobin => "round_robin",
            Policy::UniformRandom => "uniform_random",
            Policy::FixedSequence => "fixed_sequence",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Policy::Meta,
            Policy::RoundRobin,
            Policy::UniformRandom,
            Policy::FixedSequence,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::config("policy", format!("unknown policy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Fast-adaptation step size.
    pub alpha: f64,
    /// Pretraining step size.
    pub lambda: f64,
    /// Batches per task for scoring (target batches and source probes).
    pub m_batches: usize,
    /// Pretraining steps on the chosen task.
    pub n_batches: usize,
    pub epsilon: f64,
    pub mode: Mode,
    pub policy: Policy,
    /// Head-only steps per target task per episode, downstream-aware only.
    pub head_warmup_steps: usize,
    /// Source indices cycled by [`Policy::FixedSequence`].
    pub fixed_sequence: Vec<usize>,
    /// Divide each target loss by `ln(classes)` before summing.
    pub normalize_target_losses: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            lambda: 0.1,
            m_batches: 2,
            n_batches: 8,
            epsilon: 0.1,
            mode: Mode::DownstreamAware,
            policy: Policy::Meta,
            head_warmup_steps: 1,
            fixed_sequence: Vec::new(),
            normalize_target_losses: false,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self, source_count: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("alpha", "must be finite and >= 0"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be finite and >= 0"));
        }
        if self.m_batches < 1 {
            return Err(Error::config("m_batches", "must be at least 1"));
        }
        if self.n_batches < 1 {
            return Err(Error::config("n_batches", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 1]"));
        }
        if self.policy == Policy::FixedSequence && self.fixed_sequence.is_empty() {
            return Err(Error::config(
                "fixed_sequence",
                "required by the fixed_sequence policy",
            ));
        }
        if let Some(&bad) = self.fixed_sequence.iter().find(|&&i| i >= source_count) {
            return Err(Error::config(
                "fixed_sequence",
                format!("index {bad} but only {source_count} sources"),
            ));
        }
        Ok(())
    }
}

/// Accumulated utility per source task, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityTable<T> {
    entries: Vec<(String, T)>,
}

impl<T: Scalar> UtilityTable<T> {
    /// Every listed task starts at zero.
    pub fn zeroed<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            entries: ids.into_iter().map(|id| (id.to_string(), T::zero())).collect(),
        }
    }

    pub fn from_entries(entries: Vec<(String, T)>) -> Result<Self> {
        for (i, (id, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(o, _)| o == id) {
                return Err(Error::DuplicateTask(id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &str) -> Option<T> {
        self.entries.iter().find(|(k, _)| k == id).map(|&(_, v)| v)
    }

    pub fn add(&mut self, index: usize, value: T) {
        self.entries[index].1 += value;
    }

    pub fn entries(&self) -> &[(String, T)] {
        &self.entries
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.entries.iter().map(|&(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the largest utility; ties go to the earliest entry.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &(_, v)) in self.entries.iter().enumerate() {
            match best {
                Some((_, bv)) if !(v > bv) => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// Index of the smallest utility; ties go to the earliest entry.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &(_, v)) in self.entries.iter().enumerate() {
            match best {
                Some((_, bv)) if !(v < bv) => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Ranks parameters by their performance on a list of target batches.
pub trait Scorer<T: Scalar>: Send + Sync {
    fn score(&self, encoder: &Encoder, params: &ParameterSet<T>, targets: &[Subtask]) -> Result<T>;
}

/// `-sum_j L(target_j)`: the plain negated loss sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NegatedLossSum;

impl<T: Scalar> Scorer<T> for NegatedLossSum {
    fn score(&self, encoder: &Encoder, params: &ParameterSet<T>, targets: &[Subtask]) -> Result<T> {
        scorer(encoder, params, targets)
    }
}

/// Like [`NegatedLossSum`] but each loss is divided by its task's
/// uniform-prediction loss `ln(classes)` first.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalizedLossSum;

impl<T: Scalar> Scorer<T> for NormalizedLossSum {
    fn score(&self, encoder: &Encoder, params: &ParameterSet<T>, targets: &[Subtask]) -> Result<T> {
        if targets.is_empty() {
            return Err(Error::Scheduler("scorer needs at least one target batch".into()));
        }
        let mut total = T::zero();
        for t in targets {
            let classes = encoder.head(&t.task_id)?.output_classes;
            total += encoder.forward_loss(params, t)? / T::of((classes as f64).ln());
        }
        Ok(-total)
    }
}

/// Negated sum of per-batch losses. Evaluation only; `params` is not touched.
pub fn scorer<T: Scalar>(encoder: &Encoder, params: &ParameterSet<T>, targets: &[Subtask]) -> Result<T> {
    if targets.is_empty() {
        return Err(Error::Scheduler("scorer needs at least one target batch".into()));
    }
    let mut total = T::zero();
    for t in targets {
        total += encoder.forward_loss(params, t)?;
    }
    Ok(-total)
}

/// Everything about a run that stays fixed across episodes.
#[derive(Clone, Debug)]
pub struct Environment {
    pub world: World,
    pub encoder: Encoder,
    pub tasks: Vec<TaskSpec>,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub seed: u64,
}

impl Environment {
    /// Registers `tasks` and resolves the source and target id lists.
    /// Every task gets a head, so target heads exist from initialization.
    pub fn new(
        world: World,
        encoder_config: crate::model::EncoderConfig,
        tasks: Vec<TaskSpec>,
        source_ids: &[String],
        target_ids: &[String],
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::DuplicateTask(t.id.clone()));
            }
        }
        let resolve = |field: &str, ids: &[String]| -> Result<Vec<usize>> {
            if ids.is_empty() {
                return Err(Error::config(field, "must list at least one task"));
            }
            let mut out = Vec::with_capacity(ids.len());
            for (i, id) in ids.iter().enumerate() {
                if ids[..i].contains(id) {
                    return Err(Error::config(field, format!("`{id}` listed twice")));
                }
                let idx = tasks
                    .iter()
                    .position(|t| &t.id == id)
                    .ok_or_else(|| Error::config(field, format!("unknown task `{id}`")))?;
                out.push(idx);
            }
            Ok(out)
        };
        let sources = resolve("sources", source_ids)?;
        let targets = resolve("targets", target_ids)?;
        if mode == Mode::DownstreamAgnostic && sources != targets {
            return Err(Error::config(
                "targets",
                "downstream_agnostic mode requires targets to equal sources",
            ));
        }
        let encoder = Encoder::new(encoder_config, tasks.iter().map(|t| t.head.clone()).collect())?;
        Ok(Self {
            world,
            encoder,
            tasks,
            sources,
            targets,
            seed,
        })
    }

    pub fn source(&self, i: usize) -> &TaskSpec {
        &self.tasks[self.sources[i]]
    }

    pub fn sources(&self) -> impl Iterator<Item = &TaskSpec> {
        self.sources.iter().map(|&i| &self.tasks[i])
    }

    pub fn targets(&self) -> impl Iterator<Item = &TaskSpec> {
        self.targets.iter().map(|&i| &self.tasks[i])
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources().map(|t| t.id.clone()).collect()
    }
}

/// `m` batches per target task for one episode, grouped by task in
/// registration order.
pub fn sample_targets(
    world: &World,
    targets: &[&TaskSpec],
    m: usize,
    seed: u64,
    episode: u64,
) -> Result<Vec<Subtask>> {
    if targets.is_empty() {
        return Err(Error::Scheduler("target set is empty".into()));
    }
    let mut out = Vec::with_capacity(m * targets.len());
    for spec in targets {
        for j in 0..m {
            let stream = StreamId::new(seed, Purpose::Target)
                .episode(episode)
                .task(&spec.id)
                .draw(j as u64);
            out.push(sample_subtask(world, spec, stream)?);
        }
    }
    Ok(out)
}

/// The `m` probe batches of one source task for one episode.
pub fn sample_source_batches(
    world: &World,
    source: &TaskSpec,
    m: usize,
    seed: u64,
    episode: u64,
) -> Result<Vec<Subtask>> {
    (0..m)
        .map(|i| {
            let stream = StreamId::new(seed, Purpose::Source)
                .episode(episode)
                .task(&source.id)
                .draw(i as u64);
            sample_subtask(world, source, stream)
        })
        .collect()
}

/// Sum over `source_batches` of the score of `theta - alpha * grad`, each
/// step taken from the same `theta`.
pub fn adapted_utility<T: Scalar>(
    encoder: &Encoder,
    theta: &ParameterSet<T>,
    source_batches: &[Subtask],
    targets: &[Subtask],
    alpha: T,
    scorer: &dyn Scorer<T>,
) -> Result<T> {
    let mut utility = T::zero();
    for batch in source_batches {
        let (_, grads) = encoder.loss_and_grad(theta, batch)?;
        let adapted = sgd_update(theta, &grads, alpha)?;
        utility += scorer.score(encoder, &adapted, targets)?;
    }
    Ok(utility)
}

/// Utility of one source task for `episode` under the plain scorer.
pub fn evaluate_task_utility<T: Scalar>(
    env: &Environment,
    theta: &ParameterSet<T>,
    source: &TaskSpec,
    targets: &[Subtask],
    cfg: &SchedulerConfig,
    episode: u64,
) -> Result<T> {
    let batches = sample_source_batches(&env.world, source, cfg.m_batches, env.seed, episode)?;
    adapted_utility(
        &env.encoder,
        theta,
        &batches,
        targets,
        T::of(cfg.alpha),
        &NegatedLossSum,
    )
}

/// The stream epsilon-greedy selection draws from.
pub fn selection_stream(seed: u64, episode: u64) -> StreamId {
    StreamId::new(seed, Purpose::Select).episode(episode)
}

/// Epsilon-greedy choice. Returns `(index, explored)`.
///
/// One uniform draw decides between exploring and exploiting; exploring
/// then picks uniformly over all entries, the argmax included.
pub fn select_task<T: Scalar>(
    utilities: &UtilityTable<T>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<(usize, bool)> {
    if utilities.is_empty() {
        return Err(Error::Scheduler("cannot select from an empty utility table".into()));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok((rng.gen_range(0..utilities.len()), true));
    }
    Ok((utilities.argmax().expect("non-empty"), false))
}

/// `n_batches` sequential SGD steps at rate `lambda` on fresh batches of `chosen`.
pub fn pretrain_on_task<T: Scalar>(
    env: &Environment,
    theta: &ParameterSet<T>,
    chosen: &TaskSpec,
    cfg: &SchedulerConfig,
    episode: u64,
) -> Result<ParameterSet<T>> {
    let lr = T::of(cfg.lambda);
    let mut params = theta.clone();
    for i in 0..cfg.n_batches {
        let stream = StreamId::new(env.seed, Purpose::Pretrain)
            .episode(episode)
            .task(&chosen.id)
            .draw(i as u64);
        let batch = sample_subtask(&env.world, chosen, stream)?;
        let (_, grads) = env.encoder.loss_and_grad(&params, &batch)?;
        params = sgd_update(&params, &grads, lr)?;
    }
    Ok(params)
}

/// Head-only steps for each target task on that episode's target batches,
/// with the trunk and every other head frozen. Returns the update count.
pub fn warm_up_target_heads<T: Scalar>(
    env: &Environment,
    theta: &mut ParameterSet<T>,
    targets: &[Subtask],
    cfg: &SchedulerConfig,
) -> Result<u64> {
    let lr = T::of(cfg.lambda);
    let mut updates = 0;
    for spec in env.targets() {
        let batches: Vec<&Subtask> = targets.iter().filter(|s| s.task_id == spec.id).collect();
        if batches.is_empty() {
            continue;
        }
        for step in 0..cfg.head_warmup_steps {
            let batch = batches[step % batches.len()];
            let (_, grads) = env.encoder.loss_and_grad(theta, batch)?;
            let grads = grads.retain(|name| is_head_param(name, &spec.id));
            *theta = sgd_update(theta, &grads, lr)?;
            updates += 1;
        }
    }
    Ok(updates)
}

/// Next source index for a non-adaptive policy.
pub fn baseline_next_task(
    policy: Policy,
    episode: u64,
    source_count: usize,
    seed: u64,
    sequence: &[usize],
) -> Result<usize> {
    if source_count == 0 {
        return Err(Error::Scheduler("no source tasks".into()));
    }
    match policy {
        Policy::RoundRobin => Ok((episode % source_count as u64) as usize),
        Policy::UniformRandom => {
            let mut rng = StreamId::new(seed, Purpose::Baseline).episode(episode).rng();
            Ok(rng.gen_range(0..source_count))
        }
        Policy::FixedSequence => {
            if sequence.is_empty() {
                return Err(Error::config("fixed_sequence", "no sequence configured"));
            }
            let idx = sequence[(episode % sequence.len() as u64) as usize];
            if idx >= source_count {
                return Err(Error::config(
                    "fixed_sequence",
                    format!("index {idx} but only {source_count} sources"),
                ));
            }
            Ok(idx)
        }
        Policy::Meta => Err(Error::Scheduler("meta is not a baseline policy".into())),
    }
}

/// What happened in one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport<T> {
    /// 1-based.
    pub episode: u64,
    pub policy: Policy,
    /// `None` for baseline policies, which skip utility evaluation.
    pub utilities: Option<UtilityTable<T>>,
    pub chosen_index: usize,
    pub chosen_task: String,
    pub explored: bool,
    /// Mean held-out target loss before and after the episode's updates.
    pub target_loss_before: T,
    pub target_loss_after: T,
    pub pretrain_updates: u64,
    pub head_updates: u64,
    /// Pretraining steps since initialization, this episode included.
    pub cumulative_updates: u64,
}

/// Resumable position of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerState<T> {
    pub theta: ParameterSet<T>,
    /// Episodes completed so far.
    pub episode: u64,
    pub cumulative_updates: u64,
}

/// Batches per target task in the fixed held-out evaluation set.
pub const DEFAULT_EVAL_BATCHES: usize = 4;

/// Drives the episode loop over an [`Environment`].
pub struct Scheduler<T: Scalar> {
    env: Environment,
    cfg: SchedulerConfig,
    state: SchedulerState<T>,
    scorer: Box<dyn Scorer<T>>,
    eval_set: Vec<Subtask>,
    eval_loss: Option<T>,
    pool: Option<rayon::ThreadPool>,
}

impl<T: Scalar> Scheduler<T> {
    /// Fresh run: parameters are initialized from the environment's seed.
    pub fn new(env: Environment, cfg: SchedulerConfig) -> Result<Self> {
        let theta = env.encoder.init_parameters(env.seed);
        Self::resume(
            env,
            cfg,
            SchedulerState {
                theta,
                episode: 0,
                cumulative_updates: 0,
            },
        )
    }

    pub fn resume(env: Environment, cfg: SchedulerConfig, state: SchedulerState<T>) -> Result<Self> {
        cfg.validate(env.sources.len())?;
        let expected = env.encoder.init_parameters::<T>(0);
        for (name, tensor) in expected.iter() {
            let got = state.theta.require(name)?;
            if got.shape() != tensor.shape() {
                return Err(Error::ShapeMismatch {
                    op: "resume",
                    shapes: vec![tensor.shape().to_vec(), got.shape().to_vec()],
                });
            }
        }
        if state.theta.len() != expected.len() {
            return Err(Error::Scheduler("parameter set does not match the encoder".into()));
        }
        let scorer: Box<dyn Scorer<T>> = if cfg.normalize_target_losses {
            Box::new(NormalizedLossSum)
        } else {
            Box::new(NegatedLossSum)
        };
        let mut sched = Self {
            env,
            cfg,
            state,
            scorer,
            eval_set: Vec::new(),
            eval_loss: None,
            pool: None,
        };
        sched.eval_set = sched.build_eval_set(DEFAULT_EVAL_BATCHES)?;
        Ok(sched)
    }

    /// Evaluates source utilities on `workers` threads. Results are
    /// reduced in registration order, so output does not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Scheduler(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn with_scorer(mut self, scorer: Box<dyn Scorer<T>>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn with_eval_batches(mut self, batches: usize) -> Result<Self> {
        if batches == 0 {
            return Err(Error::config("eval_batches", "must be at least 1"));
        }
        self.eval_set = self.build_eval_set(batches)?;
        self.eval_loss = None;
        Ok(self)
    }

    fn build_eval_set(&self, batches: usize) -> Result<Vec<Subtask>> {
        let mut out = Vec::new();
        for spec in self.env.targets() {
            for j in 0..batches {
                let stream = StreamId::new(self.env.seed, Purpose::Eval)
                    .task(&spec.id)
                    .draw(j as u64);
                out.push(sample_subtask(&self.env.world, spec, stream)?);
            }
        }
        Ok(out)
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SchedulerState<T> {
        &self.state
    }

    pub fn theta(&self) -> &ParameterSet<T> {
        &self.state.theta
    }

    /// Mean loss over the held-out target batches.
    pub fn eval_target_loss(&self, params: &ParameterSet<T>) -> Result<T> {
        let mut total = T::zero();
        for s in &self.eval_set {
            total += self.env.encoder.forward_loss(params, s)?;
        }
        Ok(total / T::of(self.eval_set.len() as f64))
    }

    /// Utilities of every source task against `targets`, from `theta`.
    pub fn evaluate_utilities(
        &self,
        theta: &ParameterSet<T>,
        targets: &[Subtask],
        episode: u64,
    ) -> Result<UtilityTable<T>> {
        let alpha = T::of(self.cfg.alpha);
        let one = |idx: &usize| -> Result<T> {
            let source = &self.env.tasks[*idx];
            let batches = sample_source_batches(
                &self.env.world,
                source,
                self.cfg.m_batches,
                self.env.seed,
                episode,
            )?;
            adapted_utility(
                &self.env.encoder,
                theta,
                &batches,
                targets,
                alpha,
                self.scorer.as_ref(),
            )
        };
        let values: Vec<T> = match &self.pool {
            Some(pool) => pool.install(|| {
                self.env
                    .sources
                    .par_iter()
                    .map(one)
                    .collect::<Result<Vec<T>>>()
            })?,
            None => self.env.sources.iter().map(one).collect::<Result<Vec<T>>>()?,
        };
        let mut table = UtilityTable::zeroed(self.env.sources().map(|t| t.id.as_str()));
        for (i, v) in values.into_iter().enumerate() {
            table.add(i, v);
        }
        Ok(table)
    }

    /// One full episode. On error the scheduler keeps its pre-episode state.
    pub fn run_episode(&mut self) -> Result<EpisodeReport<T>> {
        let episode = self.state.episode;
        let before = match self.eval_loss {
            Some(v) => v,
            None => self.eval_target_loss(&self.state.theta)?,
        };
        let target_specs: Vec<&TaskSpec> = self.env.targets().collect();
        let targets = sample_targets(
            &self.env.world,
            &target_specs,
            self.cfg.m_batches,
            self.env.seed,
            episode,
        )?;

        let (utilities, chosen_index, explored) = match self.cfg.policy {
            Policy::Meta => {
                let table = self.evaluate_utilities(&self.state.theta, &targets, episode)?;
                let mut rng = selection_stream(self.env.seed, episode).rng();
                let (idx, explored) = select_task(&table, self.cfg.epsilon, &mut rng)?;
                (Some(table), idx, explored)
            }
            policy => {
                let idx = baseline_next_task(
                    policy,
                    episode,
                    self.env.sources.len(),
                    self.env.seed,
                    &self.cfg.fixed_sequence,
                )?;
                (None, idx, false)
            }
        };

        let chosen = self.env.source(chosen_index);
        let mut theta = pretrain_on_task(&self.env, &self.state.theta, chosen, &self.cfg, episode)?;
        let head_updates = if self.cfg.mode == Mode::DownstreamAware {
            warm_up_target_heads(&self.env, &mut theta, &targets, &self.cfg)?
        } else {
            0
        };
        if !theta.all_finite() {
            return Err(Error::NonFinite("episode update"));
        }
        let after = self.eval_target_loss(&theta)?;

        let pretrain_updates = self.cfg.n_batches as u64;
        let report = EpisodeReport {
            episode: episode + 1,
            policy: self.cfg.policy,
            utilities,
            chosen_index,
            chosen_task: chosen.id.clone(),
            explored,
            target_loss_before: before,
            target_loss_after: after,
            pretrain_updates,
            head_updates,
            cumulative_updates: self.state.cumulative_updates + pretrain_updates,
        };
        self.state = SchedulerState {
            theta,
            episode: episode + 1,
            cumulative_updates: report.cumulative_updates,
        };
        self.eval_loss = Some(after);
        Ok(report)
    }
}
