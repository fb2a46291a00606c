//! Shared-trunk encoder with one linear prediction head per task.
//!
//! The trunk maps a `[batch, context]` token grid to per-position hidden
//! states `[batch * context, hidden]` and a pooled per-sequence state
//! `[batch, hidden]`. A head reads whichever of the two its task needs.

use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientMap, ParameterSet, Primitive, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamId};
use crate::scalar::Scalar;
use crate::tasks::Subtask;

use rand::Rng;

pub const EMBED: &str = "trunk.embed";
pub const POSITION: &str = "trunk.position";
pub const QUERY: &str = "trunk.query";
pub const KEY: &str = "trunk.key";
pub const VALUE: &str = "trunk.value";
pub const HIDDEN_WEIGHT: &str = "trunk.hidden.weight";
pub const HIDDEN_BIAS: &str = "trunk.hidden.bias";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkKind {
    /// Token embedding concatenated with the previous token's embedding and
    /// the running mean of embeddings up to the current position, then one
    /// tanh layer.
    #[default]
    MeanPoolMlp,
    /// Causal single-head self-attention with learned positions, then the
    /// same tanh layer over `[embedding, attended]`.
    SingleHeadAttention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of content tokens. Two reserved ids (mask, pad) follow them.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub context_len: usize,
    pub trunk: TrunkKind,
    /// Adds zero-initialized biases to the hidden layer and every head.
    #[serde(default)]
    pub bias: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.context_len < 2 {
            return Err(Error::config("context_len", "must be at least 2"));
        }
        Ok(())
    }

    pub fn mask_token(&self) -> usize {
        self.vocab_size
    }

    pub fn pad_token(&self) -> usize {
        self.vocab_size + 1
    }

    /// Rows of the embedding table: content tokens plus the reserved ids.
    pub fn table_rows(&self) -> usize {
        self.vocab_size + 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetShape {
    PerToken,
    PerSequence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskHeadSpec {
    pub task_id: String,
    pub output_classes: usize,
    pub target_shape: TargetShape,
}

pub fn head_weight_name(task_id: &str) -> String {
    format!("head.{task_id}.weight")
}

pub fn head_bias_name(task_id: &str) -> String {
    format!("head.{task_id}.bias")
}

pub fn is_head_param(name: &str, task_id: &str) -> bool {
    name == head_weight_name(task_id) || name == head_bias_name(task_id)
}

/// Hidden states captured from the trunk during a forward pass.
#[derive(Clone, Debug)]
pub struct TrunkCapture<T> {
    pub per_token: Tensor<T>,
    pub per_sequence: Tensor<T>,
}

/// Architecture description: trunk configuration plus the head registry.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    heads: Vec<TaskHeadSpec>,
}

struct Forward {
    loss: Var,
    per_token: Var,
    per_sequence: Var,
}

impl Encoder {
    pub fn new(config: EncoderConfig, heads: Vec<TaskHeadSpec>) -> Result<Self> {
        config.validate()?;
        if heads.is_empty() {
            return Err(Error::config("heads", "at least one head is required"));
        }
        for (i, h) in heads.iter().enumerate() {
            if heads[..i].iter().any(|o| o.task_id == h.task_id) {
                return Err(Error::DuplicateTask(h.task_id.clone()));
            }
            if h.output_classes < 2 {
                return Err(Error::config(
                    format!("heads.{}.output_classes", h.task_id),
                    "must be at least 2",
                ));
            }
        }
        Ok(Self { config, heads })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn heads(&self) -> &[TaskHeadSpec] {
        &self.heads
    }

    pub fn head(&self, task_id: &str) -> Result<&TaskHeadSpec> {
        self.heads
            .iter()
            .find(|h| h.task_id == task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    /// `(name, shape)` of every trunk tensor, in draw order.
    pub fn trunk_layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let c = &self.config;
        let e = c.embed_dim;
        let mut layout = vec![(EMBED, vec![c.table_rows(), e])];
        if c.trunk == TrunkKind::SingleHeadAttention {
            layout.push((POSITION, vec![c.context_len, e]));
            layout.push((QUERY, vec![e, e]));
            layout.push((KEY, vec![e, e]));
            layout.push((VALUE, vec![e, e]));
        }
        let width = match c.trunk {
            TrunkKind::MeanPoolMlp => 3 * e,
            TrunkKind::SingleHeadAttention => 2 * e,
        };
        layout.push((HIDDEN_WEIGHT, vec![width, c.hidden_dim]));
        if c.bias {
            layout.push((HIDDEN_BIAS, vec![c.hidden_dim]));
        }
        layout
    }

    /// Glorot-uniform weights, zero biases. Each tensor draws from its own
    /// stream, so adding a head never perturbs the others.
    pub fn init_parameters<T: Scalar>(&self, seed: u64) -> ParameterSet<T> {
        let mut params = ParameterSet::new();
        let mut push = |name: String, shape: Vec<usize>, bias: bool| {
            let n: usize = shape.iter().product();
            let data = if bias {
                vec![T::zero(); n]
            } else {
                let fan_in = shape[0];
                let fan_out = shape[1];
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut rng = StreamId::new(seed, Purpose::Init).task(&name).rng();
                (0..n)
                    .map(|_| T::of(rng.gen_range(-bound..bound)))
                    .collect()
            };
            params
                .insert(name, Tensor::from_parts(shape, data))
                .expect("layout names are unique");
        };
        for (name, shape) in self.trunk_layout() {
            let bias = shape.len() == 1;
            push(name.to_string(), shape, bias);
        }
        for h in &self.heads {
            push(
                head_weight_name(&h.task_id),
                vec![self.config.hidden_dim, h.output_classes],
                false,
            );
            if self.config.bias {
                push(head_bias_name(&h.task_id), vec![h.output_classes], true);
            }
        }
        params
    }

    /// Mean cross-entropy of `subtask` under `params`.
    pub fn forward_loss<T: Scalar>(&self, params: &ParameterSet<T>, subtask: &Subtask) -> Result<T> {
        let mut tape = Tape::new();
        let fwd = self.build(&mut tape, params, subtask, false)?;
        tape.value(fwd.loss).item()
    }

    /// Loss and its gradient with respect to the trunk and this task's head.
    pub fn loss_and_grad<T: Scalar>(
        &self,
        params: &ParameterSet<T>,
        subtask: &Subtask,
    ) -> Result<(T, GradientMap<T>)> {
        let mut tape = Tape::new();
        let fwd = self.build(&mut tape, params, subtask, true)?;
        let grads = tape.backward(fwd.loss)?;
        Ok((tape.value(fwd.loss).item()?, grads))
    }

    /// Loss together with the trunk activations it was computed from.
    pub fn forward_capture<T: Scalar>(
        &self,
        params: &ParameterSet<T>,
        subtask: &Subtask,
    ) -> Result<(T, TrunkCapture<T>)> {
        let mut tape = Tape::new();
        let fwd = self.build(&mut tape, params, subtask, false)?;
        let capture = TrunkCapture {
            per_token: tape.value(fwd.per_token).clone(),
            per_sequence: tape.value(fwd.per_sequence).clone(),
        };
        Ok((tape.value(fwd.loss).item()?, capture))
    }

    fn check_subtask(&self, head: &TaskHeadSpec, s: &Subtask) -> Result<()> {
        let bad = |reason: String| Error::InvalidSubtask {
            task: s.task_id.clone(),
            reason,
        };
        let l = self.config.context_len;
        if s.context_len != l {
            return Err(bad(format!("context {} but encoder expects {l}", s.context_len)));
        }
        if s.batch_size == 0 || s.inputs.len() != s.batch_size * l {
            return Err(bad(format!("{} inputs for batch {}", s.inputs.len(), s.batch_size)));
        }
        if let Some(&t) = s.inputs.iter().find(|&&t| t >= self.config.table_rows()) {
            return Err(bad(format!("token {t} outside vocabulary")));
        }
        let rows = match head.target_shape {
            TargetShape::PerToken => s.batch_size * l,
            TargetShape::PerSequence => s.batch_size,
        };
        if s.labels.len() != rows || s.mask.len() != rows {
            return Err(bad(format!(
                "{} labels / {} mask entries, head needs {rows}",
                s.labels.len(),
                s.mask.len()
            )));
        }
        if !s.mask.iter().any(|&m| m) {
            return Err(bad("no scored positions".into()));
        }
        for (&label, &m) in s.labels.iter().zip(&s.mask) {
            if m && label >= head.output_classes {
                return Err(Error::LabelOutOfRange {
                    task: s.task_id.clone(),
                    label,
                    classes: head.output_classes,
                });
            }
        }
        Ok(())
    }

    fn leaf<T: Scalar>(
        tape: &mut Tape<T>,
        params: &ParameterSet<T>,
        name: &str,
        with_grad: bool,
    ) -> Result<Var> {
        let value = params.require(name)?.clone();
        if with_grad {
            tape.param(name, value)
        } else {
            Ok(tape.constant(value))
        }
    }

    fn build<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParameterSet<T>,
        subtask: &Subtask,
        with_grad: bool,
    ) -> Result<Forward> {
        let head = self.head(&subtask.task_id)?;
        self.check_subtask(head, subtask)?;
        let (per_token, per_sequence) = self.trunk(tape, params, subtask, with_grad)?;

        let w = Self::leaf(tape, params, &head_weight_name(&head.task_id), with_grad)?;
        let features = match head.target_shape {
            TargetShape::PerToken => per_token,
            TargetShape::PerSequence => per_sequence,
        };
        let mut logits = tape.apply(Primitive::MatMul, &[features, w])?;
        if self.config.bias {
            let b = Self::leaf(tape, params, &head_bias_name(&head.task_id), with_grad)?;
            logits = tape.apply(Primitive::Add, &[logits, b])?;
        }
        let loss = tape.apply(
            Primitive::SoftmaxCrossEntropy {
                labels: subtask.labels.clone(),
                mask: subtask.mask.clone(),
            },
            &[logits],
        )?;
        Ok(Forward {
            loss,
            per_token,
            per_sequence,
        })
    }

    fn trunk<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParameterSet<T>,
        subtask: &Subtask,
        with_grad: bool,
    ) -> Result<(Var, Var)> {
        let c = &self.config;
        let (b, l, e) = (subtask.batch_size, c.context_len, c.embed_dim);

        let table = Self::leaf(tape, params, EMBED, with_grad)?;
        let x = tape.apply(
            Primitive::EmbeddingLookup {
                indices: subtask.inputs.clone(),
            },
            &[table],
        )?;
        let mut x = tape.apply(Primitive::Reshape { shape: vec![b, l, e] }, &[x])?;

        let features = match c.trunk {
            TrunkKind::MeanPoolMlp => {
                // Position mixing as (x^T . M)^T: prev[b, t] = x[b, t - 1] (zero
                // at t = 0), prefix[b, t] = mean of x[b, 0..=t].
                let mut shift = vec![T::zero(); l * l];
                let mut avg = vec![T::zero(); l * l];
                for t in 0..l {
                    if t > 0 {
                        shift[(t - 1) * l + t] = T::one();
                    }
                    for s in 0..=t {
                        avg[s * l + t] = T::one() / T::of((t + 1) as f64);
                    }
                }
                let xt = tape.apply(Primitive::Transpose, &[x])?;
                let mut mixed = Vec::with_capacity(2);
                for m in [shift, avg] {
                    let m = tape.constant(Tensor::from_parts(vec![l, l], m));
                    let y = tape.apply(Primitive::MatMul, &[xt, m])?;
                    mixed.push(tape.apply(Primitive::Transpose, &[y])?);
                }
                vec![x, mixed[0], mixed[1]]
            }
            TrunkKind::SingleHeadAttention => {
                let pos = Self::leaf(tape, params, POSITION, with_grad)?;
                x = tape.apply(Primitive::Add, &[x, pos])?;
                let wq = Self::leaf(tape, params, QUERY, with_grad)?;
                let wk = Self::leaf(tape, params, KEY, with_grad)?;
                let wv = Self::leaf(tape, params, VALUE, with_grad)?;
                let q = tape.apply(Primitive::MatMul, &[x, wq])?;
                let k = tape.apply(Primitive::MatMul, &[x, wk])?;
                let v = tape.apply(Primitive::MatMul, &[x, wv])?;
                let kt = tape.apply(Primitive::Transpose, &[k])?;
                let scores = tape.apply(Primitive::MatMul, &[q, kt])?;
                let scale = tape.constant(Tensor::scalar(T::one() / T::of(e as f64).sqrt()));
                let scores = tape.apply(Primitive::Multiply, &[scores, scale])?;
                let mut causal = vec![T::zero(); l * l];
                for t in 0..l {
                    for s in t + 1..l {
                        causal[t * l + s] = T::of(-1e9);
                    }
                }
                let causal = tape.constant(Tensor::from_parts(vec![l, l], causal));
                let scores = tape.apply(Primitive::Add, &[scores, causal])?;
                let attn = tape.apply(Primitive::Softmax, &[scores])?;
                vec![x, tape.apply(Primitive::MatMul, &[attn, v])?]
            }
        };

        let mut z = features[0];
        for &f in &features[1..] {
            z = tape.apply(Primitive::Concat { axis: 2 }, &[z, f])?;
        }
        let w1 = Self::leaf(tape, params, HIDDEN_WEIGHT, with_grad)?;
        let mut h = tape.apply(Primitive::MatMul, &[z, w1])?;
        if c.bias {
            let b1 = Self::leaf(tape, params, HIDDEN_BIAS, with_grad)?;
            h = tape.apply(Primitive::Add, &[h, b1])?;
        }
        let h = tape.apply(Primitive::Tanh, &[h])?;
        let per_sequence = tape.apply(Primitive::ReduceMean { axis: Some(1) }, &[h])?;
        let per_token = tape.apply(
            Primitive::Reshape {
                shape: vec![b * l, c.hidden_dim],
            },
            &[h],
        )?;
        Ok((per_token, per_sequence))
    }
}

/// Builds an [`Encoder`] and draws its initial parameters.
pub fn init_parameters<T: Scalar>(
    config: EncoderConfig,
    heads: Vec<TaskHeadSpec>,
    seed: u64,
) -> Result<ParameterSet<T>> {
    Ok(Encoder::new(config, heads)?.init_parameters(seed))
}
