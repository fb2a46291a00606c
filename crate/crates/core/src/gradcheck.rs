//! Self-test comparing reverse-mode gradients against central differences,
//! for every primitive on its own and for the encoder loss of every task
//! kind under both trunks.

use std::fmt;

use rand::Rng;

use crate::autodiff::{
    finite_difference_gradient, finite_difference_gradient_for, max_relative_error, GradientMap,
    ParameterSet, Primitive, PrimitiveKind, Tape, Tensor,
};
use crate::error::Result;
use crate::model::{Encoder, EncoderConfig, TrunkKind};
use crate::rng::{Purpose, StreamId};
use crate::tasks::{build_world, sample_subtask, TaskKind, TaskSpec};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub trials: usize,
    pub max_error: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub cases: Vec<CaseResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(CaseResult::passed)
    }

    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.max_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cases {
            writeln!(
                f,
                "{:<4} {:<40} trials={:<3} max_rel_err={:.3e}",
                if c.passed() { "ok" } else { "FAIL" },
                c.name,
                c.trials,
                c.max_error
            )?;
        }
        write!(
            f,
            "{} of {} cases within {TOLERANCE:e}",
            self.cases.iter().filter(|c| c.passed()).count(),
            self.cases.len()
        )
    }
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Values bounded away from zero, so relu's kink is never straddled.
fn kink_free_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    random_tensor(rng, shape).map(|v| if v < 0.0 { v - 0.1 } else { v + 0.1 })
}

struct PrimitiveCase {
    prim: Primitive,
    operands: Vec<Tensor<f64>>,
}

fn primitive_case(kind: PrimitiveKind, trial: usize, rng: &mut impl Rng) -> PrimitiveCase {
    let mut r = |shape: &[usize]| random_tensor(rng, shape);
    let (prim, operands) = match kind {
        PrimitiveKind::MatMul if trial % 2 == 1 => (Primitive::MatMul, vec![r(&[2, 3, 4]), r(&[2, 4, 2])]),
        PrimitiveKind::MatMul => (Primitive::MatMul, vec![r(&[3, 4]), r(&[4, 2])]),
        PrimitiveKind::Add => (Primitive::Add, vec![r(&[3, 4]), r(&[4])]),
        PrimitiveKind::Multiply => (Primitive::Multiply, vec![r(&[3, 4]), r(&[3, 4])]),
        PrimitiveKind::Tanh => (Primitive::Tanh, vec![r(&[3, 4])]),
        PrimitiveKind::Relu => (Primitive::Relu, vec![kink_free_tensor(rng, &[3, 4])]),
        PrimitiveKind::EmbeddingLookup => {
            let indices = (0..6).map(|_| rng.gen_range(0..5)).collect();
            (Primitive::EmbeddingLookup { indices }, vec![random_tensor(rng, &[5, 3])])
        }
        PrimitiveKind::ReduceMean => {
            let axis = [None, Some(0), Some(1)][trial % 3];
            (Primitive::ReduceMean { axis }, vec![r(&[3, 4])])
        }
        PrimitiveKind::ReduceSum => {
            let axis = [None, Some(0), Some(1)][trial % 3];
            (Primitive::ReduceSum { axis }, vec![r(&[3, 4])])
        }
        PrimitiveKind::SoftmaxCrossEntropy => {
            let labels = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let mask = vec![true, true, false, true];
            let logits = random_tensor(rng, &[4, 3]).map(|v| 3.0 * v);
            (Primitive::SoftmaxCrossEntropy { labels, mask }, vec![logits])
        }
        PrimitiveKind::Concat => (Primitive::Concat { axis: 1 }, vec![r(&[3, 2]), r(&[3, 4])]),
        PrimitiveKind::Slice => (Primitive::Slice { axis: 1, start: 1, end: 3 }, vec![r(&[3, 4])]),
        PrimitiveKind::Reshape => (Primitive::Reshape { shape: vec![2, 6] }, vec![r(&[3, 4])]),
        PrimitiveKind::Transpose => (Primitive::Transpose, vec![r(&[2, 3, 4])]),
        PrimitiveKind::Softmax => (Primitive::Softmax, vec![r(&[3, 4])]),
    };
    PrimitiveCase { prim, operands }
}

/// `sum(prim(x) * w)` for a fixed random `w`, so every output element
/// contributes a distinct adjoint.
fn primitive_loss(case: &PrimitiveCase, weights: Option<&Tensor<f64>>, params: &ParameterSet<f64>, tape: &mut Tape<f64>) -> Result<crate::autodiff::Var> {
    let vars = (0..case.operands.len())
        .map(|i| tape.param(&format!("x{i}"), params.require(&format!("x{i}"))?.clone()))
        .collect::<Result<Vec<_>>>()?;
    let y = tape.apply(case.prim.clone(), &vars)?;
    match weights {
        None => Ok(y),
        Some(w) => {
            let w = tape.constant(w.clone());
            let prod = tape.apply(Primitive::Multiply, &[y, w])?;
            tape.apply(Primitive::ReduceSum { axis: None }, &[prod])
        }
    }
}

fn check_primitive(kind: PrimitiveKind, trials: usize, seed: u64) -> Result<CaseResult> {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = StreamId::new(seed, Purpose::Check)
            .task(kind.name())
            .draw(trial as u64)
            .rng();
        let case = primitive_case(kind, trial, &mut rng);
        let mut params = ParameterSet::new();
        for (i, t) in case.operands.iter().enumerate() {
            params.insert(format!("x{i}"), t.clone())?;
        }
        let refs: Vec<&Tensor<f64>> = case.operands.iter().collect();
        let out = crate::autodiff::apply(&case.prim, &refs)?;
        let weights = (!out.is_scalar()).then(|| random_tensor(&mut rng, out.shape()));
        let loss_fn = |p: &ParameterSet<f64>| {
            let mut tape = Tape::new();
            let l = primitive_loss(&case, weights.as_ref(), p, &mut tape)?;
            tape.value(l).item()
        };
        let mut tape = Tape::new();
        let l = primitive_loss(&case, weights.as_ref(), &params, &mut tape)?;
        let analytic = tape.backward(l)?;
        let numeric = finite_difference_gradient(loss_fn, &params, STEP)?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(CaseResult {
        name: format!("primitive {}", kind.name()),
        trials,
        max_error: worst,
    })
}

/// Small setting for the encoder checks.
pub fn check_config(trunk: TrunkKind, bias: bool) -> EncoderConfig {
    EncoderConfig {
        vocab_size: 6,
        embed_dim: 3,
        hidden_dim: 4,
        context_len: 4,
        trunk,
        bias,
    }
}

fn check_encoder(cfg: EncoderConfig, kind: TaskKind, trials: usize, seed: u64) -> Result<CaseResult> {
    let world = build_world(seed, cfg.vocab_size, cfg.context_len)?;
    let spec = TaskSpec::new("t", kind, 3, cfg.vocab_size, None)?;
    let encoder = Encoder::new(cfg, vec![spec.head.clone()])?;
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let stream = StreamId::new(seed, Purpose::Check)
            .task(kind.name())
            .draw(trial as u64);
        let subtask = sample_subtask(&world, &spec, stream.episode(1))?;
        let mut rng = stream.rng();
        // Jitter so zero-initialized biases are exercised away from zero.
        let mut params = ParameterSet::new();
        for (name, t) in encoder.init_parameters::<f64>(seed + trial as u64).iter() {
            let noise = random_tensor(&mut rng, t.shape());
            let data = t.data().iter().zip(noise.data()).map(|(a, b)| a + 0.1 * b).collect();
            params.insert(name, Tensor::from_parts(t.shape().to_vec(), data))?;
        }
        let (_, analytic): (f64, GradientMap<f64>) = encoder.loss_and_grad(&params, &subtask)?;
        let names: Vec<String> = analytic.names().map(str::to_string).collect();
        let numeric = finite_difference_gradient_for(
            |p: &ParameterSet<f64>| encoder.forward_loss(p, &subtask),
            &params,
            STEP,
            &names,
        )?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    let trunk_name = match cfg.trunk {
        TrunkKind::MeanPoolMlp => "mean_pool_mlp",
        TrunkKind::SingleHeadAttention => "single_head_attention",
    };
    let bias = if cfg.bias { "+bias" } else { "" };
    Ok(CaseResult {
        name: format!("encoder {trunk_name}{bias} {}", kind.name()),
        trials,
        max_error: worst,
    })
}

/// Runs every case `trials` times with fresh random points.
pub fn run_gradcheck(trials: usize, seed: u64) -> Result<GradcheckReport> {
    let trials = trials.max(1);
    let mut cases = Vec::new();
    for kind in PrimitiveKind::ALL {
        cases.push(check_primitive(kind, trials, seed)?);
    }
    for trunk in [TrunkKind::MeanPoolMlp, TrunkKind::SingleHeadAttention] {
        for bias in [false, true] {
            for kind in TaskKind::ALL {
                cases.push(check_encoder(check_config(trunk, bias), kind, trials, seed)?);
            }
        }
    }
    Ok(GradcheckReport { cases })
}
