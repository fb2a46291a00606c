//! Helpers shared by the integration tests: a loop-based reference forward
//! pass and small scenario builders.

#![allow(dead_code)]

use meta_pretrain::harness::RunConfig;
use meta_pretrain::model::{head_bias_name, head_weight_name, TargetShape, TaskHeadSpec};
use meta_pretrain::model::{EMBED, HIDDEN_BIAS, HIDDEN_WEIGHT, KEY, POSITION, QUERY, VALUE};
use meta_pretrain::tasks::Subtask;
use meta_pretrain::{EncoderConfig, Mode, ParameterSet, Policy, TrunkKind};

fn at(p: &ParameterSet, name: &str, i: usize, j: usize) -> f64 {
    let t = p.get(name).unwrap_or_else(|| panic!("missing {name}"));
    t.data()[i * t.shape()[1] + j]
}

fn bias(p: &ParameterSet, name: &str, j: usize) -> f64 {
    p.get(name).map_or(0.0, |t| t.data()[j])
}

fn matvec(p: &ParameterSet, name: &str, x: &[f64]) -> Vec<f64> {
    let cols = p.get(name).unwrap().shape()[1];
    (0..cols)
        .map(|j| x.iter().enumerate().map(|(i, &v)| v * at(p, name, i, j)).sum())
        .collect()
}

/// Hidden state of every position of one sequence, `[context][hidden]`.
fn hidden_states(cfg: &EncoderConfig, p: &ParameterSet, tokens: &[usize]) -> Vec<Vec<f64>> {
    let (l, e) = (cfg.context_len, cfg.embed_dim);
    let mut x: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&tok| (0..e).map(|d| at(p, EMBED, tok, d)).collect())
        .collect();
    let features: Vec<Vec<f64>> = match cfg.trunk {
        TrunkKind::MeanPoolMlp => (0..l)
            .map(|t| {
                let mut z = x[t].clone();
                if t == 0 {
                    z.extend(std::iter::repeat_n(0.0, e));
                } else {
                    z.extend(&x[t - 1]);
                }
                z.extend((0..e).map(|d| (0..=t).map(|s| x[s][d]).sum::<f64>() / (t + 1) as f64));
                z
            })
            .collect(),
        TrunkKind::SingleHeadAttention => {
            for (t, row) in x.iter_mut().enumerate() {
                for (d, v) in row.iter_mut().enumerate() {
                    *v += at(p, POSITION, t, d);
                }
            }
            let q: Vec<Vec<f64>> = x.iter().map(|r| matvec(p, QUERY, r)).collect();
            let k: Vec<Vec<f64>> = x.iter().map(|r| matvec(p, KEY, r)).collect();
            let v: Vec<Vec<f64>> = x.iter().map(|r| matvec(p, VALUE, r)).collect();
            (0..l)
                .map(|t| {
                    let scores: Vec<f64> = (0..=t)
                        .map(|s| q[t].iter().zip(&k[s]).map(|(a, b)| a * b).sum::<f64>() / (e as f64).sqrt())
                        .collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let total: f64 = w.iter().sum();
                    let mut z = x[t].clone();
                    z.extend((0..e).map(|d| (0..=t).map(|s| w[s] / total * v[s][d]).sum::<f64>()));
                    z
                })
                .collect()
        }
    };
    features
        .iter()
        .map(|z| {
            matvec(p, HIDDEN_WEIGHT, z)
                .into_iter()
                .enumerate()
                .map(|(j, a)| (a + bias(p, HIDDEN_BIAS, j)).tanh())
                .collect()
        })
        .collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Mean cross-entropy of `s`, computed with plain loops and no tape.
pub fn reference_loss(cfg: &EncoderConfig, head: &TaskHeadSpec, p: &ParameterSet, s: &Subtask) -> f64 {
    let l = cfg.context_len;
    let w = head_weight_name(&head.task_id);
    let b = head_bias_name(&head.task_id);
    let logits = |h: &[f64]| -> Vec<f64> {
        matvec(p, &w, h)
            .into_iter()
            .enumerate()
            .map(|(c, z)| z + bias(p, &b, c))
            .collect()
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for row in 0..s.batch_size {
        let hs = hidden_states(cfg, p, &s.inputs[row * l..(row + 1) * l]);
        match head.target_shape {
            TargetShape::PerToken => {
                for t in 0..l {
                    if s.mask[row * l + t] {
                        total += cross_entropy(&logits(&hs[t]), s.labels[row * l + t]);
                        count += 1;
                    }
                }
            }
            TargetShape::PerSequence => {
                if s.mask[row] {
                    let pooled: Vec<f64> = (0..cfg.hidden_dim)
                        .map(|j| hs.iter().map(|h| h[j]).sum::<f64>() / l as f64)
                        .collect();
                    total += cross_entropy(&logits(&pooled), s.labels[row]);
                    count += 1;
                }
            }
        }
    }
    total / count as f64
}

/// Bigram, masked-token and noise sources scored against the bigram task.
pub fn noise_scenario(seed: u64, episodes: u64, policy: Policy) -> RunConfig {
    RunConfig {
        seed,
        episodes,
        policy,
        world_seed: Some(seed),
        ..RunConfig::default()
    }
}

/// The same tasks with every source also a target.
pub fn agnostic_scenario(seed: u64, episodes: u64) -> RunConfig {
    let base = noise_scenario(seed, episodes, Policy::Meta);
    RunConfig {
        mode: Mode::DownstreamAgnostic,
        targets: base.sources.clone(),
        ..base
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
