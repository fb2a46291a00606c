use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamId;

use super::spec::{Provenance, Subtask, TaskKind, TaskSpec};
use super::world::World;

pub const MASK_RATIO: f64 = 0.15;

/// Positions masked per sequence by the masked-token task.
pub fn masked_per_sequence(context_len: usize) -> usize {
    ((MASK_RATIO * context_len as f64).round() as usize).clamp(1, context_len)
}

/// Bigram-presence positives in a batch of `batch_size`: the world's
/// occurrence probability times the batch size, rounded.
pub fn positives_per_batch(world: &World, batch_size: usize) -> usize {
    ((world.bigram_probability * batch_size as f64).round() as usize).min(batch_size)
}

/// Draws one batch of `spec` from `world`. A pure function of its
/// arguments: the same stream always yields the same batch.
pub fn sample_subtask(world: &World, spec: &TaskSpec, stream: StreamId) -> Result<Subtask> {
    let mut rng = stream.rng();
    let (b, l) = (spec.batch_size, world.context_len);
    let mask_token = world.vocab_size;
    let mut inputs = Vec::with_capacity(b * l);
    let mut labels;
    let mut mask;

    match spec.kind {
        TaskKind::MaskedToken => {
            let k = masked_per_sequence(l);
            labels = vec![0; b * l];
            mask = vec![false; b * l];
            for row in 0..b {
                let mut seq = world.sample_sequence(&mut rng);
                for pos in index::sample(&mut rng, l, k) {
                    labels[row * l + pos] = seq[pos];
                    mask[row * l + pos] = true;
                    seq[pos] = mask_token;
                }
                inputs.extend(seq);
            }
        }
        TaskKind::NextToken => {
            labels = vec![0; b * l];
            mask = vec![false; b * l];
            for row in 0..b {
                let seq = world.sample_sequence(&mut rng);
                for t in 0..l - 1 {
                    labels[row * l + t] = seq[t + 1];
                    mask[row * l + t] = true;
                }
                inputs.extend(seq);
            }
        }
        TaskKind::ShuffleDetect => {
            let shuffled: Vec<usize> = index::sample(&mut rng, b, b / 2).into_vec();
            labels = vec![0; b];
            mask = vec![true; b];
            for row in 0..b {
                let seq = world.sample_sequence(&mut rng);
                if shuffled.contains(&row) {
                    let perm = derangement(l, &mut rng);
                    inputs.extend(perm.iter().map(|&p| seq[p]));
                    labels[row] = 1;
                } else {
                    inputs.extend(seq);
                }
            }
        }
        TaskKind::Noise => {
            let classes = spec.head.output_classes;
            labels = Vec::with_capacity(b);
            mask = vec![true; b];
            for _ in 0..b {
                inputs.extend(world.sample_sequence(&mut rng));
                labels.push(rng.gen_range(0..classes));
            }
        }
        TaskKind::BigramPresence => {
            // Stratified: exactly positives_per_batch sequences contain the
            // bigram, each class drawn from its conditional distribution.
            let mut want = [b - positives_per_batch(world, b), positives_per_batch(world, b)];
            labels = Vec::with_capacity(b);
            mask = vec![true; b];
            while labels.len() < b {
                let seq = world.sample_sequence(&mut rng);
                let label = usize::from(world.contains_bigram(&seq));
                if want[label] > 0 {
                    want[label] -= 1;
                    labels.push(label);
                    inputs.extend(seq);
                }
            }
        }
    }

    Ok(Subtask {
        task_id: spec.id.clone(),
        batch_size: b,
        context_len: l,
        inputs,
        labels,
        mask,
        provenance: Provenance {
            episode: stream.episode,
            draw: stream.draw,
        },
    })
}

/// Uniform permutation of `0..n` with no fixed point, by rejection.
fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(n >= 2);
    loop {
        let perm = index::sample(rng, n, n).into_vec();
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Bayes-optimal loss of the noise task: the label entropy `ln(classes)`.
pub fn irreducible_loss(spec: &TaskSpec) -> Result<f64> {
    if spec.kind != TaskKind::Noise {
        return Err(Error::Scheduler(format!(
            "irreducible loss is closed-form only for noise tasks, `{}` is {}",
            spec.id, spec.kind
        )));
    }
    Ok((spec.head.output_classes as f64).ln())
}
