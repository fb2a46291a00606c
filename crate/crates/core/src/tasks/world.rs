use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamId};

const MAX_ATTEMPTS: u64 = 100;
const CANDIDATES: usize = 8;

/// A first-order Markov source over `vocab_size` content tokens.
///
/// Sequences start from the stationary distribution, so every position is
/// identically distributed. One ordered token pair is designated; the
/// bigram-presence task asks whether it occurs contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub vocab_size: usize,
    pub context_len: usize,
    pub seed: u64,
    /// Row-major `vocab x vocab`; row `a` is `P(next | a)`.
    pub transitions: Vec<f64>,
    pub initial: Vec<f64>,
    pub designated_bigram: (usize, usize),
    /// Probability that a sequence of `context_len` tokens contains the bigram.
    pub bigram_probability: f64,
}

impl World {
    pub fn row(&self, from: usize) -> &[f64] {
        &self.transitions[from * self.vocab_size..(from + 1) * self.vocab_size]
    }

    /// Draws one sequence of `context_len` tokens.
    pub fn sample_sequence(&self, rng: &mut impl Rng) -> Vec<usize> {
        let mut seq = Vec::with_capacity(self.context_len);
        let mut tok = categorical(&self.initial, rng);
        seq.push(tok);
        for _ in 1..self.context_len {
            tok = categorical(self.row(tok), rng);
            seq.push(tok);
        }
        seq
    }

    pub fn contains_bigram(&self, seq: &[usize]) -> bool {
        let (a, b) = self.designated_bigram;
        seq.windows(2).any(|w| w[0] == a && w[1] == b)
    }
}

fn categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Builds a seeded world: exponential draws normalised per row, initial
/// distribution set to the stationary one, and a designated bigram whose
/// per-sequence occurrence probability lies in (0.05, 0.95), preferring
/// probabilities near one half.
pub fn build_world(seed: u64, vocab_size: usize, context_len: usize) -> Result<World> {
    if vocab_size < 4 {
        return Err(Error::config("vocab_size", "must be at least 4"));
    }
    if context_len < 2 {
        return Err(Error::config("context_len", "must be at least 2"));
    }
    let mut last = f64::NAN;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = StreamId::new(seed, Purpose::World).draw(attempt).rng();
        let mut transitions = Vec::with_capacity(vocab_size * vocab_size);
        for _ in 0..vocab_size {
            let row: Vec<f64> = (0..vocab_size)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = row.iter().sum();
            transitions.extend(row.into_iter().map(|x| x / total));
        }
        let initial = stationary(&transitions, vocab_size);
        // A few first tokens, each paired with its likeliest successor; the
        // pair closest to even odds gives the most balanced labels.
        let mut best: Option<((usize, usize), f64)> = None;
        for _ in 0..CANDIDATES.min(vocab_size) {
            let a = rng.gen_range(0..vocab_size);
            let row = &transitions[a * vocab_size..(a + 1) * vocab_size];
            let b = (0..vocab_size)
                .filter(|&b| b != a)
                .max_by(|&x, &y| row[x].total_cmp(&row[y]))
                .expect("vocab has at least two tokens");
            let p = occurrence_probability(&transitions, &initial, vocab_size, context_len, (a, b));
            if best.is_none_or(|(_, q)| (p - 0.5).abs() < (q - 0.5).abs()) {
                best = Some(((a, b), p));
            }
        }
        let ((a, b), p) = best.expect("at least one candidate");
        last = p;
        if p > 0.05 && p < 0.95 {
            return Ok(World {
                vocab_size,
                context_len,
                seed,
                transitions,
                initial,
                designated_bigram: (a, b),
                bigram_probability: p,
            });
        }
    }
    Err(Error::World(format!(
        "no designated bigram with occurrence probability in (0.05, 0.95) after {MAX_ATTEMPTS} draws \
         (last {last:.4}, vocab {vocab_size}, context {context_len})"
    )))
}

/// Left eigenvector of the transition matrix by power iteration.
fn stationary(transitions: &[f64], v: usize) -> Vec<f64> {
    let mut pi = vec![1.0 / v as f64; v];
    for _ in 0..100_000 {
        let mut next = vec![0.0; v];
        for (from, &mass) in pi.iter().enumerate() {
            for (to, n) in next.iter_mut().enumerate() {
                *n += mass * transitions[from * v + to];
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

/// Exact probability that the bigram occurs somewhere in a chain of
/// `len` tokens, tracking the mass that has not yet seen it.
fn occurrence_probability(
    transitions: &[f64],
    initial: &[f64],
    v: usize,
    len: usize,
    (a, b): (usize, usize),
) -> f64 {
    let mut unseen = initial.to_vec();
    for _ in 1..len {
        let mut next = vec![0.0; v];
        for (from, &mass) in unseen.iter().enumerate() {
            for (to, n) in next.iter_mut().enumerate() {
                if from == a && to == b {
                    continue;
                }
                *n += mass * transitions[from * v + to];
            }
        }
        unseen = next;
    }
    1.0 - unseen.iter().sum::<f64>()
}
