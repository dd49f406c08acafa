use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DemoPool, SelectionError};
use crate::textcore::ContextVector;

pub const N_FEATURES: usize = 4;
const MAX_EPOCHS: usize = 500;
const LOSS_TOLERANCE: f64 = 1e-6;
const LEARNING_RATE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub a: usize,
    pub b: usize,
    /// Both items share a root intent.
    pub label: bool,
}

fn word_set<S: AsRef<str>>(words: &[S]) -> HashSet<String> {
    words.iter().map(|w| w.as_ref().to_lowercase()).collect()
}

fn bigram_set<S: AsRef<str>>(words: &[S]) -> HashSet<(String, String)> {
    words
        .windows(2)
        .map(|w| (w[0].as_ref().to_lowercase(), w[1].as_ref().to_lowercase()))
        .collect()
}

fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn dice<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / total as f64
}

/// Symmetric pair features: embedding cosine, word Jaccard, word-bigram
/// Dice overlap, and length ratio.
pub fn pair_features<A: AsRef<str>, B: AsRef<str>>(
    a: &[A],
    a_emb: &ContextVector,
    b: &[B],
    b_emb: &ContextVector,
) -> [f64; N_FEATURES] {
    let (la, lb) = (a.len() as f64, b.len() as f64);
    let ratio = if la.max(lb) == 0.0 { 0.0 } else { la.min(lb) / la.max(lb) };
    [
        a_emb.cosine(b_emb),
        jaccard(&word_set(a), &word_set(b)),
        dice(&bigram_set(a), &bigram_set(b)),
        ratio,
    ]
}

/// For every anchor with at least one same-intent partner: one positive
/// pair and up to `neg_ratio` negatives, all drawn without replacement.
pub fn build_pair_dataset(pool: &DemoPool, neg_ratio: usize, seed: u64) -> Result<Vec<LabeledPair>, SelectionError> {
    if pool.intents().len() < 2 {
        return Err(SelectionError::DegeneratePool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for a in 0..pool.len() {
        let intent = &pool.item(a).intent;
        let (same, other): (Vec<usize>, Vec<usize>) =
            (0..pool.len()).filter(|&j| j != a).partition(|&j| &pool.item(j).intent == intent);
        if same.is_empty() {
            continue;
        }
        let b = same[rng.random_range(0..same.len())];
        out.push(LabeledPair { a, b, label: true });
        let take = neg_ratio.min(other.len());
        for i in rand::seq::index::sample(&mut rng, other.len(), take) {
            out.push(LabeledPair {
                a,
                b: other[i],
                label: false,
            });
        }
    }
    Ok(out)
}

pub fn write_pairs_tsv(pool: &DemoPool, pairs: &[LabeledPair], mut out: impl Write) -> Result<(), SelectionError> {
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}",
            pool.item(p.a).utterance.join(" "),
            pool.item(p.b).utterance.join(" "),
            if p.label { "True" } else { "False" }
        )?;
    }
    Ok(())
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic regression over [`pair_features`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
    pub epochs: usize,
    pub final_loss: f64,
}

impl PairClassifier {
    pub fn from_weights(weights: [f64; N_FEATURES], bias: f64) -> Self {
        Self {
            weights,
            bias,
            epochs: 0,
            final_loss: f64::NAN,
        }
    }

    /// Probability that the pair shares an intent.
    pub fn score(&self, features: &[f64; N_FEATURES]) -> f64 {
        let z = self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        sigmoid(z)
    }

    pub fn accuracy(&self, samples: &[([f64; N_FEATURES], bool)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let right = samples.iter().filter(|(x, y)| (self.score(x) >= 0.5) == *y).count();
        right as f64 / samples.len() as f64
    }

    /// Full-batch gradient descent on mean log loss.
    pub fn train(samples: &[([f64; N_FEATURES], bool)]) -> Result<Self, SelectionError> {
        let positives = samples.iter().filter(|(_, y)| *y).count();
        if positives == 0 || positives == samples.len() {
            return Err(SelectionError::SingleClassInput);
        }
        let n = samples.len() as f64;
        let mut model = Self::from_weights([0.0; N_FEATURES], 0.0);
        let mut prev = f64::INFINITY;
        for epoch in 1..=MAX_EPOCHS {
            let mut grad_w = [0.0; N_FEATURES];
            let mut grad_b = 0.0;
            let mut loss = 0.0;
            for (x, y) in samples {
                let p = model.score(x);
                let t = if *y { 1.0 } else { 0.0 };
                loss -= if *y { p.max(1e-15).ln() } else { (1.0 - p).max(1e-15).ln() };
                let r = p - t;
                for (g, xi) in grad_w.iter_mut().zip(x) {
                    *g += r * xi;
                }
                grad_b += r;
            }
            loss /= n;
            for (w, g) in model.weights.iter_mut().zip(grad_w) {
                *w -= LEARNING_RATE * g / n;
            }
            model.bias -= LEARNING_RATE * grad_b / n;
            model.epochs = epoch;
            model.final_loss = loss;
            if (prev - loss).abs() < LOSS_TOLERANCE {
                break;
            }
            prev = loss;
        }
        Ok(model)
    }

    /// Trains on pool pairs built by [`build_pair_dataset`].
    pub fn train_on_pool(pool: &DemoPool, pairs: &[LabeledPair]) -> Result<Self, SelectionError> {
        let samples: Vec<_> = pairs
            .iter()
            .map(|p| {
                let (a, b) = (pool.item(p.a), pool.item(p.b));
                (
                    pair_features(&a.utterance, pool.embedding(p.a), &b.utterance, pool.embedding(p.b)),
                    p.label,
                )
            })
            .collect();
        Self::train(&samples)
    }
}
