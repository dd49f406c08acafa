use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Spis { n: usize },
    RandomPool { size: usize },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

/// Record ids on each side of a split, enough to replay it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub pool: Vec<usize>,
    pub remainder: Vec<usize>,
}

/// Label counts seen by one admitted example just before admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    pub id: usize,
    pub counts_before: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpisSplit {
    pub manifest: SplitManifest,
    pub audit: Vec<Admission>,
}

fn distinct_labels(corpus: &Corpus, id: usize) -> BTreeSet<String> {
    corpus.records[id].tree.labels().into_iter().collect()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Greedy pass over a seeded shuffle: admit an example iff one of its
/// intent/slot labels is still below `n`, then count all of its labels.
pub fn make_spis_split(corpus: &Corpus, n: usize, seed: u64) -> Result<SpisSplit, HarnessError> {
    if n == 0 {
        return Err(HarnessError::BadSplit("SPIS quota must be at least 1".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut pool = Vec::new();
    let mut remainder = Vec::new();
    let mut audit = Vec::new();
    for id in shuffled(corpus.len(), seed) {
        let labels = distinct_labels(corpus, id);
        if labels.iter().any(|l| counts.get(l).copied().unwrap_or(0) < n) {
            let counts_before = labels
                .iter()
                .map(|l| (l.clone(), counts.get(l).copied().unwrap_or(0)))
                .collect();
            for l in labels {
                *counts.entry(l).or_insert(0) += 1;
            }
            audit.push(Admission { id, counts_before });
            pool.push(id);
        } else {
            remainder.push(id);
        }
    }
    Ok(SpisSplit {
        manifest: SplitManifest {
            spec: SplitSpec {
                kind: SplitKind::Spis { n },
                seed,
            },
            pool,
            remainder,
        },
        audit,
    })
}

/// Recounts labels along the manifest and checks every admission. Returns
/// the ids whose admission cannot be justified.
pub fn replay_spis(corpus: &Corpus, manifest: &SplitManifest) -> Vec<usize> {
    let SplitKind::Spis { n } = manifest.spec.kind else {
        return Vec::new();
    };
    let admitted: BTreeSet<usize> = manifest.pool.iter().copied().collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut bad = Vec::new();
    for id in shuffled(corpus.len(), manifest.spec.seed) {
        let labels = distinct_labels(corpus, id);
        let open = labels.iter().any(|l| counts.get(l).copied().unwrap_or(0) < n);
        if admitted.contains(&id) {
            if !open {
                bad.push(id);
            }
            for l in labels {
                *counts.entry(l).or_insert(0) += 1;
            }
        } else if open {
            bad.push(id);
        }
    }
    bad
}

/// `size` records drawn uniformly without replacement.
pub fn sample_pool(corpus: &Corpus, size: usize, seed: u64) -> Result<SplitManifest, HarnessError> {
    if size > corpus.len() {
        return Err(HarnessError::PoolTooLarge {
            size,
            corpus: corpus.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = rand::seq::index::sample(&mut rng, corpus.len(), size).into_vec();
    let taken: BTreeSet<usize> = pool.iter().copied().collect();
    Ok(SplitManifest {
        spec: SplitSpec {
            kind: SplitKind::RandomPool { size },
            seed,
        },
        pool,
        remainder: (0..corpus.len()).filter(|i| !taken.contains(i)).collect(),
    })
}

/// Seeded split of `ids` into (validation, test) with `fraction` of them,
/// rounded up, in validation.
pub fn validation_split(ids: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ids.len() as f64 * fraction).ceil() as usize).min(ids.len());
    let test = order.split_off(n_val);
    (order, test)
}
