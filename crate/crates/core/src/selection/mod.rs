//! Exemplar selection: random draws, embedding similarity, and a
//! supervised paraphrase ranker.

mod pairs;

pub use pairs::{build_pair_dataset, pair_features, write_pairs_tsv, LabeledPair, PairClassifier, N_FEATURES};

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textcore::{cosine, ContextEncoder, ContextVector, Fingerprint, TextError};
use crate::treebank::ApiCall;

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("asked for {m} exemplars from a pool of {pool}")]
    PoolTooSmall { m: usize, pool: usize },
    #[error("exemplar count must be at least 1")]
    ZeroExemplars,
    #[error("pool has a single intent, so no negative pairs exist")]
    DegeneratePool,
    #[error("training pairs contain only one label")]
    SingleClassInput,
    #[error("paraphrase selection needs a trained classifier")]
    MissingClassifier,
    #[error("embedding has {got} dimensions, pool has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub utterance: Vec<String>,
    pub gold: ApiCall,
    /// Root intent of `gold`.
    pub intent: String,
}

/// Labeled examples plus one sentence embedding per item.
#[derive(Debug, Clone)]
pub struct DemoPool {
    items: Vec<PoolItem>,
    embeddings: Vec<ContextVector>,
    encoder_fingerprint: Fingerprint,
}

impl DemoPool {
    pub fn new(examples: Vec<(Vec<String>, ApiCall)>, encoder: &dyn ContextEncoder) -> Result<Self, SelectionError> {
        let mut items = Vec::with_capacity(examples.len());
        let mut embeddings = Vec::with_capacity(examples.len());
        for (utterance, gold) in examples {
            let words: Vec<&str> = utterance.iter().map(String::as_str).collect();
            embeddings.push(encoder.embed_sentence(&words)?);
            let intent = gold.name.clone();
            items.push(PoolItem { utterance, gold, intent });
        }
        Ok(Self {
            items,
            embeddings,
            encoder_fingerprint: encoder.fingerprint(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[PoolItem] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &PoolItem {
        &self.items[i]
    }

    pub fn embedding(&self, i: usize) -> &ContextVector {
        &self.embeddings[i]
    }

    pub fn encoder_fingerprint(&self) -> Fingerprint {
        self.encoder_fingerprint
    }

    /// Distinct root intents in first-seen order.
    pub fn intents(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for it in &self.items {
            if !seen.contains(&it.intent.as_str()) {
                seen.push(&it.intent);
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    Random,
    #[default]
    Similarity,
    Paraphrase,
}

/// Where the best-ranked exemplar goes in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PromptOrder {
    #[default]
    BestLast,
    BestFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub m: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub order: PromptOrder,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            m: 10,
            seed: 0,
            strategy: Strategy::Similarity,
            order: PromptOrder::BestLast,
        }
    }
}

impl SelectionConfig {
    pub fn check(&self, pool: usize) -> Result<(), SelectionError> {
        if self.m == 0 {
            return Err(SelectionError::ZeroExemplars);
        }
        if self.m > pool {
            return Err(SelectionError::PoolTooSmall { m: self.m, pool });
        }
        Ok(())
    }
}

/// `m` distinct pool indices drawn uniformly without replacement, in draw order.
pub fn select_random(pool: &DemoPool, cfg: &SelectionConfig) -> Result<Vec<usize>, SelectionError> {
    cfg.check(pool.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), cfg.m).into_vec())
}

fn descending(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `m` of `scores`, best first, ties by pool index.
pub fn top_m(scores: Vec<f64>, m: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(descending);
    ranked.truncate(m);
    ranked
}

fn arrange(ranked: Vec<(usize, f64)>, order: PromptOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = ranked.into_iter().map(|(i, _)| i).collect();
    if order == PromptOrder::BestLast {
        idx.reverse();
    }
    idx
}

pub fn similarity_scores(pool: &DemoPool, target: &ContextVector) -> Result<Vec<f64>, SelectionError> {
    let want = pool.embeddings.first().map_or(target.dim(), ContextVector::dim);
    if target.dim() != want {
        return Err(SelectionError::DimensionMismatch {
            got: target.dim(),
            want,
        });
    }
    Ok(pool.embeddings.iter().map(|e| cosine(target.values(), e.values())).collect())
}

/// Top `m` by cosine to the target embedding, laid out per `cfg.order`.
pub fn select_by_similarity(
    pool: &DemoPool,
    target: &[&str],
    encoder: &dyn ContextEncoder,
    cfg: &SelectionConfig,
) -> Result<Vec<usize>, SelectionError> {
    cfg.check(pool.len())?;
    let q = encoder.embed_sentence(target)?;
    Ok(arrange(top_m(similarity_scores(pool, &q)?, cfg.m), cfg.order))
}

/// Top `m` by classifier probability that the item paraphrases the target.
pub fn select_by_paraphrase(
    pool: &DemoPool,
    target: &[&str],
    encoder: &dyn ContextEncoder,
    classifier: &PairClassifier,
    cfg: &SelectionConfig,
) -> Result<Vec<usize>, SelectionError> {
    cfg.check(pool.len())?;
    let q = encoder.embed_sentence(target)?;
    let scores = pool
        .items
        .iter()
        .zip(&pool.embeddings)
        .map(|(item, emb)| classifier.score(&pair_features(target, &q, &item.utterance, emb)))
        .collect();
    Ok(arrange(top_m(scores, cfg.m), cfg.order))
}

/// Dispatches on `cfg.strategy`.
pub fn select(
    pool: &DemoPool,
    target: &[&str],
    encoder: &dyn ContextEncoder,
    classifier: Option<&PairClassifier>,
    cfg: &SelectionConfig,
) -> Result<Vec<usize>, SelectionError> {
    match (cfg.strategy, classifier) {
        (Strategy::Random, _) => select_random(pool, cfg),
        (Strategy::Similarity, _) => select_by_similarity(pool, target, encoder, cfg),
        (Strategy::Paraphrase, Some(c)) => select_by_paraphrase(pool, target, encoder, c, cfg),
        (Strategy::Paraphrase, None) => Err(SelectionError::MissingClassifier),
    }
}
