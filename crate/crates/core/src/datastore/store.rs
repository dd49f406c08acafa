use std::cmp::Ordering;
use std::sync::{Arc, Mutex};

use super::{IndexKind, IvfIndex, KnnConfig, Neighbor, NeighborSet, RecordFilter, StoreError};
use crate::textcore::{label_positions, split_symbols, ContextEncoder, ContextVector, Fingerprint, TokenId, Vocabulary};
use crate::treebank::{serialize_api, ApiCall};

/// Squared Euclidean distance, accumulated in f64.
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

pub(crate) fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Keeps the `k` smallest (distance, index) pairs in ascending order.
pub(crate) fn top_k(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_distance_then_index);
        scored.truncate(k);
    }
    scored.sort_by(by_distance_then_index);
    scored
}

/// Frozen (key, value) records plus the fingerprints they were built under.
#[derive(Debug)]
pub struct Datastore {
    pub(crate) dim: usize,
    pub(crate) keys: Vec<f32>,
    pub(crate) values: Vec<TokenId>,
    pub(crate) filter: RecordFilter,
    pub(crate) encoder_fingerprint: Fingerprint,
    pub(crate) vocab_fingerprint: Fingerprint,
    ivf: Mutex<Option<Arc<IvfIndex>>>,
}

impl Clone for Datastore {
    fn clone(&self) -> Self {
        Self::from_parts(
            self.dim,
            self.keys.clone(),
            self.values.clone(),
            self.filter,
            self.encoder_fingerprint,
            self.vocab_fingerprint,
        )
    }
}

impl PartialEq for Datastore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.filter == other.filter
            && self.encoder_fingerprint == other.encoder_fingerprint
            && self.vocab_fingerprint == other.vocab_fingerprint
            && self.values == other.values
            && self.keys.len() == other.keys.len()
            && self.keys.iter().zip(&other.keys).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Datastore {
    pub(crate) fn from_parts(
        dim: usize,
        keys: Vec<f32>,
        values: Vec<TokenId>,
        filter: RecordFilter,
        encoder_fingerprint: Fingerprint,
        vocab_fingerprint: Fingerprint,
    ) -> Self {
        debug_assert_eq!(keys.len(), dim * values.len());
        Self {
            dim,
            keys,
            values,
            filter,
            encoder_fingerprint,
            vocab_fingerprint,
            ivf: Mutex::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn filter(&self) -> RecordFilter {
        self.filter
    }

    pub fn encoder_fingerprint(&self) -> Fingerprint {
        self.encoder_fingerprint
    }

    pub fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    pub fn key(&self, i: usize) -> &[f32] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize) -> TokenId {
        self.values[i]
    }

    pub fn values(&self) -> &[TokenId] {
        &self.values
    }

    pub fn check_vocab(&self, fingerprint: Fingerprint) -> Result<(), StoreError> {
        if fingerprint != self.vocab_fingerprint {
            return Err(StoreError::FingerprintMismatch("vocabulary"));
        }
        Ok(())
    }

    fn check_query(&self, q: &ContextVector) -> Result<(), StoreError> {
        if q.fingerprint() != self.encoder_fingerprint {
            return Err(StoreError::FingerprintMismatch("encoder"));
        }
        if q.dim() != self.dim {
            return Err(StoreError::DimensionMismatch {
                got: q.dim(),
                want: self.dim,
            });
        }
        Ok(())
    }

    pub(crate) fn neighbors_from(&self, picked: Vec<(f64, usize)>) -> NeighborSet {
        NeighborSet {
            entries: picked
                .into_iter()
                .map(|(distance, index)| Neighbor {
                    distance,
                    value: self.values[index],
                    index,
                })
                .collect(),
        }
    }

    /// The `k` records closest to `q` under squared L2.
    pub fn query(&self, q: &ContextVector, cfg: &KnnConfig) -> Result<NeighborSet, StoreError> {
        cfg.validate()?;
        self.check_query(q)?;
        match cfg.index {
            IndexKind::Exact => Ok(self.exact(q.values(), cfg.k)),
            IndexKind::Ivf { n_lists, n_probe } => {
                let index = self.ivf_index(n_lists);
                Ok(index.search(self, q.values(), cfg.k, n_probe))
            }
        }
    }

    fn exact(&self, q: &[f32], k: usize) -> NeighborSet {
        let scored = (0..self.len()).map(|i| (squared_l2(self.key(i), q), i)).collect();
        self.neighbors_from(top_k(scored, k))
    }

    /// Cached IVF index with the given list count.
    pub fn ivf_index(&self, n_lists: usize) -> Arc<IvfIndex> {
        let mut slot = self.ivf.lock().unwrap_or_else(|e| e.into_inner());
        match slot.as_ref() {
            Some(idx) if idx.n_lists() == n_lists.min(self.len()).max(1) => Arc::clone(idx),
            _ => {
                let idx = Arc::new(IvfIndex::build(self, n_lists, 0x5eed));
                *slot = Some(Arc::clone(&idx));
                idx
            }
        }
    }
}

/// Accumulates raw records, e.g. for hand-built stores.
#[derive(Debug)]
pub struct DatastoreBuilder {
    dim: usize,
    keys: Vec<f32>,
    values: Vec<TokenId>,
    filter: RecordFilter,
    encoder_fingerprint: Fingerprint,
    vocab_fingerprint: Fingerprint,
}

impl DatastoreBuilder {
    pub fn new(dim: usize, encoder_fingerprint: Fingerprint, vocab_fingerprint: Fingerprint, filter: RecordFilter) -> Self {
        Self {
            dim,
            keys: Vec::new(),
            values: Vec::new(),
            filter,
            encoder_fingerprint,
            vocab_fingerprint,
        }
    }

    pub fn push(&mut self, key: &ContextVector, value: TokenId) -> Result<(), StoreError> {
        if key.dim() != self.dim {
            return Err(StoreError::EncoderMismatch {
                got: key.dim(),
                want: self.dim,
            });
        }
        if key.fingerprint() != self.encoder_fingerprint {
            return Err(StoreError::FingerprintMismatch("encoder"));
        }
        self.keys.extend_from_slice(key.values());
        self.values.push(value);
        Ok(())
    }

    pub fn finish(self) -> Datastore {
        Datastore::from_parts(
            self.dim,
            self.keys,
            self.values,
            self.filter,
            self.encoder_fingerprint,
            self.vocab_fingerprint,
        )
    }
}

/// One record per admitted target position of every gold API: the key
/// encodes (utterance, API tokens before the position), the value is the
/// token at the position.
pub fn build_datastore<S: AsRef<str>>(
    examples: &[(Vec<S>, ApiCall)],
    encoder: &dyn ContextEncoder,
    vocab: &Vocabulary,
    filter: RecordFilter,
) -> Result<Datastore, StoreError> {
    if examples.is_empty() {
        return Err(StoreError::EmptyInput);
    }
    let mut builder = DatastoreBuilder::new(encoder.dim(), encoder.fingerprint(), vocab.fingerprint(), filter);
    for (utterance, gold) in examples {
        gold.validate().map_err(|e| StoreError::InvalidGold(e.to_string()))?;
        let utterance: Vec<&str> = utterance.iter().map(AsRef::as_ref).collect();
        let serialized = serialize_api(gold);
        let tokens = split_symbols(&serialized);
        let positions = match filter {
            RecordFilter::LabelsOnly => label_positions(&tokens),
            RecordFilter::AllTokens => (0..tokens.len()).collect(),
        };
        for j in positions {
            let value = vocab
                .get(tokens[j])
                .ok_or_else(|| StoreError::UnknownToken(tokens[j].to_string()))?;
            let key = encoder.encode_context(&utterance, &tokens[..j])?;
            builder.push(&key, value)?;
        }
    }
    Ok(builder.finish())
}
