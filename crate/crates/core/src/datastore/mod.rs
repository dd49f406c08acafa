//! Token-level retrieval datastore: keys are context vectors of
//! (utterance, API prefix), values are the next API token.

mod io;
mod ivf;
mod knn;
mod store;

pub use ivf::IvfIndex;
pub use knn::knn_distribution;
pub use store::{build_datastore, squared_l2, Datastore, DatastoreBuilder};

use serde::{Deserialize, Serialize};

use crate::textcore::{TextError, TokenId};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no examples to build from")]
    EmptyInput,
    #[error("encoder produced {got} dimensions, expected {want}")]
    EncoderMismatch { got: usize, want: usize },
    #[error("query has {got} dimensions, store has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("{0} fingerprint does not match the store")]
    FingerprintMismatch(&'static str),
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid gold API: {0}")]
    InvalidGold(String),
    #[error("neighbor set is empty")]
    EmptyNeighborSet,
    #[error("bad kNN config: {0}")]
    BadConfig(String),
    #[error("corrupt store file: {0}")]
    CorruptStore(String),
    #[error("unsupported store version {0}")]
    VersionMismatch(u32),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which target positions become records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RecordFilter {
    /// Intent and slot names only.
    #[default]
    LabelsOnly,
    AllTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IndexKind {
    #[default]
    Exact,
    Ivf {
        n_lists: usize,
        n_probe: usize,
    },
}

impl IndexKind {
    /// `n_lists = ceil(sqrt(N))`, `n_probe = max(1, n_lists / 4)`.
    pub fn default_ivf(n: usize) -> IndexKind {
        let n_lists = ((n as f64).sqrt().ceil() as usize).max(1);
        IndexKind::Ivf {
            n_lists,
            n_probe: (n_lists / 4).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub temperature: f64,
    pub index: IndexKind,
}

impl KnnConfig {
    pub fn new(k: usize, temperature: f64) -> Self {
        Self {
            k,
            temperature,
            index: IndexKind::Exact,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.k == 0 {
            return Err(StoreError::BadConfig("k must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(StoreError::BadConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if let IndexKind::Ivf { n_lists, n_probe } = self.index {
            if n_lists == 0 || n_probe == 0 || n_probe > n_lists {
                return Err(StoreError::BadConfig(format!("n_probe {n_probe} / n_lists {n_lists}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: f64,
    pub value: TokenId,
    /// Record index in the store.
    pub index: usize,
}

/// Up to k neighbors, ascending by distance, ties by record index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `k` entries; exact results for a smaller k are a prefix.
    pub fn truncated(&self, k: usize) -> NeighborSet {
        NeighborSet {
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
        }
    }
}
