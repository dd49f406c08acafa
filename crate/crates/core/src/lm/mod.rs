//! Language-model interface and the reference n-gram model.

mod dist;
mod io;
mod ngram;

pub use dist::{DistError, TokenDistribution, SUM_TOLERANCE};
pub use ngram::{context_hash, sequence, NGramConfig, NGramLm, NGramState};

use crate::textcore::{Fingerprint, TokenId};

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("unsupported model file version {0}")]
    VersionMismatch(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prompt contents as token ids in a (possibly overlay-extended) token space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPrompt {
    /// Each exemplar framed as in training: `BOS utterance SEP api EOS`.
    pub exemplars: Vec<Vec<TokenId>>,
    pub target: Vec<TokenId>,
    pub space_len: usize,
    pub vocab_fingerprint: Fingerprint,
}

/// Produces `p_lm(y_t | prompt, utterance, y_<t)` over the whole token space.
pub trait LanguageModel: Send + Sync {
    /// Conditioning derived once per prompt.
    type State: Send + Sync;

    fn vocab_fingerprint(&self) -> Fingerprint;

    fn prepare(&self, prompt: &EncodedPrompt) -> Result<Self::State, LmError>;

    fn next_dist(&self, state: &Self::State, prefix: &[TokenId]) -> TokenDistribution;
}
