//! Corpora, splits, the synthetic grammar, experiment orchestration and
//! reporting.

mod config;
mod corpus;
mod experiment;
mod report;
mod split;
pub mod synthetic;

pub use config::Config;
pub use corpus::{load_topv2, read_topv2, Corpus, Provenance, Record};
pub use experiment::{
    build_vocabulary, documentation_stub, lm_corpus, run_experiment, ExperimentSpec, Grid, GridPoint, Pipeline,
    PipelineConfig,
};
pub use report::{depth_breakdown, exact_match_rate, per_domain, DepthRow, ExampleResult, ExperimentReport, GridScore};
pub use split::{
    make_spis_split, replay_spis, sample_pool, validation_split, Admission, SpisSplit, SplitKind, SplitManifest,
    SplitSpec,
};
pub use synthetic::gen_synthetic;

use crate::datastore::StoreError;
use crate::decode::DecodeError;
use crate::lm::LmError;
use crate::selection::SelectionError;
use crate::textcore::TextError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("config line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
    #[error("pool of {size} requested from a corpus of {corpus}")]
    PoolTooLarge { size: usize, corpus: usize },
    #[error("bad split: {0}")]
    BadSplit(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
