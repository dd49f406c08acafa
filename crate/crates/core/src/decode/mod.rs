//! Prompt assembly and interpolated greedy decoding.

mod session;
mod trace;

pub use session::{decode_greedy, step_distribution, DecodeOutput, Session, Step};
pub use trace::{DecodeTrace, ScoredToken, StepRecord, StopReason};

use serde::{Deserialize, Serialize};

use crate::datastore::{Datastore, KnnConfig, StoreError};
use crate::lm::{sequence, DistError, EncodedPrompt, LmError, TokenDistribution};
use crate::textcore::{split_symbols, ContextEncoder, TextError, TokenId, TokenSpace, EOS, RESERVED, SEP};
use crate::treebank::{parse_api, serialize_api};

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("exemplar {index} is malformed: {reason}")]
    MalformedExemplar { index: usize, reason: String },
    #[error("target utterance is empty")]
    EmptyTarget,
    #[error("bad decoder config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub utterance: Vec<String>,
    /// Serialized API, normalized to single-space token form.
    pub api: String,
}

/// Documentation, then exemplars, then the target utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub documentation: Option<String>,
    pub exemplars: Vec<Exemplar>,
    pub target: Vec<String>,
}

pub fn build_prompt<U: AsRef<str>, A: AsRef<str>, T: AsRef<str>>(
    documentation: Option<&str>,
    exemplars: &[(Vec<U>, A)],
    target: &[T],
) -> Result<Prompt, DecodeError> {
    if target.is_empty() {
        return Err(DecodeError::EmptyTarget);
    }
    let exemplars = exemplars
        .iter()
        .enumerate()
        .map(|(index, (u, api))| {
            let parsed = parse_api(api.as_ref()).map_err(|e| DecodeError::MalformedExemplar {
                index,
                reason: e.to_string(),
            })?;
            if u.is_empty() {
                return Err(DecodeError::MalformedExemplar {
                    index,
                    reason: "empty utterance".into(),
                });
            }
            Ok(Exemplar {
                utterance: u.iter().map(|w| w.as_ref().to_string()).collect(),
                api: serialize_api(&parsed),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Prompt {
        documentation: documentation.map(str::to_string),
        exemplars,
        target: target.iter().map(|w| w.as_ref().to_string()).collect(),
    })
}

impl Prompt {
    /// The full prompt as surface tokens: doc words, each exemplar as
    /// `utterance <sep> api </s>`, then `target <sep>`.
    pub fn tokens(&self) -> Vec<String> {
        let sep = RESERVED[SEP as usize];
        let eos = RESERVED[EOS as usize];
        let mut out: Vec<String> = Vec::new();
        if let Some(doc) = &self.documentation {
            out.extend(doc.split_whitespace().map(str::to_string));
        }
        for ex in &self.exemplars {
            out.extend(ex.utterance.iter().cloned());
            out.push(sep.to_string());
            out.extend(split_symbols(&ex.api).into_iter().map(str::to_string));
            out.push(eos.to_string());
        }
        out.extend(self.target.iter().cloned());
        out.push(sep.to_string());
        out
    }

    pub fn render(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn target_words(&self) -> Vec<&str> {
        self.target.iter().map(String::as_str).collect()
    }

    pub fn token_space<'v>(&self, vocab: &'v crate::textcore::Vocabulary) -> TokenSpace<'v> {
        TokenSpace::new(vocab, &self.target)
    }

    /// Ids in `space`; exemplar words outside it map to UNK.
    pub fn encode(&self, space: &TokenSpace<'_>) -> EncodedPrompt {
        let exemplars = self
            .exemplars
            .iter()
            .map(|ex| {
                let u: Vec<TokenId> = ex.utterance.iter().map(|w| space.id(w)).collect();
                let a: Vec<TokenId> = split_symbols(&ex.api).into_iter().map(|t| space.id(t)).collect();
                sequence(&u, &a)
            })
            .collect();
        EncodedPrompt {
            exemplars,
            target: self.target.iter().map(|w| space.id(w)).collect(),
            space_len: space.len(),
            vocab_fingerprint: space.vocab().fingerprint(),
        }
    }
}

/// A store paired with the encoder that built its keys.
#[derive(Clone, Copy)]
pub struct Retriever<'a> {
    pub store: &'a Datastore,
    pub encoder: &'a dyn ContextEncoder,
}

impl<'a> Retriever<'a> {
    pub fn new(store: &'a Datastore, encoder: &'a dyn ContextEncoder) -> Result<Self, DecodeError> {
        if store.encoder_fingerprint() != encoder.fingerprint() {
            return Err(StoreError::FingerprintMismatch("encoder").into());
        }
        Ok(Self { store, encoder })
    }
}

impl std::fmt::Debug for Retriever<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Retriever")
            .field("records", &self.store.len())
            .field("encoder", &self.encoder.fingerprint())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Icl,
    KnnLm,
    KnnIcl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Icl => "icl",
            Mode::KnnLm => "knn-lm",
            Mode::KnnIcl => "knn-icl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub lambda: f64,
    pub knn: Option<KnnConfig>,
    pub max_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            knn: None,
            max_len: 128,
        }
    }
}

impl DecoderConfig {
    pub fn with_knn(lambda: f64, knn: KnnConfig) -> Self {
        Self {
            lambda,
            knn: Some(knn),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DecodeError::BadConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.max_len < 4 {
            return Err(DecodeError::BadConfig(format!("max_len {} < 4", self.max_len)));
        }
        if let Some(knn) = &self.knn {
            knn.validate()?;
        }
        Ok(())
    }

    /// Whether the kNN term takes part at all.
    pub fn uses_knn(&self, store_available: bool) -> bool {
        self.lambda > 0.0 && self.knn.is_some() && store_available
    }

    pub fn mode(&self, n_exemplars: usize, store_available: bool) -> Mode {
        match (self.uses_knn(store_available), n_exemplars) {
            (false, _) => Mode::Icl,
            (true, 0) => Mode::KnnLm,
            (true, _) => Mode::KnnIcl,
        }
    }
}

/// `lambda * p_knn + (1 - lambda) * p_lm`; the endpoints return a copy of
/// the respective input.
pub fn interpolate(
    p_lm: &TokenDistribution,
    p_knn: &TokenDistribution,
    lambda: f64,
) -> Result<TokenDistribution, DecodeError> {
    if p_lm.len() != p_knn.len() {
        return Err(DistError::LengthMismatch(p_lm.len(), p_knn.len()).into());
    }
    if lambda == 0.0 {
        return Ok(p_lm.clone());
    }
    if lambda == 1.0 {
        return Ok(p_knn.clone());
    }
    let probs = p_lm
        .probs()
        .iter()
        .zip(p_knn.probs())
        .map(|(&l, &k)| lambda * k + (1.0 - lambda) * l)
        .collect();
    Ok(TokenDistribution::from_normalized(probs))
}
