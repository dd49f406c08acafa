use serde::{Deserialize, Serialize};

use super::{Fingerprint, TextError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub ngram_max: usize,
    /// Weight multiplier per token of distance from the end of the prefix.
    pub prefix_decay: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            ngram_max: 3,
            prefix_decay: 0.9,
            seed: 0x6b6e_6e69,
        }
    }
}

/// Unit-norm context representation shared by datastore keys and queries.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    values: Vec<f32>,
    fingerprint: Fingerprint,
}

impl ContextVector {
    /// Wraps raw values, e.g. a key read back from a store.
    pub fn from_raw(values: Vec<f32>, fingerprint: Fingerprint) -> Self {
        Self { values, fingerprint }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &ContextVector) -> f64 {
        cosine(&self.values, &other.values)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Maps (utterance, generated prefix) to a fixed-dimension vector.
///
/// Keys written at datastore build time and queries issued while decoding
/// must come from the same encoder; the fingerprint enforces that.
pub trait ContextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn fingerprint(&self) -> Fingerprint;

    fn encode_context(&self, utterance: &[&str], prefix: &[&str]) -> Result<ContextVector, TextError>;

    fn embed_sentence(&self, utterance: &[&str]) -> Result<ContextVector, TextError> {
        self.encode_context(utterance, &[])
    }
}

/// Which half of the context a feature came from. The two halves hash into
/// separate feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Utterance,
    Prefix,
}

/// Signed feature hashing over word n-grams.
#[derive(Debug, Clone)]
pub struct HashedNgramEncoder {
    cfg: EncoderConfig,
    fingerprint: Fingerprint,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl HashedNgramEncoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self, TextError> {
        if cfg.dim < 8 {
            return Err(TextError::BadConfig(format!("dimension {} < 8", cfg.dim)));
        }
        if cfg.ngram_max == 0 {
            return Err(TextError::BadConfig("ngram_max must be at least 1".into()));
        }
        if !(cfg.prefix_decay > 0.0 && cfg.prefix_decay <= 1.0) {
            return Err(TextError::BadConfig(format!(
                "prefix decay {} outside (0, 1]",
                cfg.prefix_decay
            )));
        }
        let desc = format!(
            "hashed-ngram/v1 dim={} ngram_max={} decay={:016x} seed={}",
            cfg.dim,
            cfg.ngram_max,
            cfg.prefix_decay.to_bits(),
            cfg.seed
        );
        Ok(Self {
            cfg,
            fingerprint: Fingerprint::of(desc.as_bytes()),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Bucket and sign of one n-gram feature.
    pub fn feature(&self, ns: Namespace, ngram: &[&str]) -> (usize, f64) {
        let mut h = FNV_OFFSET ^ mix64(self.cfg.seed);
        let tag = match ns {
            Namespace::Utterance => b'u',
            Namespace::Prefix => b'p',
        };
        h = (h ^ u64::from(tag)).wrapping_mul(FNV_PRIME);
        for tok in ngram {
            for &byte in tok.as_bytes() {
                h = (h ^ u64::from(byte)).wrapping_mul(FNV_PRIME);
            }
            h = (h ^ 0x1f).wrapping_mul(FNV_PRIME);
        }
        let h = mix64(h);
        let bucket = (h % self.cfg.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        (bucket, sign)
    }

    fn accumulate(&self, acc: &mut [f64], ns: Namespace, tokens: &[&str], weight_of_end: impl Fn(usize) -> f64) {
        for n in 1..=self.cfg.ngram_max.min(tokens.len()) {
            for start in 0..=tokens.len() - n {
                let end = start + n - 1;
                let (bucket, sign) = self.feature(ns, &tokens[start..=end]);
                acc[bucket] += sign * weight_of_end(end);
            }
        }
    }
}

impl ContextEncoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn encode_context(&self, utterance: &[&str], prefix: &[&str]) -> Result<ContextVector, TextError> {
        if utterance.is_empty() {
            return Err(TextError::EmptyUtterance);
        }
        let mut acc = vec![0.0f64; self.cfg.dim];
        self.accumulate(&mut acc, Namespace::Utterance, utterance, |_| 1.0);
        let last = prefix.len().saturating_sub(1);
        let decay = self.cfg.prefix_decay;
        self.accumulate(&mut acc, Namespace::Prefix, prefix, |end| decay.powi((last - end) as i32));
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = if norm > 0.0 {
            acc.iter().map(|v| (v / norm) as f32).collect()
        } else {
            acc.iter().map(|&v| v as f32).collect()
        };
        Ok(ContextVector {
            values,
            fingerprint: self.fingerprint,
        })
    }
}
