//! Model file layout, little-endian throughout:
//!
//! ```text
//! magic "NGLM" | version u32 | order u32 | vocab size u32 | vocab fingerprint [32]
//! discount f64 | prompt_mix f64 | copy_boost f64 | prompt_recency f64
//! triple count u64 | (context hash u64, token u32, count u32) * count
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::ngram::CountTable;
use super::{LmError, NGramConfig, NGramLm};
use crate::textcore::{Fingerprint, TokenId};

const MAGIC: &[u8; 4] = b"NGLM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 32 + 8 * 4 + 8;

impl NGramLm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let triples = self.table().triples();
        let mut out = Vec::with_capacity(HEADER_LEN + triples.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(cfg.order as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size() as u32).to_le_bytes());
        out.extend_from_slice(&super::LanguageModel::vocab_fingerprint(self).0);
        for x in [cfg.discount, cfg.prompt_mix, cfg.copy_boost, cfg.prompt_recency] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(triples.len() as u64).to_le_bytes());
        for (h, t, c) in triples {
            out.extend_from_slice(&h.to_le_bytes());
            out.extend_from_slice(&t.to_le_bytes());
            out.extend_from_slice(&(c.round() as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        let corrupt = |m: &str| LmError::CorruptModel(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_bits(u64_at(o));
        let version = u32_at(4);
        if version != VERSION {
            return Err(LmError::VersionMismatch(version));
        }
        let order = u32_at(8) as usize;
        let vocab_size = u32_at(12) as usize;
        let mut fp = [0u8; 32];
        fp.copy_from_slice(&bytes[16..48]);
        let cfg = NGramConfig {
            order,
            discount: f64_at(48),
            prompt_mix: f64_at(56),
            copy_boost: f64_at(64),
            prompt_recency: f64_at(72),
        };
        cfg.validate()?;
        let count = u64_at(80) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count.checked_mul(16).ok_or_else(|| corrupt("bad triple count"))? {
            return Err(corrupt("triple section length disagrees with header"));
        }
        let mut raw: HashMap<u64, BTreeMap<TokenId, f64>> = HashMap::new();
        for chunk in body.chunks_exact(16) {
            let h = u64::from_le_bytes(chunk[..8].try_into().unwrap());
            let t = u32::from_le_bytes(chunk[8..12].try_into().unwrap());
            let c = u32::from_le_bytes(chunk[12..].try_into().unwrap());
            if t as usize >= vocab_size || c == 0 {
                return Err(corrupt("triple out of range"));
            }
            raw.entry(h).or_default().insert(t, f64::from(c));
        }
        let table = CountTable::from_raw(raw, cfg.order, cfg.discount);
        Ok(NGramLm::from_parts(cfg, vocab_size, Fingerprint(fp), table))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
