//! Store file layout, little-endian throughout:
//!
//! ```text
//! magic "KNNI" | version u32 | dim u32 | records u64 | filter u8
//! encoder fingerprint [32] | vocab fingerprint [32]
//! keys f32 * records * dim | values u32 * records | crc32 of all preceding bytes
//! ```

use std::path::Path;

use super::{Datastore, RecordFilter, StoreError};
use crate::textcore::Fingerprint;

const MAGIC: &[u8; 4] = b"KNNI";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 1 + 32 + 32;

impl Datastore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.keys.len() * 4 + self.values.len() * 4 + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.push(match self.filter {
            RecordFilter::LabelsOnly => 0,
            RecordFilter::AllTokens => 1,
        });
        out.extend_from_slice(&self.encoder_fingerprint.0);
        out.extend_from_slice(&self.vocab_fingerprint.0);
        for x in &self.keys {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let corrupt = |m: &str| StoreError::CorruptStore(m.to_string());
        if bytes.len() < HEADER_LEN + 4 {
            return Err(corrupt("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }
        if &body[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(StoreError::VersionMismatch(version));
        }
        let dim = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let filter = match body[20] {
            0 => RecordFilter::LabelsOnly,
            1 => RecordFilter::AllTokens,
            other => return Err(corrupt(&format!("unknown filter {other}"))),
        };
        let mut enc = [0u8; 32];
        enc.copy_from_slice(&body[21..53]);
        let mut voc = [0u8; 32];
        voc.copy_from_slice(&body[53..85]);
        let payload = &body[HEADER_LEN..];
        let want = n
            .checked_mul(dim)
            .and_then(|x| x.checked_add(n))
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| corrupt("record count overflows"))?;
        if payload.len() != want {
            return Err(corrupt("payload length disagrees with header"));
        }
        let (key_bytes, value_bytes) = payload.split_at(n * dim * 4);
        let keys = key_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = value_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Datastore::from_parts(dim, keys, values, filter, Fingerprint(enc), Fingerprint(voc)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
