use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::textcore::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub id: TokenId,
    pub token: String,
    pub prob: f64,
}

/// One greedy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub chosen: String,
    pub chosen_id: TokenId,
    pub top5_lm: Vec<ScoredToken>,
    pub top5_knn: Vec<ScoredToken>,
    pub neighbor_distances: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Eos,
    Complete,
    MaxLen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub mode: Mode,
    pub steps: Vec<StepRecord>,
    pub stop: StopReason,
}

impl DecodeTrace {
    pub fn truncated(&self) -> bool {
        self.stop == StopReason::MaxLen
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One JSON object per step.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
