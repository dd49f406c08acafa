use serde::{Deserialize, Serialize};

use super::api::{parse_api, ApiCall};

/// Outcome of scoring one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub score: u8,
    /// `None` when the prediction does not parse.
    pub pred_depth: Option<usize>,
    pub gold_depth: usize,
}

impl MatchResult {
    pub fn is_correct(&self) -> bool {
        self.score == 1
    }
}

/// Order-insensitive exact match: sibling arguments may appear in any order.
/// Unparseable predictions score 0.
pub fn exact_match(pred: &str, gold: &ApiCall) -> MatchResult {
    let gold_depth = gold.depth();
    match parse_api(pred) {
        Ok(parsed) => {
            let hit = parsed.canonicalize() == gold.canonicalize();
            MatchResult {
                score: u8::from(hit),
                pred_depth: Some(parsed.depth()),
                gold_depth,
            }
        }
        Err(_) => MatchResult {
            score: 0,
            pred_depth: None,
            gold_depth,
        },
    }
}
