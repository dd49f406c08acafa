use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::experiment::GridPoint;
use crate::decode::Mode;
use crate::selection::Strategy;
use crate::treebank::{exact_match, serialize_api, ApiCall};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: usize,
    pub domain: String,
    pub utterance: String,
    pub gold: String,
    pub prediction: String,
    pub correct: bool,
    pub gold_depth: usize,
}

impl ExampleResult {
    pub fn score(id: usize, domain: &str, utterance: &str, gold: &ApiCall, prediction: &str) -> Self {
        let m = exact_match(prediction, gold);
        Self {
            id,
            domain: domain.to_string(),
            utterance: utterance.to_string(),
            gold: serialize_api(gold),
            prediction: prediction.to_string(),
            correct: m.is_correct(),
            gold_depth: m.gold_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub n: usize,
    pub correct: usize,
    pub exact_match: f64,
}

/// Exact-match rate per gold depth, ascending by depth.
pub fn depth_breakdown(results: &[ExampleResult]) -> Vec<DepthRow> {
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in results {
        let g = groups.entry(r.gold_depth).or_default();
        g.0 += 1;
        g.1 += usize::from(r.correct);
    }
    groups
        .into_iter()
        .map(|(depth, (n, correct))| DepthRow {
            depth,
            n,
            correct,
            exact_match: correct as f64 / n as f64,
        })
        .collect()
}

pub fn exact_match_rate(results: &[ExampleResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64
}

pub fn per_domain(results: &[ExampleResult]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<ExampleResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.domain.clone()).or_default().push(r.clone());
    }
    groups.into_iter().map(|(d, rs)| (d, exact_match_rate(&rs))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub point: GridPoint,
    pub validation_exact_match: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub strategy: Strategy,
    pub m: usize,
    pub config: GridPoint,
    pub exact_match: f64,
    pub per_domain: BTreeMap<String, f64>,
    pub per_depth: Vec<DepthRow>,
    pub validation_exact_match: f64,
    pub grid: Vec<GridScore>,
    pub wall_clock_secs: f64,
    pub examples: Vec<ExampleResult>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
