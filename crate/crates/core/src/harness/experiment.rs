use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::report::{depth_breakdown, exact_match_rate, per_domain, ExampleResult, ExperimentReport, GridScore};
use super::split::validation_split;
use super::{Corpus, HarnessError};
use crate::datastore::{build_datastore, Datastore, IndexKind, KnnConfig, RecordFilter};
use crate::decode::{build_prompt, DecodeTrace, DecoderConfig, Mode, Prompt, Retriever, Session};
use crate::lm::{NGramConfig, NGramLm};
use crate::selection::{build_pair_dataset, select, DemoPool, PairClassifier, PromptOrder, SelectionConfig, Strategy};
use crate::textcore::{split_symbols, EncoderConfig, HashedNgramEncoder, TokenId, Vocabulary};
use crate::treebank::serialize_api;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub temperature: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub temperatures: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            temperatures: vec![50.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            lambdas: vec![0.1, 0.3, 0.5, 0.7],
            ks: vec![20, 100, 1000],
        }
    }
}

impl Grid {
    pub fn single(p: GridPoint) -> Self {
        Self {
            temperatures: vec![p.temperature],
            lambdas: vec![p.lambda],
            ks: vec![p.k],
        }
    }

    /// Temperature-major, then lambda, then k.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &temperature in &self.temperatures {
            for &lambda in &self.lambdas {
                for &k in &self.ks {
                    out.push(GridPoint { lambda, temperature, k });
                }
            }
        }
        out
    }

    /// Reads `temperatures`, `lambdas` and `ks` lists, keeping defaults
    /// for absent keys.
    pub fn from_config(cfg: &Config) -> Result<Self, HarnessError> {
        let d = Self::default();
        let grid = Self {
            temperatures: cfg.list("temperatures")?.unwrap_or(d.temperatures),
            lambdas: cfg.list("lambdas")?.unwrap_or(d.lambdas),
            ks: cfg.list("ks")?.unwrap_or(d.ks),
        };
        if grid.points().is_empty() {
            return Err(HarnessError::BadConfig {
                line: 0,
                reason: "grid has no points".into(),
            });
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub strategy: Strategy,
    pub m: usize,
    pub order: PromptOrder,
    pub grid: Grid,
    pub validation_fraction: f64,
    pub seed: u64,
    pub max_len: usize,
    pub index: IndexKind,
    pub parallel: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            mode: Mode::KnnIcl,
            strategy: Strategy::Similarity,
            m: 10,
            order: PromptOrder::BestLast,
            grid: Grid::default(),
            validation_fraction: 0.2,
            seed: 0,
            max_len: 128,
            index: IndexKind::Exact,
            parallel: true,
        }
    }
}

impl ExperimentSpec {
    /// Points searched on validation; ICL has nothing to tune.
    pub fn search_points(&self) -> Vec<GridPoint> {
        let points = self.grid.points();
        match self.mode {
            Mode::Icl => vec![GridPoint {
                lambda: 0.0,
                ..points[0]
            }],
            _ => points,
        }
    }

    pub fn decoder_config(&self, p: &GridPoint) -> DecoderConfig {
        DecoderConfig {
            lambda: if self.mode == Mode::Icl { 0.0 } else { p.lambda },
            knn: Some(KnnConfig {
                k: p.k,
                temperature: p.temperature,
                index: self.index,
            }),
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub lm: NGramConfig,
    pub filter: RecordFilter,
    pub train_classifier: bool,
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            lm: NGramConfig::default(),
            filter: RecordFilter::LabelsOnly,
            train_classifier: true,
            neg_ratio: 5,
            seed: 0,
        }
    }
}

/// One line per intent/slot name with a gloss derived from the name.
pub fn documentation_stub<'a>(labels: impl IntoIterator<Item = &'a str>) -> String {
    let mut seen: Vec<&str> = Vec::new();
    for l in labels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    seen.iter()
        .map(|l| format!("{l}: {}", l.to_lowercase().replace('_', " ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Vocabulary, LM, encoder, demo pool, datastore and paraphrase ranker
/// built from one training corpus.
pub struct Pipeline {
    pub vocab: Vocabulary,
    pub lm: NGramLm,
    pub encoder: HashedNgramEncoder,
    pub pool: DemoPool,
    pub store: Datastore,
    pub classifier: Option<PairClassifier>,
    pub documentation: Option<String>,
}

pub fn build_vocabulary(train: &Corpus) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for r in &train.records {
        for w in &r.utterance {
            vocab.intern(w);
        }
        vocab.intern_text(&serialize_api(&r.api));
    }
    vocab
}

pub fn lm_corpus(train: &Corpus, vocab: &Vocabulary) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    train
        .records
        .iter()
        .map(|r| {
            let u = r.utterance.iter().map(|w| vocab.id_or_unk(w)).collect();
            let a = split_symbols(&serialize_api(&r.api)).into_iter().map(|t| vocab.id_or_unk(t)).collect();
            (u, a)
        })
        .collect()
}

impl Pipeline {
    pub fn build(train: &Corpus, cfg: &PipelineConfig) -> Result<Self, HarnessError> {
        if train.is_empty() {
            return Err(HarnessError::EmptyCorpus);
        }
        let vocab = build_vocabulary(train);
        let lm = NGramLm::train(&lm_corpus(train, &vocab), &vocab, cfg.lm)?;
        let encoder = HashedNgramEncoder::new(cfg.encoder)?;
        let examples = train.examples();
        let store = build_datastore(&examples, &encoder, &vocab, cfg.filter)?;
        let pool = DemoPool::new(examples, &encoder)?;
        let classifier = if cfg.train_classifier && pool.intents().len() > 1 {
            let pairs = build_pair_dataset(&pool, cfg.neg_ratio, cfg.seed)?;
            Some(PairClassifier::train_on_pool(&pool, &pairs)?)
        } else {
            None
        };
        let documentation = Some(documentation_stub(
            train.records.iter().flat_map(|r| r.api.labels()).collect::<Vec<_>>(),
        ));
        Ok(Self {
            vocab,
            lm,
            encoder,
            pool,
            store,
            classifier,
            documentation,
        })
    }

    pub fn with_lm_config(mut self, cfg: NGramConfig) -> Result<Self, HarnessError> {
        self.lm = self.lm.with_config(cfg)?;
        Ok(self)
    }

    pub fn retriever(&self) -> Retriever<'_> {
        Retriever {
            store: &self.store,
            encoder: &self.encoder,
        }
    }

    /// Prompt for `utterance`: no exemplars in kNN-LM mode, otherwise `m`
    /// exemplars chosen by the configured strategy.
    pub fn prompt_for(&self, utterance: &[String], spec: &ExperimentSpec) -> Result<Prompt, HarnessError> {
        let words: Vec<&str> = utterance.iter().map(String::as_str).collect();
        let exemplars: Vec<(Vec<String>, String)> = if spec.mode == Mode::KnnLm {
            Vec::new()
        } else {
            let cfg = SelectionConfig {
                m: spec.m,
                seed: spec.seed,
                strategy: spec.strategy,
                order: spec.order,
            };
            select(&self.pool, &words, &self.encoder, self.classifier.as_ref(), &cfg)?
                .into_iter()
                .map(|i| {
                    let item = self.pool.item(i);
                    (item.utterance.clone(), serialize_api(&item.gold))
                })
                .collect()
        };
        Ok(build_prompt(self.documentation.as_deref(), &exemplars, utterance)?)
    }

    pub fn session<'a>(&'a self, prompt: &Prompt, mode: Mode) -> Result<Session<'a, NGramLm>, HarnessError> {
        let retriever = (mode != Mode::Icl).then(|| self.retriever());
        Ok(Session::new(&self.lm, retriever, &self.vocab, prompt)?)
    }

    pub fn decode_one(
        &self,
        utterance: &[String],
        spec: &ExperimentSpec,
        point: &GridPoint,
    ) -> Result<(String, DecodeTrace), HarnessError> {
        let prompt = self.prompt_for(utterance, spec)?;
        let out = self.session(&prompt, spec.mode)?.decode(&spec.decoder_config(point))?;
        Ok((out.text, out.trace))
    }

    /// Decodes one example under every point, reusing cached distributions.
    fn decode_points(
        &self,
        utterance: &[String],
        spec: &ExperimentSpec,
        points: &[GridPoint],
    ) -> Result<Vec<String>, HarnessError> {
        let prompt = self.prompt_for(utterance, spec)?;
        let mut session = self.session(&prompt, spec.mode)?;
        if let Some(max_k) = points.iter().map(|p| p.k).max() {
            session.prefetch(max_k);
        }
        points
            .iter()
            .map(|p| Ok(session.decode(&spec.decoder_config(p))?.text))
            .collect()
    }
}

fn maybe_parallel<T: Send, F>(parallel: bool, ids: &[usize], f: F) -> Result<Vec<T>, HarnessError>
where
    F: Fn(usize) -> Result<T, HarnessError> + Sync + Send,
{
    if parallel {
        ids.par_iter().map(|&i| f(i)).collect()
    } else {
        ids.iter().map(|&i| f(i)).collect()
    }
}

/// Grid search on a validation slice of `eval`, then a test-slice report
/// under the best point. A one-example evaluation set is used for both.
pub fn run_experiment(pipeline: &Pipeline, eval: &Corpus, spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    if eval.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let start = Instant::now();
    let ids: Vec<usize> = (0..eval.len()).collect();
    let (validation, mut test) = validation_split(&ids, spec.validation_fraction, spec.seed);
    if test.is_empty() {
        test = validation.clone();
    }
    let points = spec.search_points();

    let val_predictions = maybe_parallel(spec.parallel, &validation, |i| {
        pipeline.decode_points(&eval.records[i].utterance, spec, &points)
    })?;
    let grid: Vec<GridScore> = points
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let results: Vec<ExampleResult> = validation
                .iter()
                .zip(&val_predictions)
                .map(|(&i, preds)| {
                    let r = &eval.records[i];
                    ExampleResult::score(r.id, &r.domain, &r.text(), &r.api, &preds[j])
                })
                .collect();
            GridScore {
                point: *p,
                validation_exact_match: exact_match_rate(&results),
            }
        })
        .collect();
    let best = grid
        .iter()
        .fold(None::<&GridScore>, |acc, g| match acc {
            Some(b) if b.validation_exact_match >= g.validation_exact_match => Some(b),
            _ => Some(g),
        })
        .expect("grid has at least one point")
        .clone();

    let examples = maybe_parallel(spec.parallel, &test, |i| {
        let r = &eval.records[i];
        let (pred, _) = pipeline.decode_one(&r.utterance, spec, &best.point)?;
        Ok(ExampleResult::score(r.id, &r.domain, &r.text(), &r.api, &pred))
    })?;

    Ok(ExperimentReport {
        mode: spec.mode,
        strategy: spec.strategy,
        m: if spec.mode == Mode::KnnLm { 0 } else { spec.m },
        config: best.point,
        exact_match: exact_match_rate(&examples),
        per_domain: per_domain(&examples),
        per_depth: depth_breakdown(&examples),
        validation_exact_match: best.validation_exact_match,
        grid,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        examples,
    })
}
