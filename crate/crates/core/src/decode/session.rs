use std::collections::HashMap;
use std::sync::Arc;

use super::{interpolate, DecodeError, DecodeTrace, DecoderConfig, Prompt, Retriever, ScoredToken, StepRecord, StopReason};
use crate::datastore::{knn_distribution, IndexKind, KnnConfig, NeighborSet};
use crate::lm::{LanguageModel, TokenDistribution};
use crate::textcore::{TokenId, TokenSpace, Vocabulary, EOS, LPAREN, QUOTE, RPAREN};

/// Everything computed for one decoding position.
#[derive(Debug, Clone)]
pub struct Step {
    pub dist: TokenDistribution,
    pub p_lm: Arc<TokenDistribution>,
    pub p_knn: Option<TokenDistribution>,
    pub neighbors: Option<NeighborSet>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub trace: DecodeTrace,
}

/// Decoding state for one prompt. LM distributions and exact neighbor
/// lists are cached per prefix, so repeated decodes under different
/// (lambda, k, temperature) settings share work.
pub struct Session<'a, L: LanguageModel> {
    lm: &'a L,
    retriever: Option<Retriever<'a>>,
    space: TokenSpace<'a>,
    target: Vec<String>,
    n_exemplars: usize,
    state: L::State,
    prefetch_k: usize,
    lm_cache: HashMap<Vec<TokenId>, Arc<TokenDistribution>>,
    knn_cache: HashMap<Vec<TokenId>, NeighborSet>,
}

impl<'a, L: LanguageModel> Session<'a, L> {
    pub fn new(
        lm: &'a L,
        retriever: Option<Retriever<'a>>,
        vocab: &'a Vocabulary,
        prompt: &Prompt,
    ) -> Result<Self, DecodeError> {
        if prompt.target.is_empty() {
            return Err(DecodeError::EmptyTarget);
        }
        if let Some(r) = &retriever {
            r.store.check_vocab(vocab.fingerprint())?;
        }
        let space = prompt.token_space(vocab);
        let state = lm.prepare(&prompt.encode(&space))?;
        Ok(Self {
            lm,
            retriever,
            space,
            target: prompt.target.clone(),
            n_exemplars: prompt.exemplars.len(),
            state,
            prefetch_k: 0,
            lm_cache: HashMap::new(),
            knn_cache: HashMap::new(),
        })
    }

    /// Exact queries fetch at least this many neighbors, so later calls
    /// with a smaller k are served from the cache.
    pub fn prefetch(&mut self, k: usize) {
        self.prefetch_k = k;
    }

    pub fn space(&self) -> &TokenSpace<'a> {
        &self.space
    }

    pub fn lm_dist(&mut self, prefix: &[TokenId]) -> Arc<TokenDistribution> {
        if let Some(d) = self.lm_cache.get(prefix) {
            return Arc::clone(d);
        }
        let d = Arc::new(self.lm.next_dist(&self.state, prefix));
        self.lm_cache.insert(prefix.to_vec(), Arc::clone(&d));
        d
    }

    fn query(&self, retriever: &Retriever<'_>, prefix: &[TokenId], cfg: &KnnConfig) -> Result<NeighborSet, DecodeError> {
        let utterance: Vec<&str> = self.target.iter().map(String::as_str).collect();
        let surfaces: Vec<&str> = prefix.iter().map(|&t| self.space.surface(t)).collect();
        let q = retriever.encoder.encode_context(&utterance, &surfaces)?;
        Ok(retriever.store.query(&q, cfg)?)
    }

    /// Neighbors of the (target, prefix) context; `None` without a store.
    pub fn neighbors(&mut self, prefix: &[TokenId], cfg: &KnnConfig) -> Result<Option<NeighborSet>, DecodeError> {
        let Some(retriever) = self.retriever else {
            return Ok(None);
        };
        if cfg.index != IndexKind::Exact {
            return self.query(&retriever, prefix, cfg).map(Some);
        }
        let fetch = cfg.k.max(self.prefetch_k);
        let full = |set: &NeighborSet| set.len() >= cfg.k || set.len() == retriever.store.len();
        if let Some(set) = self.knn_cache.get(prefix).filter(|s| full(s)) {
            return Ok(Some(set.truncated(cfg.k)));
        }
        let set = self.query(&retriever, prefix, &KnnConfig { k: fetch, ..*cfg })?;
        let out = set.truncated(cfg.k);
        self.knn_cache.insert(prefix.to_vec(), set);
        Ok(Some(out))
    }

    pub fn step(&mut self, cfg: &DecoderConfig, prefix: &[TokenId]) -> Result<Step, DecodeError> {
        let p_lm = self.lm_dist(prefix);
        let plain = |p_lm: Arc<TokenDistribution>, note: Option<String>| Step {
            dist: (*p_lm).clone(),
            p_lm,
            p_knn: None,
            neighbors: None,
            note,
        };
        let knn = match cfg.knn {
            Some(knn) if cfg.uses_knn(self.retriever.is_some()) => knn,
            _ => return Ok(plain(p_lm, None)),
        };
        let neighbors = match self.neighbors(prefix, &knn)? {
            Some(n) if !n.is_empty() => n,
            _ => return Ok(plain(p_lm, Some("empty neighbor set; using the LM alone".into()))),
        };
        let p_knn = knn_distribution(&neighbors, knn.temperature, self.space.len())?;
        let dist = interpolate(&p_lm, &p_knn, cfg.lambda)?;
        Ok(Step {
            dist,
            p_lm,
            p_knn: Some(p_knn),
            neighbors: Some(neighbors),
            note: None,
        })
    }

    fn scored(&self, d: &TokenDistribution) -> Vec<ScoredToken> {
        d.top_k(5)
            .into_iter()
            .map(|(id, prob)| ScoredToken {
                id,
                token: self.space.surface(id).to_string(),
                prob,
            })
            .collect()
    }

    pub fn decode(&mut self, cfg: &DecoderConfig) -> Result<DecodeOutput, DecodeError> {
        self.decode_observed(cfg, |_, _| {})
    }

    /// Greedy decoding; `observe` sees every step's full distribution.
    pub fn decode_observed(
        &mut self,
        cfg: &DecoderConfig,
        mut observe: impl FnMut(&[TokenId], &TokenDistribution),
    ) -> Result<DecodeOutput, DecodeError> {
        cfg.validate()?;
        let mode = cfg.mode(self.n_exemplars, self.retriever.is_some());
        let mut tokens: Vec<TokenId> = Vec::new();
        let mut steps = Vec::new();
        let mut depth = 0i64;
        let mut opened = false;
        let mut in_quote = false;
        let mut stop = StopReason::MaxLen;
        while tokens.len() < cfg.max_len {
            let step = self.step(cfg, &tokens)?;
            observe(&tokens, &step.dist);
            let chosen = step.dist.argmax();
            steps.push(StepRecord {
                step: steps.len(),
                chosen: self.space.surface(chosen).to_string(),
                chosen_id: chosen,
                top5_lm: self.scored(&step.p_lm),
                top5_knn: step.p_knn.as_ref().map(|d| self.scored(d)).unwrap_or_default(),
                neighbor_distances: step
                    .neighbors
                    .as_ref()
                    .map(|n| n.entries.iter().map(|e| e.distance).collect())
                    .unwrap_or_default(),
                note: step.note,
            });
            if chosen == EOS {
                stop = StopReason::Eos;
                break;
            }
            tokens.push(chosen);
            match chosen {
                QUOTE => in_quote = !in_quote,
                LPAREN if !in_quote => {
                    depth += 1;
                    opened = true;
                }
                RPAREN if !in_quote => depth -= 1,
                _ => {}
            }
            if opened && depth <= 0 {
                stop = StopReason::Complete;
                break;
            }
        }
        let text = tokens.iter().map(|&t| self.space.surface(t)).collect::<Vec<_>>().join(" ");
        Ok(DecodeOutput {
            text,
            tokens,
            trace: DecodeTrace { mode, steps, stop },
        })
    }
}

/// The interpolated next-token distribution after `prefix`.
pub fn step_distribution<L: LanguageModel>(
    lm: &L,
    retriever: Option<Retriever<'_>>,
    vocab: &Vocabulary,
    cfg: &DecoderConfig,
    prompt: &Prompt,
    prefix: &[TokenId],
) -> Result<TokenDistribution, DecodeError> {
    cfg.validate()?;
    Ok(Session::new(lm, retriever, vocab, prompt)?.step(cfg, prefix)?.dist)
}

pub fn decode_greedy<L: LanguageModel>(
    lm: &L,
    retriever: Option<Retriever<'_>>,
    vocab: &Vocabulary,
    cfg: &DecoderConfig,
    prompt: &Prompt,
) -> Result<(String, DecodeTrace), DecodeError> {
    let out = Session::new(lm, retriever, vocab, prompt)?.decode(cfg)?;
    Ok((out.text, out.trace))
}
