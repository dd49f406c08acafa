use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{EncodedPrompt, LanguageModel, LmError, TokenDistribution};
use crate::textcore::{Fingerprint, TokenId, Vocabulary, BOS, EOS, QUOTE, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    /// Absolute discount `D`.
    pub discount: f64,
    /// Weight of the distribution estimated from prompt exemplars.
    pub prompt_mix: f64,
    /// Weight of the copy distribution inside an open quoted span.
    pub copy_boost: f64,
    /// Per-position decay of exemplar counts, so later exemplars weigh more.
    pub prompt_recency: f64,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            discount: 0.75,
            prompt_mix: 0.5,
            copy_boost: 0.5,
            prompt_recency: 0.9,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.order == 0 {
            return Err(LmError::BadConfig("order must be at least 1".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(LmError::BadConfig(format!("discount {} outside (0, 1)", self.discount)));
        }
        if !unit(self.prompt_mix) || !unit(self.copy_boost) {
            return Err(LmError::BadConfig("mixture weights must lie in [0, 1]".into()));
        }
        if !(self.prompt_recency > 0.0 && self.prompt_recency <= 1.0) {
            return Err(LmError::BadConfig(format!("recency {} outside (0, 1]", self.prompt_recency)));
        }
        Ok(())
    }
}

/// FNV-1a over the context ids, length-prefixed so orders never collide.
pub fn context_hash(ctx: &[TokenId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u32| {
        for b in x.to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(ctx.len() as u32);
    for &t in ctx {
        feed(t);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Followers {
    total: f64,
    /// Mass reserved for the lower order: sum over followers of min(D, c).
    reserved: f64,
    tokens: Vec<(TokenId, f64)>,
}

/// Counts of (context, next token) for every order up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CountTable {
    order: usize,
    discount: f64,
    contexts: HashMap<u64, Followers>,
}

impl CountTable {
    fn accumulate(raw: &mut HashMap<u64, BTreeMap<TokenId, f64>>, seq: &[TokenId], weight: f64, order: usize) {
        for i in 1..seq.len() {
            for n in 1..=order {
                if n - 1 > i {
                    break;
                }
                let ctx = &seq[i - (n - 1)..i];
                *raw.entry(context_hash(ctx)).or_default().entry(seq[i]).or_insert(0.0) += weight;
            }
        }
    }

    pub(crate) fn from_raw(raw: HashMap<u64, BTreeMap<TokenId, f64>>, order: usize, discount: f64) -> Self {
        let contexts = raw
            .into_iter()
            .map(|(h, followers)| {
                let total = followers.values().sum();
                let reserved = followers.values().map(|&c| c.min(discount)).sum();
                let tokens = followers.into_iter().collect();
                (h, Followers { total, reserved, tokens })
            })
            .collect();
        Self {
            order,
            discount,
            contexts,
        }
    }

    fn from_sequences<'a>(seqs: impl IntoIterator<Item = (&'a [TokenId], f64)>, order: usize, discount: f64) -> Self {
        let mut raw = HashMap::new();
        for (seq, w) in seqs {
            Self::accumulate(&mut raw, seq, w, order);
        }
        Self::from_raw(raw, order, discount)
    }

    /// Interpolated absolute discounting down to a uniform floor over
    /// `space_len` tokens.
    fn distribution(&self, history: &[TokenId], space_len: usize) -> Vec<f64> {
        let mut p = vec![1.0 / space_len as f64; space_len];
        for n in 1..=self.order {
            if n - 1 > history.len() {
                break;
            }
            let ctx = &history[history.len() - (n - 1)..];
            let Some(f) = self.contexts.get(&context_hash(ctx)) else {
                continue;
            };
            let scale = f.reserved / f.total;
            p.iter_mut().for_each(|x| *x *= scale);
            for &(tok, c) in &f.tokens {
                if let Some(slot) = p.get_mut(tok as usize) {
                    *slot += (c - c.min(self.discount)) / f.total;
                }
            }
        }
        p
    }

    pub(crate) fn triples(&self) -> Vec<(u64, TokenId, f64)> {
        let mut out: Vec<_> = self
            .contexts
            .iter()
            .flat_map(|(&h, f)| f.tokens.iter().map(move |&(t, c)| (h, t, c)))
            .collect();
        out.sort_by_key(|a| (a.0, a.1));
        out
    }
}

/// Smoothed n-gram model over `BOS utterance SEP api EOS` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    cfg: NGramConfig,
    vocab_size: usize,
    vocab_fingerprint: Fingerprint,
    table: CountTable,
}

/// Per-decode state: target header, copy candidates, and prompt counts.
#[derive(Debug, Clone)]
pub struct NGramState {
    head: Vec<TokenId>,
    copy_ids: Vec<TokenId>,
    prompt: Option<CountTable>,
    space_len: usize,
}

impl NGramLm {
    /// Trains on (utterance, api) token-id pairs.
    pub fn train(
        corpus: &[(Vec<TokenId>, Vec<TokenId>)],
        vocab: &Vocabulary,
        cfg: NGramConfig,
    ) -> Result<Self, LmError> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let seqs: Vec<Vec<TokenId>> = corpus.iter().map(|(u, a)| sequence(u, a)).collect();
        if seqs.iter().flatten().any(|&t| t as usize >= vocab.len()) {
            return Err(LmError::VocabMismatch("training token outside vocabulary".into()));
        }
        let table = CountTable::from_sequences(seqs.iter().map(|s| (s.as_slice(), 1.0)), cfg.order, cfg.discount);
        Ok(Self {
            cfg,
            vocab_size: vocab.len(),
            vocab_fingerprint: vocab.fingerprint(),
            table,
        })
    }

    pub(crate) fn from_parts(cfg: NGramConfig, vocab_size: usize, vocab_fingerprint: Fingerprint, table: CountTable) -> Self {
        Self {
            cfg,
            vocab_size,
            vocab_fingerprint,
            table,
        }
    }

    pub(crate) fn table(&self) -> &CountTable {
        &self.table
    }

    pub fn config(&self) -> &NGramConfig {
        &self.cfg
    }

    /// Same counts, different mixing weights.
    pub fn with_config(&self, cfg: NGramConfig) -> Result<Self, LmError> {
        cfg.validate()?;
        if cfg.order != self.cfg.order || cfg.discount != self.cfg.discount {
            return Err(LmError::BadConfig("order and discount are fixed at training time".into()));
        }
        Ok(Self { cfg, ..self.clone() })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The trained model alone, before prompt and copy mixing.
    pub fn base_dist(&self, history: &[TokenId], space_len: usize) -> TokenDistribution {
        TokenDistribution::from_normalized(self.table.distribution(history, space_len))
    }

    /// One-shot conditioning plus a single step.
    pub fn next_dist_for(&self, prompt: &EncodedPrompt, prefix: &[TokenId]) -> Result<TokenDistribution, LmError> {
        let state = self.prepare(prompt)?;
        Ok(self.next_dist(&state, prefix))
    }
}

/// `BOS utterance SEP api EOS`.
pub fn sequence(utterance: &[TokenId], api: &[TokenId]) -> Vec<TokenId> {
    let mut seq = Vec::with_capacity(utterance.len() + api.len() + 3);
    seq.push(BOS);
    seq.extend_from_slice(utterance);
    seq.push(SEP);
    seq.extend_from_slice(api);
    seq.push(EOS);
    seq
}

fn in_open_span(prefix: &[TokenId]) -> bool {
    prefix.iter().filter(|&&t| t == QUOTE).count() % 2 == 1
}

impl LanguageModel for NGramLm {
    type State = NGramState;

    fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    fn prepare(&self, prompt: &EncodedPrompt) -> Result<NGramState, LmError> {
        if prompt.vocab_fingerprint != self.vocab_fingerprint {
            return Err(LmError::VocabMismatch("prompt was encoded with another vocabulary".into()));
        }
        if prompt.space_len < self.vocab_size {
            return Err(LmError::VocabMismatch(format!(
                "token space of {} is smaller than the model vocabulary {}",
                prompt.space_len, self.vocab_size
            )));
        }
        let out_of_range = prompt
            .exemplars
            .iter()
            .flatten()
            .chain(&prompt.target)
            .any(|&t| t as usize >= prompt.space_len);
        if out_of_range {
            return Err(LmError::VocabMismatch("prompt token outside the token space".into()));
        }
        let mut head = Vec::with_capacity(prompt.target.len() + 2);
        head.push(BOS);
        head.extend_from_slice(&prompt.target);
        head.push(SEP);
        let mut copy_ids = prompt.target.clone();
        copy_ids.sort_unstable();
        copy_ids.dedup();
        let m = prompt.exemplars.len();
        let prompt_table = (m > 0 && self.cfg.prompt_mix > 0.0).then(|| {
            CountTable::from_sequences(
                prompt
                    .exemplars
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_slice(), self.cfg.prompt_recency.powi((m - 1 - i) as i32))),
                self.cfg.order,
                self.cfg.discount,
            )
        });
        Ok(NGramState {
            head,
            copy_ids,
            prompt: prompt_table,
            space_len: prompt.space_len,
        })
    }

    fn next_dist(&self, state: &NGramState, prefix: &[TokenId]) -> TokenDistribution {
        let mut history = Vec::with_capacity(state.head.len() + prefix.len());
        history.extend_from_slice(&state.head);
        history.extend_from_slice(prefix);

        let mut p = self.table.distribution(&history, state.space_len);
        let mut mixed = false;
        if let Some(prompt) = &state.prompt {
            mixed = true;
            let alpha = self.cfg.prompt_mix;
            let q = prompt.distribution(&history, state.space_len);
            for (x, y) in p.iter_mut().zip(q) {
                *x = (1.0 - alpha) * *x + alpha * y;
            }
        }
        let beta = self.cfg.copy_boost;
        if beta > 0.0 && in_open_span(prefix) && !state.copy_ids.is_empty() {
            let mut support = state.copy_ids.clone();
            // an empty span cannot close
            if prefix.last() != Some(&QUOTE) && !support.contains(&QUOTE) {
                support.push(QUOTE);
            }
            mixed = true;
            let share = beta / support.len() as f64;
            p.iter_mut().for_each(|x| *x *= 1.0 - beta);
            for t in support {
                p[t as usize] += share;
            }
        }
        if mixed {
            let sum: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= sum);
        }
        TokenDistribution::from_normalized(p)
    }
}
