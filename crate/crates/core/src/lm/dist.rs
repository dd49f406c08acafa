use crate::textcore::TokenId;

/// Normalized next-token probabilities over a token space.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("negative or non-finite probability at {0}")]
    BadEntry(usize),
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all weights are zero")]
    ZeroMass,
}

pub const SUM_TOLERANCE: f64 = 1e-6;

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(DistError::BadEntry(i));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DistError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, DistError> {
        if let Some(i) = weights.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(DistError::BadEntry(i));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(DistError::ZeroMass);
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { probs: weights })
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        Self { probs }
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn point_mass(len: usize, id: TokenId) -> Self {
        let mut probs = vec![0.0; len];
        probs[id as usize] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// The `k` most probable tokens, descending, ties by ascending id.
    pub fn top_k(&self, k: usize) -> Vec<(TokenId, f64)> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx.into_iter().map(|i| (i as TokenId, self.probs[i])).collect()
    }

    /// `weight * other + (1 - weight) * self`, elementwise.
    pub fn mix(&self, other: &TokenDistribution, weight: f64) -> Result<TokenDistribution, DistError> {
        if self.len() != other.len() {
            return Err(DistError::LengthMismatch(self.len(), other.len()));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| weight * b + (1.0 - weight) * a)
            .collect();
        Ok(Self { probs })
    }
}
