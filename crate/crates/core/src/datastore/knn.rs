use super::{NeighborSet, StoreError};
use crate::lm::TokenDistribution;

/// Softmax of `-d / temperature` over the neighbors, summed per value and
/// laid out over a space of `space_len` tokens.
pub fn knn_distribution(
    neighbors: &NeighborSet,
    temperature: f64,
    space_len: usize,
) -> Result<TokenDistribution, StoreError> {
    if neighbors.is_empty() {
        return Err(StoreError::EmptyNeighborSet);
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(StoreError::BadConfig(format!("temperature {temperature} must be positive")));
    }
    let d_min = neighbors
        .entries
        .iter()
        .map(|n| n.distance)
        .fold(f64::INFINITY, f64::min);
    let mut weights = vec![0.0; space_len];
    for n in &neighbors.entries {
        let slot = weights
            .get_mut(n.value as usize)
            .ok_or_else(|| StoreError::BadConfig(format!("value {} outside token space of {space_len}", n.value)))?;
        *slot += (-(n.distance - d_min) / temperature).exp();
    }
    TokenDistribution::from_weights(weights).map_err(|e| StoreError::BadConfig(e.to_string()))
}
