use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::store::{squared_l2, top_k};
use super::{Datastore, NeighborSet};

const LLOYD_ITERS: usize = 8;

/// Inverted-file index: k-means centroids with one posting list each.
#[derive(Debug, Clone)]
pub struct IvfIndex {
    dim: usize,
    centroids: Vec<f32>,
    lists: Vec<Vec<usize>>,
}

fn nearest(centroids: &[f32], dim: usize, x: &[f32]) -> usize {
    centroids
        .chunks_exact(dim)
        .enumerate()
        .map(|(c, mu)| (squared_l2(mu, x), c))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map_or(0, |(_, c)| c)
}

impl IvfIndex {
    pub fn build(store: &Datastore, n_lists: usize, seed: u64) -> Self {
        let dim = store.dim();
        let n = store.len();
        let n_lists = n_lists.min(n).max(1);
        if n == 0 {
            return Self {
                dim,
                centroids: vec![0.0; dim],
                lists: vec![Vec::new()],
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seeds = rand::seq::index::sample(&mut rng, n, n_lists).into_vec();
        seeds.sort_unstable();
        let mut centroids: Vec<f32> = seeds.iter().flat_map(|&i| store.key(i).iter().copied()).collect();

        let mut assign = vec![0usize; n];
        for _ in 0..LLOYD_ITERS {
            let next: Vec<usize> = (0..n)
                .into_par_iter()
                .map(|i| nearest(&centroids, dim, store.key(i)))
                .collect();
            let changed = next != assign;
            assign = next;
            let mut sums = vec![0f64; n_lists * dim];
            let mut counts = vec![0usize; n_lists];
            for (i, &c) in assign.iter().enumerate() {
                counts[c] += 1;
                for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(store.key(i)) {
                    *s += f64::from(x);
                }
            }
            for c in 0..n_lists {
                if counts[c] == 0 {
                    continue;
                }
                for d in 0..dim {
                    centroids[c * dim + d] = (sums[c * dim + d] / counts[c] as f64) as f32;
                }
            }
            if !changed {
                break;
            }
        }
        let assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(&centroids, dim, store.key(i)))
            .collect();
        let mut lists = vec![Vec::new(); n_lists];
        for (i, c) in assign.into_iter().enumerate() {
            lists[c].push(i);
        }
        Self { dim, centroids, lists }
    }

    pub fn n_lists(&self) -> usize {
        self.lists.len()
    }

    pub fn list_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(Vec::len).collect()
    }

    /// Scans the `n_probe` nearest lists, probing further lists while fewer
    /// than `k` candidates have been gathered.
    pub fn search(&self, store: &Datastore, q: &[f32], k: usize, n_probe: usize) -> NeighborSet {
        let mut order: Vec<(f64, usize)> = self
            .centroids
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, mu)| (squared_l2(mu, q), c))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut scored = Vec::new();
        for (probed, &(_, c)) in order.iter().enumerate() {
            if probed >= n_probe && scored.len() >= k {
                break;
            }
            scored.extend(self.lists[c].iter().map(|&i| (squared_l2(store.key(i), q), i)));
        }
        store.neighbors_from(top_k(scored, k))
    }
}
