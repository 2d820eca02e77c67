//! The initial manifold: k-NN search, density-adaptive weights and
//! probabilistic-union symmetrisation.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::graph::{symmetrize_union, Csr, DirectedWeightedGraph, Manifold};
use crate::knn::{build_knn_with, KnnGraph, KnnOptions};
use crate::metric::DistanceMetric;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("need at least two points with one or more columns")]
    EmptyDataset,
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("k = {k} out of range for {n} points (need 1 <= k <= N-1)")]
    KOutOfRange { k: usize, n: usize },
    #[error("invalid k-NN graph: {0}")]
    InvalidKnn(String),
}

pub const SIGMA_MIN: f64 = 1e-8;
pub const SIGMA_MAX: f64 = 1e6;
pub const SIGMA_ITERATIONS: usize = 64;

/// Per-vertex local connectivity: `rho` is the distance to the nearest
/// non-duplicate neighbour, `sigma` the bandwidth solving the membership sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalScale {
    pub rho: f64,
    pub sigma: f64,
}

fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Solves `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)` by bisection.
///
/// When ties at `rho` already reach the target (e.g. `k <= 2` or many
/// duplicates) the sum cannot be lowered further and the smallest bandwidth
/// is returned.
pub fn local_scale(distances: &[f64]) -> LocalScale {
    let k = distances.len();
    let rho = distances.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let target = (k as f64).log2();
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    if membership_sum(distances, rho, lo) >= target {
        return LocalScale { rho, sigma: lo };
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..SIGMA_ITERATIONS {
        mid = 0.5 * (lo + hi);
        let s = membership_sum(distances, rho, mid);
        if s == target {
            break;
        }
        if s > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    LocalScale { rho, sigma: mid }
}

pub fn local_scales(knn: &KnnGraph) -> Vec<LocalScale> {
    (0..knn.n_vertices()).into_par_iter().map(|i| local_scale(knn.neighbors(i).1)).collect()
}

/// Directed fuzzy membership weights from a k-NN graph.
///
/// The nearest neighbour always gets weight 1. Weights that underflow to 0
/// in single precision are dropped.
pub fn smooth_weights(knn: &KnnGraph) -> DirectedWeightedGraph {
    let scales = local_scales(knn);
    let rows: Vec<Vec<(u32, f32)>> = (0..knn.n_vertices())
        .into_par_iter()
        .map(|i| {
            let (idx, dist) = knn.neighbors(i);
            let LocalScale { rho, sigma } = scales[i];
            let mut row: Vec<(u32, f32)> = idx
                .iter()
                .zip(dist)
                .map(|(&j, &d)| (j, (-(d - rho).max(0.0) / sigma).exp() as f32))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            row
        })
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for row in rows {
        for (j, w) in row {
            indices.push(j);
            weights.push(w);
        }
        offsets.push(indices.len());
    }
    DirectedWeightedGraph { csr: Csr { offsets, indices, weights } }
}

/// Builds the symmetric manifold over all columns of `data`.
pub fn build_manifold(
    data: &Dataset,
    k: usize,
    metric: DistanceMetric,
) -> Result<Manifold, ManifoldError> {
    build_manifold_with(data, k, metric, &KnnOptions::default())
}

pub fn build_manifold_with(
    data: &Dataset,
    k: usize,
    metric: DistanceMetric,
    options: &KnnOptions,
) -> Result<Manifold, ManifoldError> {
    let knn = build_knn_with(data, k, metric, options)?;
    Ok(symmetrize_union(&smooth_weights(&knn)))
}
