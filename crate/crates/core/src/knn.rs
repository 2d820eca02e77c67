//! k-nearest-neighbour graphs.
//!
//! Small datasets use an exact brute-force search. Above
//! [`KnnOptions::exact_threshold`] points a seeded nearest-neighbour descent
//! takes over and the result records the recall measured against exact
//! search on a sample of vertices.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::manifold::ManifoldError;
use crate::metric::{DistanceMetric, PreparedPoints};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnOptions {
    /// Datasets with at least this many points use the approximate search.
    pub exact_threshold: usize,
    pub seed: u64,
    /// Candidate cap per vertex and iteration for the approximate search.
    pub max_candidates: usize,
    pub max_iterations: usize,
    /// Stop once fewer than `delta * N * k` neighbour slots change.
    pub delta: f64,
    /// Vertices sampled for the recall self-check.
    pub recall_sample: usize,
}

impl Default for KnnOptions {
    fn default() -> Self {
        KnnOptions {
            exact_threshold: 20_000,
            seed: 42,
            max_candidates: 30,
            max_iterations: 16,
            delta: 0.001,
            recall_sample: 100,
        }
    }
}

/// Directed k-NN graph: exactly `k` neighbours per vertex, sorted by
/// ascending distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n_vertices: usize,
    k: usize,
    indices: Vec<u32>,
    distances: Vec<f64>,
    /// Sampled recall when the approximate backend produced the graph.
    recall: Option<f64>,
}

impl KnnGraph {
    /// Builds a graph from flat row-major neighbour lists.
    pub fn new(
        n_vertices: usize,
        k: usize,
        indices: Vec<u32>,
        distances: Vec<f64>,
    ) -> Result<Self, ManifoldError> {
        if indices.len() != n_vertices * k || distances.len() != indices.len() {
            return Err(ManifoldError::InvalidKnn("neighbour lists must hold exactly k entries".into()));
        }
        for i in 0..n_vertices {
            let row = &indices[i * k..(i + 1) * k];
            let dist = &distances[i * k..(i + 1) * k];
            if row.iter().any(|&j| j as usize == i || j as usize >= n_vertices) {
                return Err(ManifoldError::InvalidKnn(format!("vertex {i}: bad neighbour index")));
            }
            if dist.iter().any(|d| !d.is_finite() || *d < 0.0) || dist.windows(2).any(|w| w[0] > w[1]) {
                return Err(ManifoldError::InvalidKnn(format!("vertex {i}: distances not sorted")));
            }
            for (a, j) in row.iter().enumerate() {
                if row[..a].contains(j) {
                    return Err(ManifoldError::InvalidKnn(format!("vertex {i}: duplicate neighbour")));
                }
            }
        }
        Ok(KnnGraph { n_vertices, k, indices, distances, recall: None })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> (&[u32], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.indices[r.clone()], &self.distances[r])
    }

    pub fn is_approximate(&self) -> bool {
        self.recall.is_some()
    }

    pub fn recall(&self) -> Option<f64> {
        self.recall
    }
}

/// k-NN search with default options.
pub fn build_knn(data: &Dataset, k: usize, metric: DistanceMetric) -> Result<KnnGraph, ManifoldError> {
    build_knn_with(data, k, metric, &KnnOptions::default())
}

pub fn build_knn_with(
    data: &Dataset,
    k: usize,
    metric: DistanceMetric,
    options: &KnnOptions,
) -> Result<KnnGraph, ManifoldError> {
    let n = data.n_rows();
    if n < 2 {
        return Err(ManifoldError::EmptyDataset);
    }
    if k == 0 || k > n - 1 {
        return Err(ManifoldError::KOutOfRange { k, n });
    }
    let d = data.n_cols();
    if d == 0 {
        return Err(ManifoldError::EmptyDataset);
    }
    if let Some(p) = data.values().iter().position(|v| !v.is_finite()) {
        return Err(ManifoldError::NonFiniteInput { row: p / d, col: p % d });
    }
    let points = PreparedPoints::new(metric, n, d, data.values());
    if n < options.exact_threshold {
        let (indices, distances) = exact_search(&points, k);
        Ok(KnnGraph { n_vertices: n, k, indices, distances, recall: None })
    } else {
        Ok(descent_search(&points, k, options))
    }
}

/// Order by distance, then by index.
fn closer(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn exact_row(points: &PreparedPoints, i: usize, k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = (0..points.len())
        .filter(|&j| j != i)
        .map(|j| (points.distance(i, j), j as u32))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, closer);
        all.truncate(k);
    }
    all.sort_unstable_by(closer);
    all
}

fn exact_search(points: &PreparedPoints, k: usize) -> (Vec<u32>, Vec<f64>) {
    let rows: Vec<Vec<(f64, u32)>> =
        (0..points.len()).into_par_iter().map(|i| exact_row(points, i, k)).collect();
    flatten(rows)
}

fn flatten(rows: Vec<Vec<(f64, u32)>>) -> (Vec<u32>, Vec<f64>) {
    let mut indices = Vec::with_capacity(rows.len() * rows.first().map_or(0, Vec::len));
    let mut distances = Vec::with_capacity(indices.capacity());
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    (indices, distances)
}

#[derive(Clone, Copy)]
struct Slot {
    dist: f64,
    idx: u32,
    fresh: bool,
}

/// Inserts into a sorted, bounded neighbour list. Returns whether it changed.
fn try_insert(row: &mut Vec<Slot>, dist: f64, idx: u32) -> bool {
    let last = row.last().expect("neighbour lists are never empty");
    if closer(&(dist, idx), &(last.dist, last.idx)).is_ge() || row.iter().any(|s| s.idx == idx) {
        return false;
    }
    let pos = row.partition_point(|s| closer(&(s.dist, s.idx), &(dist, idx)).is_lt());
    row.insert(pos, Slot { dist, idx, fresh: true });
    row.pop();
    true
}

fn vertex_rng(seed: u64, salt: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn descent_search(points: &PreparedPoints, k: usize, options: &KnnOptions) -> KnnGraph {
    let n = points.len();
    let mut rows: Vec<Vec<Slot>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = vertex_rng(options.seed, 0, i);
            let mut picked = Vec::with_capacity(k);
            while picked.len() < k {
                let j = rng.gen_range(0..n) as u32;
                if j as usize != i && !picked.contains(&j) {
                    picked.push(j);
                }
            }
            let mut row: Vec<Slot> = picked
                .into_iter()
                .map(|j| Slot { dist: points.distance(i, j as usize), idx: j, fresh: true })
                .collect();
            row.sort_unstable_by(|a, b| closer(&(a.dist, a.idx), &(b.dist, b.idx)));
            row
        })
        .collect();

    let cap = options.max_candidates.max(1);
    const BLOCK: usize = 16_384;
    for iteration in 0..options.max_iterations {
        // Forward and reverse candidate lists, split by freshness.
        let mut fresh: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut stale: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for s in row {
                let lists = if s.fresh { &mut fresh } else { &mut stale };
                lists[i].push(s.idx);
                lists[s.idx as usize].push(i as u32);
            }
        }
        let sample = |lists: &mut Vec<Vec<u32>>, salt: u64| {
            lists.par_iter_mut().enumerate().for_each(|(i, list)| {
                list.sort_unstable();
                list.dedup();
                if list.len() > cap {
                    let mut rng = vertex_rng(options.seed, salt, i);
                    list.shuffle(&mut rng);
                    list.truncate(cap);
                }
            });
        };
        sample(&mut fresh, 2 * iteration as u64 + 1);
        sample(&mut stale, 2 * iteration as u64 + 2);
        // Sampled forward entries are explored this round.
        rows.par_iter_mut().zip(fresh.par_iter()).for_each(|(row, cands)| {
            for s in row.iter_mut() {
                if s.fresh && cands.contains(&s.idx) {
                    s.fresh = false;
                }
            }
        });

        let mut changes = 0usize;
        for block_start in (0..n).step_by(BLOCK) {
            let block_end = (block_start + BLOCK).min(n);
            let thresholds: Vec<f64> = rows.iter().map(|r| r.last().unwrap().dist).collect();
            let updates: Vec<(u32, u32, f64)> = (block_start..block_end)
                .into_par_iter()
                .flat_map_iter(|v| {
                    let new = &fresh[v];
                    let old = &stale[v];
                    let mut out = Vec::new();
                    for (a, &p) in new.iter().enumerate() {
                        for &q in new[a + 1..].iter().chain(old.iter()) {
                            if p == q {
                                continue;
                            }
                            let d = points.distance(p as usize, q as usize);
                            if d <= thresholds[p as usize] || d <= thresholds[q as usize] {
                                out.push((p, q, d));
                                out.push((q, p, d));
                            }
                        }
                    }
                    out
                })
                .collect();
            // Bucket by target vertex so each list is updated by one worker.
            let mut offsets = vec![0usize; n + 1];
            for &(t, _, _) in &updates {
                offsets[t as usize + 1] += 1;
            }
            for i in 0..n {
                offsets[i + 1] += offsets[i];
            }
            let mut cursor = offsets.clone();
            let mut bucketed = vec![(0u32, 0f64); updates.len()];
            for &(t, s, d) in &updates {
                bucketed[cursor[t as usize]] = (s, d);
                cursor[t as usize] += 1;
            }
            changes += rows
                .par_iter_mut()
                .enumerate()
                .map(|(t, row)| {
                    bucketed[offsets[t]..offsets[t + 1]]
                        .iter()
                        .filter(|&&(s, d)| try_insert(row, d, s))
                        .count()
                })
                .sum::<usize>();
        }
        log::debug!("neighbour descent iteration {iteration}: {changes} updates");
        if (changes as f64) < options.delta * (n * k) as f64 {
            break;
        }
    }

    let sorted: Vec<Vec<(f64, u32)>> =
        rows.into_iter().map(|r| r.into_iter().map(|s| (s.dist, s.idx)).collect()).collect();
    let recall = sampled_recall(points, k, &sorted, options);
    if recall < 0.9 {
        log::warn!("approximate neighbour search recall {recall:.3} is below 0.9");
    }
    let (indices, distances) = flatten(sorted);
    KnnGraph { n_vertices: n, k, indices, distances, recall: Some(recall) }
}

fn sampled_recall(
    points: &PreparedPoints,
    k: usize,
    rows: &[Vec<(f64, u32)>],
    options: &KnnOptions,
) -> f64 {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(7));
    let sample = rand::seq::index::sample(&mut rng, n, options.recall_sample.min(n)).into_vec();
    let hits: usize = sample
        .par_iter()
        .map(|&i| {
            let exact = exact_row(points, i, k);
            // Count ties at the k-th distance as hits.
            let kth = exact.last().unwrap().0;
            rows[i].iter().filter(|&&(d, j)| d <= kth || exact.iter().any(|e| e.1 == j)).count()
        })
        .sum();
    hits as f64 / (sample.len() * k) as f64
}
