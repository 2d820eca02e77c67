//! Sparse weighted graphs in compressed sparse row layout.
//!
//! Two flavours share the same storage: [`DirectedWeightedGraph`] holds the
//! per-point k-NN perspectives before symmetrisation, and [`Manifold`] holds
//! the symmetric graph every lens filters. Rows are sorted by neighbour index,
//! which keeps union and intersection merges linear in the row lengths.

use std::collections::VecDeque;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lenses::LensSpec;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("row offsets must start at 0, be non-decreasing and end at {0}")]
    BadOffsets(usize),
    #[error("length mismatch: {indices} indices but {weights} weights")]
    LengthMismatch { indices: usize, weights: usize },
    #[error("vertex {vertex}: neighbour {neighbour} out of range")]
    NeighbourOutOfRange { vertex: usize, neighbour: usize },
    #[error("vertex {0} has a self-loop")]
    SelfLoop(usize),
    #[error("vertex {0}: neighbours not strictly increasing")]
    UnsortedRow(usize),
    #[error("edge ({i}, {j}): weight {weight} outside (0, 1]")]
    WeightOutOfRange { i: usize, j: usize, weight: f32 },
    #[error("edge ({i}, {j}) is not mirrored with an equal weight")]
    Asymmetric { i: usize, j: usize },
}

/// Row-sorted CSR adjacency shared by both graph types.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    pub(crate) offsets: Vec<usize>,
    pub(crate) indices: Vec<u32>,
    pub(crate) weights: Vec<f32>,
}

impl Csr {
    pub(crate) fn empty(n_vertices: usize) -> Self {
        Csr { offsets: vec![0; n_vertices + 1], indices: Vec::new(), weights: Vec::new() }
    }

    pub(crate) fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub(crate) fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[range.clone()], &self.weights[range])
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.n_vertices();
        let nnz = self.indices.len();
        if self.weights.len() != nnz {
            return Err(GraphError::LengthMismatch { indices: nnz, weights: self.weights.len() });
        }
        if self.offsets[0] != 0
            || self.offsets[n] != nnz
            || self.offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(GraphError::BadOffsets(nnz));
        }
        for i in 0..n {
            let (cols, ws) = self.row(i);
            for (pos, (&j, &w)) in cols.iter().zip(ws).enumerate() {
                let j = j as usize;
                if j >= n {
                    return Err(GraphError::NeighbourOutOfRange { vertex: i, neighbour: j });
                }
                if j == i {
                    return Err(GraphError::SelfLoop(i));
                }
                if pos > 0 && cols[pos - 1] as usize >= j {
                    return Err(GraphError::UnsortedRow(i));
                }
                if !(w > 0.0 && w <= 1.0) {
                    return Err(GraphError::WeightOutOfRange { i, j, weight: w });
                }
            }
        }
        Ok(())
    }

    /// Transpose by counting sort; rows of the result stay sorted.
    fn transpose(&self) -> Csr {
        let n = self.n_vertices();
        let mut counts = vec![0usize; n + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0u32; self.indices.len()];
        let mut weights = vec![0f32; self.weights.len()];
        for i in 0..n {
            let (cols, ws) = self.row(i);
            for (&j, &w) in cols.iter().zip(ws) {
                let slot = &mut cursor[j as usize];
                indices[*slot] = i as u32;
                weights[*slot] = w;
                *slot += 1;
            }
        }
        Csr { offsets, indices, weights }
    }

    /// Merge each row with the matching row of the transpose. `combine` gets
    /// the forward weight `w(i,j)` and backward weight `w(j,i)` (absent as
    /// `None`) and returns the symmetric weight, or `None` to drop the pair.
    fn merge_with_transpose<F>(&self, mut combine: F) -> Result<Csr, GraphError>
    where
        F: FnMut(usize, usize, Option<f32>, Option<f32>) -> Result<Option<f32>, GraphError>,
    {
        let t = self.transpose();
        let n = self.n_vertices();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut indices = Vec::with_capacity(self.indices.len() * 2);
        let mut weights = Vec::with_capacity(self.indices.len() * 2);
        for i in 0..n {
            let (fc, fw) = self.row(i);
            let (bc, bw) = t.row(i);
            let (mut a, mut b) = (0, 0);
            while a < fc.len() || b < bc.len() {
                let (j, fwd, bwd) = match (fc.get(a), bc.get(b)) {
                    (Some(&x), Some(&y)) if x == y => {
                        a += 1;
                        b += 1;
                        (x, Some(fw[a - 1]), Some(bw[b - 1]))
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        a += 1;
                        (x, Some(fw[a - 1]), None)
                    }
                    (Some(&x), None) => {
                        a += 1;
                        (x, Some(fw[a - 1]), None)
                    }
                    (_, Some(&y)) => {
                        b += 1;
                        (y, None, Some(bw[b - 1]))
                    }
                    (None, None) => unreachable!(),
                };
                if let Some(w) = combine(i, j as usize, fwd, bwd)? {
                    indices.push(j);
                    weights.push(w);
                }
            }
            offsets.push(indices.len());
        }
        Ok(Csr { offsets, indices, weights })
    }
}

/// Directed sparse graph with probability weights in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedWeightedGraph {
    pub(crate) csr: Csr,
}

impl DirectedWeightedGraph {
    /// Builds a graph from CSR arrays, checking every invariant.
    pub fn from_csr(
        offsets: Vec<usize>,
        indices: Vec<u32>,
        weights: Vec<f32>,
    ) -> Result<Self, GraphError> {
        if offsets.is_empty() {
            return Err(GraphError::BadOffsets(indices.len()));
        }
        let csr = Csr { offsets, indices, weights };
        csr.validate()?;
        Ok(DirectedWeightedGraph { csr })
    }

    /// Builds a graph from `(i, j, w)` triples in any order.
    pub fn from_edges(
        n_vertices: usize,
        edges: impl IntoIterator<Item = (usize, usize, f32)>,
    ) -> Result<Self, GraphError> {
        let mut rows: Vec<Vec<(u32, f32)>> = vec![Vec::new(); n_vertices];
        for (i, j, w) in edges {
            if i >= n_vertices || j >= n_vertices {
                return Err(GraphError::NeighbourOutOfRange { vertex: i, neighbour: j });
            }
            rows[i].push((j as u32, w));
        }
        let mut offsets = Vec::with_capacity(n_vertices + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, w) in row {
                indices.push(j);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
        Self::from_csr(offsets, indices, weights)
    }

    pub fn n_vertices(&self) -> usize {
        self.csr.n_vertices()
    }

    /// Number of directed `(i, j)` entries.
    pub fn n_entries(&self) -> usize {
        self.csr.indices.len()
    }

    pub fn neighbors(&self, i: usize) -> (&[u32], &[f32]) {
        self.csr.row(i)
    }

    /// Weight of `(i, j)`, or `None` when absent.
    pub fn weight(&self, i: usize, j: usize) -> Option<f32> {
        let (cols, ws) = self.csr.row(i);
        cols.binary_search(&(j as u32)).ok().map(|p| ws[p])
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        (0..self.n_vertices()).flat_map(move |i| {
            let (cols, ws) = self.csr.row(i);
            cols.iter().zip(ws).map(move |(&j, &w)| (i, j as usize, w))
        })
    }
}

/// Symmetric weighted graph approximating the data manifold.
///
/// Both directions of every edge are stored, so `neighbors(i)` lists all
/// edges incident to `i`. `lens_history` records the lenses that produced
/// this graph from the initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub(crate) csr: Csr,
    pub lens_history: Vec<LensSpec>,
}

impl Manifold {
    /// A manifold with `n_vertices` vertices and no edges.
    pub fn empty(n_vertices: usize) -> Self {
        Manifold { csr: Csr::empty(n_vertices), lens_history: Vec::new() }
    }

    /// Builds a manifold from CSR arrays, checking every invariant including
    /// symmetry.
    pub fn from_csr(
        offsets: Vec<usize>,
        indices: Vec<u32>,
        weights: Vec<f32>,
        lens_history: Vec<LensSpec>,
    ) -> Result<Self, GraphError> {
        let directed = DirectedWeightedGraph::from_csr(offsets, indices, weights)?;
        let m = Manifold { csr: directed.csr, lens_history };
        m.check_symmetric()?;
        Ok(m)
    }

    /// Builds a manifold from unordered `(i, j, w)` pairs; each pair is
    /// mirrored. Listing a pair twice is an error unless the weights agree.
    pub fn from_undirected_edges(
        n_vertices: usize,
        edges: impl IntoIterator<Item = (usize, usize, f32)>,
    ) -> Result<Self, GraphError> {
        let mut seen = std::collections::HashMap::new();
        let mut mirrored = Vec::new();
        for (i, j, w) in edges {
            let key = (i.min(j), i.max(j));
            if let Some(&prev) = seen.get(&key) {
                if prev != w {
                    return Err(GraphError::Asymmetric { i, j });
                }
                continue;
            }
            seen.insert(key, w);
            mirrored.push((i, j, w));
            mirrored.push((j, i, w));
        }
        let g = DirectedWeightedGraph::from_edges(n_vertices, mirrored)?;
        Ok(Manifold { csr: g.csr, lens_history: Vec::new() })
    }

    fn check_symmetric(&self) -> Result<(), GraphError> {
        for i in 0..self.n_vertices() {
            let (cols, ws) = self.csr.row(i);
            for (&j, &w) in cols.iter().zip(ws) {
                let j = j as usize;
                let (back_cols, back_ws) = self.csr.row(j);
                match back_cols.binary_search(&(i as u32)) {
                    Ok(p) if back_ws[p] == w => {}
                    _ => return Err(GraphError::Asymmetric { i, j }),
                }
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.csr.n_vertices()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.csr.indices.len() / 2
    }

    /// Number of stored directed entries (twice the edge count).
    pub fn n_entries(&self) -> usize {
        self.csr.indices.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.csr.offsets[i + 1] - self.csr.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> (&[u32], &[f32]) {
        self.csr.row(i)
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f32> {
        let (cols, ws) = self.csr.row(i);
        cols.binary_search(&(j as u32)).ok().map(|p| ws[p])
    }

    pub fn offsets(&self) -> &[usize] {
        &self.csr.offsets
    }

    pub fn indices(&self) -> &[u32] {
        &self.csr.indices
    }

    pub fn weights(&self) -> &[f32] {
        &self.csr.weights
    }

    /// Undirected edges as `(i, j, w)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        (0..self.n_vertices()).flat_map(move |i| {
            let (cols, ws) = self.csr.row(i);
            cols.iter()
                .zip(ws)
                .filter(move |(&j, _)| (j as usize) > i)
                .map(move |(&j, &w)| (i, j as usize, w))
        })
    }

    /// Keeps directed entries whose flag is set, then restores symmetry with
    /// [`symmetrize_max`]. `keep` is indexed like [`Manifold::indices`].
    pub(crate) fn filter_directed(&self, keep: &[bool]) -> Manifold {
        debug_assert_eq!(keep.len(), self.csr.indices.len());
        let n = self.n_vertices();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let kept = keep.iter().filter(|&&k| k).count();
        let mut indices = Vec::with_capacity(kept);
        let mut weights = Vec::with_capacity(kept);
        for i in 0..n {
            for p in self.csr.offsets[i]..self.csr.offsets[i + 1] {
                if keep[p] {
                    indices.push(self.csr.indices[p]);
                    weights.push(self.csr.weights[p]);
                }
            }
            offsets.push(indices.len());
        }
        let directed = DirectedWeightedGraph { csr: Csr { offsets, indices, weights } };
        let mut out = symmetrize_max(&directed)
            .expect("directions of a symmetric manifold carry equal weights");
        out.lens_history = self.lens_history.clone();
        out
    }

    /// SHA-256 over the CSR arrays, hex encoded. Lens history is not part of
    /// the digest.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_vertices() as u64).to_le_bytes());
        for &o in &self.csr.offsets {
            h.update((o as u64).to_le_bytes());
        }
        for &j in &self.csr.indices {
            h.update(j.to_le_bytes());
        }
        for &w in &self.csr.weights {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Probabilistic union: `w = a + b - a*b` with absent directions counted as 0.
pub fn symmetrize_union(g: &DirectedWeightedGraph) -> Manifold {
    let csr = g
        .csr
        .merge_with_transpose(|_, _, fwd, bwd| {
            let a = fwd.unwrap_or(0.0) as f64;
            let b = bwd.unwrap_or(0.0) as f64;
            let w = (a + b - a * b) as f32;
            Ok((w > 0.0).then_some(w.min(1.0)))
        })
        .expect("union merge is total");
    Manifold { csr, lens_history: Vec::new() }
}

/// Keep-if-either-direction symmetrisation for filtered views of a symmetric
/// manifold. The surviving pair keeps its original weight; unequal weights
/// in the two directions mean the input was not such a view.
pub fn symmetrize_max(g: &DirectedWeightedGraph) -> Result<Manifold, GraphError> {
    let csr = g.csr.merge_with_transpose(|i, j, fwd, bwd| match (fwd, bwd) {
        (Some(a), Some(b)) if a != b => Err(GraphError::Asymmetric { i, j }),
        (Some(w), _) | (None, Some(w)) => Ok(Some(w)),
        (None, None) => Ok(None),
    })?;
    Ok(Manifold { csr, lens_history: Vec::new() })
}

/// Connected component label per vertex, numbered `0..c` in order of each
/// component's lowest vertex.
pub fn connected_components(m: &Manifold) -> Vec<usize> {
    let n = m.n_vertices();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in m.neighbors(v).0 {
                let u = u as usize;
                if labels[u] == usize::MAX {
                    labels[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    labels
}

/// Number of distinct labels in a component labelling.
pub fn component_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}
