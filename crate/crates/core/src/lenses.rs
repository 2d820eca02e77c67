//! Lens functions: edge filters that separate points with differing lens
//! values while keeping the manifold's weights untouched.
//!
//! * [`apply_global_lens`] cuts one lens dimension into segments and keeps
//!   edges within the same or an adjacent segment.
//! * [`apply_global_mask`] keeps edges that also occur in a second manifold
//!   built over the lens dimensions.
//! * [`apply_local_mask`] keeps, for every point, its `k_mask` incident edges
//!   that are shortest in lens distance.
//!
//! The low-level filters leave `lens_history` as they found it;
//! [`apply_lens`] resolves a [`LensSpec`] against a dataset, runs the filter
//! and records the spec.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, Dataset};
use crate::graph::{Csr, Manifold};
use crate::knn::KnnOptions;
use crate::manifold::{build_manifold_with, ManifoldError};
use crate::metric::{DistanceMetric, PreparedPoints};

#[derive(Debug, Error, PartialEq)]
pub enum LensError {
    #[error("lens values must be finite (index {0})")]
    NonFiniteLens(usize),
    #[error("{n_segments} balanced segments requested for {n_points} points")]
    TooManySegments { n_segments: usize, n_points: usize },
    #[error("invalid lens parameter: {0}")]
    InvalidParameter(String),
    #[error("segment assignment covers {found} points, manifold has {expected}")]
    SegmentCountMismatch { expected: usize, found: usize },
    #[error("vertex count mismatch: manifold has {expected}, got {found}")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("mask manifold: {0}")]
    Mask(#[from] ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SegmentStrategy {
    /// Equal-width intervals over `[min, max]`.
    #[default]
    Regular,
    /// Equal-population runs of the sorted values.
    Balanced,
}

impl std::str::FromStr for SegmentStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(SegmentStrategy::Regular),
            "balanced" => Ok(SegmentStrategy::Balanced),
            other => Err(format!("unknown segment strategy `{other}`")),
        }
    }
}

impl std::fmt::Display for SegmentStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SegmentStrategy::Regular => "regular",
            SegmentStrategy::Balanced => "balanced",
        })
    }
}

/// One lens application. Dimensions name dataset columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LensSpec {
    GlobalLens {
        dimension: String,
        n_segments: usize,
        #[serde(default)]
        strategy: SegmentStrategy,
        #[serde(default)]
        circular: bool,
    },
    GlobalMask {
        dimensions: Vec<String>,
        #[serde(default)]
        metric: DistanceMetric,
        mask_neighbors: usize,
    },
    LocalMask {
        dimensions: Vec<String>,
        #[serde(default)]
        metric: DistanceMetric,
        mask_neighbors: usize,
    },
}

impl LensSpec {
    /// Checks parameters and that every referenced column exists.
    pub fn validate(&self, data: &Dataset) -> Result<(), LensError> {
        match self {
            LensSpec::GlobalLens { dimension, n_segments, .. } => {
                if *n_segments == 0 {
                    return Err(LensError::InvalidParameter("n_segments must be >= 1".into()));
                }
                data.column_index(dimension)?;
            }
            LensSpec::GlobalMask { dimensions, mask_neighbors, .. }
            | LensSpec::LocalMask { dimensions, mask_neighbors, .. } => {
                if *mask_neighbors == 0 {
                    return Err(LensError::InvalidParameter("mask_neighbors must be >= 1".into()));
                }
                if dimensions.is_empty() {
                    return Err(LensError::InvalidParameter("dimensions must not be empty".into()));
                }
                for d in dimensions {
                    data.column_index(d)?;
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LensSpec::GlobalLens { .. } => "global_lens",
            LensSpec::GlobalMask { .. } => "global_mask",
            LensSpec::LocalMask { .. } => "local_mask",
        }
    }
}

/// Segment id per point plus the cut points that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAssignment {
    pub segments: Vec<u32>,
    pub n_segments: usize,
    pub strategy: SegmentStrategy,
    /// `n_segments + 1` edges. For balanced segments these are the lowest
    /// value of each run followed by the overall maximum.
    pub boundaries: Vec<f64>,
}

pub fn segment_lens(
    values: &[f64],
    n_segments: usize,
    strategy: SegmentStrategy,
) -> Result<SegmentAssignment, LensError> {
    if n_segments == 0 {
        return Err(LensError::InvalidParameter("n_segments must be >= 1".into()));
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(LensError::NonFiniteLens(p));
    }
    match strategy {
        SegmentStrategy::Regular => Ok(regular_segments(values, n_segments)),
        SegmentStrategy::Balanced => balanced_segments(values, n_segments),
    }
}

fn regular_segments(values: &[f64], n_segments: usize) -> SegmentAssignment {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let width = (hi - lo) / n_segments as f64;
    let mut boundaries: Vec<f64> = (0..n_segments).map(|s| lo + s as f64 * width).collect();
    boundaries.push(hi);
    let last = n_segments - 1;
    let segments = values
        .iter()
        .map(|&v| {
            if width == 0.0 {
                return 0;
            }
            // Half-open [b_s, b_{s+1}); the last segment is closed at max.
            let mut s = (((v - lo) / width).floor() as usize).min(last);
            while s > 0 && v < boundaries[s] {
                s -= 1;
            }
            while s < last && v >= boundaries[s + 1] {
                s += 1;
            }
            s as u32
        })
        .collect();
    SegmentAssignment { segments, n_segments, strategy: SegmentStrategy::Regular, boundaries }
}

fn balanced_segments(values: &[f64], n_segments: usize) -> Result<SegmentAssignment, LensError> {
    let n = values.len();
    if n_segments > n {
        return Err(LensError::TooManySegments { n_segments, n_points: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let base = n / n_segments;
    let extra = n % n_segments;
    let mut segments = vec![0u32; n];
    let mut boundaries = Vec::with_capacity(n_segments + 1);
    let mut start = 0;
    for s in 0..n_segments {
        let size = base + usize::from(s < extra);
        boundaries.push(values[order[start]]);
        for &p in &order[start..start + size] {
            segments[p] = s as u32;
        }
        start += size;
    }
    boundaries.push(values[order[n - 1]]);
    Ok(SegmentAssignment { segments, n_segments, strategy: SegmentStrategy::Balanced, boundaries })
}

/// Whether segments `a` and `b` may stay connected.
#[inline]
pub fn segments_adjacent(a: u32, b: u32, n_segments: usize, circular: bool) -> bool {
    let gap = a.abs_diff(b);
    gap <= 1 || (circular && n_segments > 1 && gap as usize == n_segments - 1)
}

/// Keeps edges whose endpoints lie in the same or neighbouring segments;
/// with `circular`, the first and last segment are neighbours as well.
pub fn apply_global_lens(
    m: &Manifold,
    seg: &SegmentAssignment,
    circular: bool,
) -> Result<Manifold, LensError> {
    let n = m.n_vertices();
    if seg.segments.len() != n {
        return Err(LensError::SegmentCountMismatch { expected: n, found: seg.segments.len() });
    }
    let s = &seg.segments;
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut indices = Vec::with_capacity(m.n_entries());
    let mut weights = Vec::with_capacity(m.n_entries());
    for i in 0..n {
        let (cols, ws) = m.neighbors(i);
        for (&j, &w) in cols.iter().zip(ws) {
            if segments_adjacent(s[i], s[j as usize], seg.n_segments, circular) {
                indices.push(j);
                weights.push(w);
            }
        }
        offsets.push(indices.len());
    }
    // The keep rule is symmetric in (i, j), so the result already is.
    Ok(Manifold { csr: Csr { offsets, indices, weights }, lens_history: m.lens_history.clone() })
}

/// Keeps the edges of `m` that also occur in `mask`. Weights come from `m`;
/// the mask's weights are ignored.
pub fn apply_global_mask(m: &Manifold, mask: &Manifold) -> Result<Manifold, LensError> {
    let n = m.n_vertices();
    if mask.n_vertices() != n {
        return Err(LensError::VertexCountMismatch { expected: n, found: mask.n_vertices() });
    }
    let keep: Vec<bool> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mine = m.neighbors(i).0;
            let theirs = mask.neighbors(i).0;
            let mut t = 0;
            mine.iter().map(move |&j| {
                while t < theirs.len() && theirs[t] < j {
                    t += 1;
                }
                t < theirs.len() && theirs[t] == j
            })
        })
        .collect();
    Ok(m.filter_directed(&keep))
}

/// Per point, keeps the `k_mask` incident edges with the smallest lens
/// distance (ties by neighbour index), then restores symmetry by keeping an
/// edge chosen from either side.
///
/// `lens` holds one row of lens values per vertex.
pub fn apply_local_mask(
    m: &Manifold,
    lens: &Dataset,
    metric: DistanceMetric,
    k_mask: usize,
) -> Result<Manifold, LensError> {
    let keep = local_mask_choices(m, lens, metric, k_mask)?;
    Ok(m.filter_directed(&keep))
}

/// Per-direction keep flags of the local mask, before symmetrisation.
pub fn local_mask_choices(
    m: &Manifold,
    lens: &Dataset,
    metric: DistanceMetric,
    k_mask: usize,
) -> Result<Vec<bool>, LensError> {
    let n = m.n_vertices();
    if k_mask == 0 {
        return Err(LensError::InvalidParameter("k_mask must be >= 1".into()));
    }
    if lens.n_rows() != n {
        return Err(LensError::VertexCountMismatch { expected: n, found: lens.n_rows() });
    }
    if let Some(p) = lens.values().iter().position(|v| !v.is_finite()) {
        return Err(LensError::NonFiniteLens(p / lens.n_cols().max(1)));
    }
    let points = PreparedPoints::new(metric, n, lens.n_cols(), lens.values());
    Ok((0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let cols = m.neighbors(i).0;
            let mut keep = vec![true; cols.len()];
            if cols.len() > k_mask {
                let mut ranked: Vec<(f64, u32, usize)> = cols
                    .iter()
                    .enumerate()
                    .map(|(p, &j)| (points.distance(i, j as usize), j, p))
                    .collect();
                ranked.select_nth_unstable_by(k_mask - 1, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
                keep.iter_mut().for_each(|k| *k = false);
                for &(_, _, p) in &ranked[..k_mask] {
                    keep[p] = true;
                }
            }
            keep
        })
        .collect())
}

/// Rescales weights so each vertex's strongest edge has weight 1.
///
/// A pair `(i, j)` becomes `max(w / max_i, w / max_j)`; isolated vertices
/// are untouched and a manifold that already has unit row maxima is a
/// fixpoint.
pub fn normalize_weights(m: &Manifold) -> Manifold {
    let n = m.n_vertices();
    let row_max: Vec<f32> =
        (0..n).map(|i| m.neighbors(i).1.iter().copied().fold(0.0, f32::max)).collect();
    let mut out = m.clone();
    for i in 0..n {
        for p in out.csr.offsets[i]..out.csr.offsets[i + 1] {
            let j = out.csr.indices[p] as usize;
            let scale = row_max[i].min(row_max[j]);
            out.csr.weights[p] = (out.csr.weights[p] / scale).min(1.0);
        }
    }
    out
}

/// Builds the manifold a global mask filters against.
pub fn build_mask(
    data: &Dataset,
    dimensions: &[String],
    metric: DistanceMetric,
    mask_neighbors: usize,
    options: &KnnOptions,
) -> Result<Manifold, LensError> {
    let lens = data.select(dimensions)?;
    Ok(build_manifold_with(&lens, mask_neighbors, metric, options)?)
}

/// Applies one lens described by `spec` and appends it to the history.
pub fn apply_lens(m: &Manifold, spec: &LensSpec, data: &Dataset) -> Result<Manifold, LensError> {
    if data.n_rows() != m.n_vertices() {
        return Err(LensError::VertexCountMismatch { expected: m.n_vertices(), found: data.n_rows() });
    }
    spec.validate(data)?;
    let mut out = match spec {
        LensSpec::GlobalLens { dimension, n_segments, strategy, circular } => {
            let values = data.column_by_name(dimension)?;
            let seg = segment_lens(&values, *n_segments, *strategy)?;
            apply_global_lens(m, &seg, *circular)?
        }
        LensSpec::GlobalMask { dimensions, metric, mask_neighbors } => {
            let mask = build_mask(data, dimensions, *metric, *mask_neighbors, &KnnOptions::default())?;
            apply_global_mask(m, &mask)?
        }
        LensSpec::LocalMask { dimensions, metric, mask_neighbors } => {
            let lens = data.select(dimensions)?;
            apply_local_mask(m, &lens, *metric, *mask_neighbors)?
        }
    };
    out.lens_history.push(spec.clone());
    Ok(out)
}

/// Applies lenses left to right.
pub fn apply_lens_sequence(
    m: &Manifold,
    specs: &[LensSpec],
    data: &Dataset,
) -> Result<Manifold, LensError> {
    specs.iter().try_fold(m.clone(), |acc, spec| apply_lens(&acc, spec, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn pairs(m: &Manifold) -> BTreeSet<(usize, usize)> {
        m.edges().map(|(i, j, _)| (i, j)).collect()
    }

    fn triangle() -> Manifold {
        Manifold::from_undirected_edges(3, [(0, 1, 0.5), (1, 2, 0.25), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn regular_boundary_goes_up() {
        let seg = segment_lens(&[0.0, 0.1, 0.45, 0.5, 0.9, 1.0], 2, SegmentStrategy::Regular).unwrap();
        assert_eq!(seg.segments, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(seg.boundaries, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn regular_keeps_empty_segments() {
        let seg = segment_lens(&[0.0, 0.05, 0.95, 1.0], 4, SegmentStrategy::Regular).unwrap();
        assert_eq!(seg.segments, vec![0, 0, 3, 3]);
    }

    #[test]
    fn single_segment_and_constant_values() {
        for strategy in [SegmentStrategy::Regular, SegmentStrategy::Balanced] {
            let seg = segment_lens(&[3.0, -1.0, 8.0], 1, strategy).unwrap();
            assert_eq!(seg.segments, vec![0, 0, 0]);
        }
        let seg = segment_lens(&[2.0; 4], 3, SegmentStrategy::Regular).unwrap();
        assert_eq!(seg.segments, vec![0; 4]);
    }

    #[test]
    fn balanced_sizes_and_ties() {
        let seg = segment_lens(&[5.0, 1.0, 3.0, 2.0, 6.0, 4.0], 3, SegmentStrategy::Balanced).unwrap();
        let mut sizes = [0; 3];
        seg.segments.iter().for_each(|&s| sizes[s as usize] += 1);
        assert_eq!(sizes, [2, 2, 2]);
        assert_eq!(seg.segments, vec![2, 0, 1, 0, 2, 1]);
        // Ties split by original index.
        let seg = segment_lens(&[1.0, 1.0, 1.0, 1.0, 1.0], 2, SegmentStrategy::Balanced).unwrap();
        assert_eq!(seg.segments, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn segmentation_errors() {
        assert_eq!(
            segment_lens(&[1.0, 2.0], 3, SegmentStrategy::Balanced).unwrap_err(),
            LensError::TooManySegments { n_segments: 3, n_points: 2 }
        );
        assert_eq!(
            segment_lens(&[1.0, f64::NAN], 1, SegmentStrategy::Regular).unwrap_err(),
            LensError::NonFiniteLens(1)
        );
        assert!(segment_lens(&[1.0], 0, SegmentStrategy::Regular).is_err());
    }

    #[test]
    fn global_lens_drops_distant_segments() {
        let seg = SegmentAssignment {
            segments: vec![0, 1, 2],
            n_segments: 3,
            strategy: SegmentStrategy::Regular,
            boundaries: vec![],
        };
        let out = apply_global_lens(&triangle(), &seg, false).unwrap();
        assert_eq!(pairs(&out), BTreeSet::from([(0, 1), (1, 2)]));
        assert_eq!(out.weight(1, 2), Some(0.25));
    }

    #[test]
    fn circular_lens_wraps() {
        let m = Manifold::from_undirected_edges(2, [(0, 1, 0.7)]).unwrap();
        let seg = SegmentAssignment {
            segments: vec![0, 2],
            n_segments: 3,
            strategy: SegmentStrategy::Regular,
            boundaries: vec![],
        };
        assert_eq!(apply_global_lens(&m, &seg, true).unwrap().n_edges(), 1);
        assert_eq!(apply_global_lens(&m, &seg, false).unwrap().n_edges(), 0);
    }

    #[test]
    fn global_lens_segment_mismatch() {
        let seg = segment_lens(&[0.0, 1.0], 2, SegmentStrategy::Regular).unwrap();
        assert_eq!(
            apply_global_lens(&triangle(), &seg, false).unwrap_err(),
            LensError::SegmentCountMismatch { expected: 3, found: 2 }
        );
    }

    #[test]
    fn global_mask_intersects() {
        let m = Manifold::from_undirected_edges(3, [(0, 1, 0.5), (0, 2, 0.5)]).unwrap();
        let mask = Manifold::from_undirected_edges(3, [(0, 1, 0.1), (1, 2, 0.9)]).unwrap();
        let out = apply_global_mask(&m, &mask).unwrap();
        assert_eq!(pairs(&out), BTreeSet::from([(0, 1)]));
        assert_eq!(out.weight(0, 1), Some(0.5));
        assert_eq!(apply_global_mask(&m, &m).unwrap(), m);
        let disjoint = Manifold::from_undirected_edges(3, [(1, 2, 0.9)]).unwrap();
        let empty = apply_global_mask(&m, &disjoint).unwrap();
        assert_eq!((empty.n_vertices(), empty.n_edges()), (3, 0));
        assert!(matches!(
            apply_global_mask(&m, &Manifold::empty(2)),
            Err(LensError::VertexCountMismatch { .. })
        ));
    }

    #[test]
    fn local_mask_ranks_by_lens_distance() {
        let m = Manifold::from_undirected_edges(4, [(0, 1, 0.3), (0, 2, 0.6), (0, 3, 0.9)]).unwrap();
        let lens = Dataset::from_matrix(4, 1, vec![0.0, 0.5, 0.1, 0.9]).unwrap();
        let keep = local_mask_choices(&m, &lens, DistanceMetric::Euclidean, 2).unwrap();
        // Row 0 lists 1, 2, 3 at lens distances 0.5, 0.1, 0.9.
        assert_eq!(&keep[0..3], &[true, true, false]);
        let out = apply_local_mask(&m, &lens, DistanceMetric::Euclidean, 2).unwrap();
        // Vertex 3 keeps its only edge, so (0, 3) survives symmetrisation.
        assert_eq!(out, m);
        let out = apply_local_mask(&m, &lens, DistanceMetric::Euclidean, 5).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn local_mask_ties_prefer_low_indices() {
        let m = Manifold::from_undirected_edges(
            5,
            [(0, 4, 0.5), (0, 3, 0.5), (0, 1, 0.5), (0, 2, 0.5), (1, 2, 0.5)],
        )
        .unwrap();
        let lens = Dataset::from_matrix(5, 1, vec![1.0; 5]).unwrap();
        let keep = local_mask_choices(&m, &lens, DistanceMetric::Euclidean, 2).unwrap();
        assert_eq!(&keep[0..4], &[true, true, false, false]);
    }

    #[test]
    fn normalize_divides_by_row_max() {
        let m = Manifold::from_undirected_edges(4, [(0, 1, 0.2), (0, 2, 0.1), (1, 3, 0.4)]).unwrap();
        let out = normalize_weights(&m);
        // Vertex 0: [0.2, 0.1] / 0.2; vertex 2 has max 0.1 so (0, 2) -> 1.
        assert_eq!(out.weight(0, 1), Some(1.0));
        assert_eq!(out.weight(0, 2), Some(1.0));
        assert_eq!(out.weight(1, 3), Some(1.0));
        let m = Manifold::from_undirected_edges(5, [(0, 1, 1.0), (0, 2, 0.5), (1, 2, 1.0), (2, 3, 0.25), (3, 0, 1.0)])
            .unwrap();
        assert_eq!(normalize_weights(&m), m);
        let isolated = Manifold::from_undirected_edges(3, [(0, 1, 0.5)]).unwrap();
        assert_eq!(normalize_weights(&isolated).degree(2), 0);
    }

    #[test]
    fn lens_spec_json() {
        let spec: LensSpec = serde_json::from_str(
            r#"{"type":"global_lens","dimension":"year","n_segments":24,"strategy":"balanced"}"#,
        )
        .unwrap();
        assert_eq!(
            spec,
            LensSpec::GlobalLens {
                dimension: "year".into(),
                n_segments: 24,
                strategy: SegmentStrategy::Balanced,
                circular: false
            }
        );
        let json = serde_json::to_string(&LensSpec::LocalMask {
            dimensions: vec!["so2".into()],
            metric: DistanceMetric::Euclidean,
            mask_neighbors: 10,
        })
        .unwrap();
        assert_eq!(
            json,
            r#"{"type":"local_mask","dimensions":["so2"],"metric":"euclidean","mask_neighbors":10}"#
        );
    }

    #[test]
    fn empty_sequence_is_identity_and_history_records() {
        let data = Dataset::from_rows(vec!["v".into()], &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let m = triangle();
        assert_eq!(apply_lens_sequence(&m, &[], &data).unwrap(), m);
        let spec = LensSpec::GlobalLens {
            dimension: "v".into(),
            n_segments: 3,
            strategy: SegmentStrategy::Regular,
            circular: false,
        };
        let out = apply_lens_sequence(&m, &[spec.clone(), spec.clone()], &data).unwrap();
        assert_eq!(out.lens_history, vec![spec.clone(), spec]);
        assert!(m.lens_history.is_empty());
        let bad = LensSpec::LocalMask { dimensions: vec!["nope".into()], metric: DistanceMetric::Euclidean, mask_neighbors: 1 };
        assert!(matches!(apply_lens(&m, &bad, &data), Err(LensError::Data(DataError::UnknownColumn(_)))));
    }
}
