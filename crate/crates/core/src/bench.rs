//! Synthetic lens-filter benchmark.
//!
//! Points are drawn around ten vertices of the 10-dimensional unit
//! hypercube. Each timed cell measures the lens filter alone: the initial
//! manifold and any mask manifold are built before the clock starts, and no
//! layout is run.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::graph::Manifold;
use crate::knn::KnnOptions;
use crate::lenses::{apply_global_lens, apply_global_mask, apply_local_mask, build_mask, segment_lens, LensError, SegmentStrategy};
use crate::manifold::{build_manifold_with, ManifoldError};
use crate::metric::DistanceMetric;
pub use crate::synthetic::generate_hypercube;
use crate::synthetic::SyntheticError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("regression needs at least 3 points, got {0}")]
    TooFewObservations(usize),
    #[error("all x values are equal")]
    DegenerateX,
    #[error("benchmark grid is empty: {0}")]
    EmptyGrid(&'static str),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Lens(#[from] LensError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub n_neighbors: Vec<usize>,
    pub segments: Vec<usize>,
    pub strategies: Vec<SegmentStrategy>,
    pub mask_neighbors: Vec<usize>,
    pub local_neighbors: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100, 1_000, 10_000, 100_000],
            n_neighbors: vec![10, 20, 40],
            segments: vec![3, 6, 12, 24],
            strategies: vec![SegmentStrategy::Regular, SegmentStrategy::Balanced],
            mask_neighbors: vec![20, 40, 80, 160],
            local_neighbors: vec![5, 10, 20, 40],
            repeats: 5,
            seed: 0,
        }
    }
}

/// Which lens a row timed and with what parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "lens", rename_all = "snake_case")]
pub enum BenchLens {
    GlobalLens { n_segments: usize, strategy: SegmentStrategy },
    GlobalMask { mask_neighbors: usize },
    LocalMask { mask_neighbors: usize },
}

impl BenchLens {
    pub fn name(&self) -> &'static str {
        match self {
            BenchLens::GlobalLens { .. } => "global_lens",
            BenchLens::GlobalMask { .. } => "global_mask",
            BenchLens::LocalMask { .. } => "local_mask",
        }
    }

    pub fn parameter(&self) -> String {
        match self {
            BenchLens::GlobalLens { n_segments, strategy } => format!("{n_segments}/{strategy}"),
            BenchLens::GlobalMask { mask_neighbors } | BenchLens::LocalMask { mask_neighbors } => {
                mask_neighbors.to_string()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_points: usize,
    pub k_neighbors: usize,
    pub edge_count: usize,
    #[serde(flatten)]
    pub lens: BenchLens,
    pub repeat: usize,
    /// Time spent filtering edges.
    pub micros: f64,
    /// Time spent segmenting the lens column (global lens only); reported
    /// separately because it does not depend on the edge count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_micros: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval of the slope.
    pub slope_ci: [f64; 2],
    pub intercept_ci: [f64; 2],
    pub r_squared: f64,
}

/// Ordinary least squares with t-distribution 95% intervals.
pub fn fit_regression(points: &[(f64, f64)]) -> Result<Regression, BenchError> {
    let n = points.len();
    if n < 3 {
        return Err(BenchError::TooFewObservations(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BenchError::DegenerateX);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let s2 = sse / (nf - 2.0);
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("n >= 3").inverse_cdf(0.975);
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(Regression {
        n,
        slope,
        intercept,
        slope_ci: [slope - t * se_slope, slope + t * se_slope],
        intercept_ci: [intercept - t * se_intercept, intercept + t * se_intercept],
        r_squared,
    })
}

/// Median time against edge count for one lens setting. `n_points` is
/// `None` for fits pooled across sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub n_points: Option<usize>,
    #[serde(flatten)]
    pub lens: BenchLens,
    pub fit: Regression,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<GroupFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMedian {
    pub n_points: usize,
    pub k_neighbors: usize,
    pub edge_count: usize,
    #[serde(flatten)]
    pub lens: BenchLens,
    pub median_micros: f64,
}

impl BenchReport {
    /// Median time per (size, k, lens setting).
    pub fn medians(&self) -> Vec<CellMedian> {
        let mut cells: std::collections::BTreeMap<(usize, usize, BenchLens), (usize, Vec<f64>)> = Default::default();
        for r in &self.rows {
            cells
                .entry((r.n_points, r.k_neighbors, r.lens.clone()))
                .or_insert_with(|| (r.edge_count, Vec::new()))
                .1
                .push(r.micros);
        }
        cells
            .into_iter()
            .map(|((n_points, k_neighbors, lens), (edge_count, times))| CellMedian {
                n_points,
                k_neighbors,
                edge_count,
                lens,
                median_micros: median(times),
            })
            .collect()
    }

    /// Fits median time on edge count per (size, lens setting) and pooled
    /// over sizes. Groups with fewer than three distinct edge counts are
    /// skipped.
    pub fn compute_fits(&mut self) {
        let medians = self.medians();
        let mut groups: std::collections::BTreeMap<(Option<usize>, BenchLens), Vec<(f64, f64)>> = Default::default();
        for c in &medians {
            let p = (c.edge_count as f64, c.median_micros);
            groups.entry((Some(c.n_points), c.lens.clone())).or_default().push(p);
            groups.entry((None, c.lens.clone())).or_default().push(p);
        }
        self.fits = groups
            .into_iter()
            .filter_map(|((n_points, lens), pts)| {
                fit_regression(&pts).ok().map(|fit| GroupFit { n_points, lens, fit })
            })
            .collect();
    }

    /// One JSON object per timing row.
    pub fn to_jsonl(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).expect("row serialises") + "\n").collect()
    }

    /// Per-cell medians followed by the regression fits, as CSV.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("n_points,k_neighbors,edge_count,lens,parameter,median_micros\n");
        for c in self.medians() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.n_points,
                c.k_neighbors,
                c.edge_count,
                c.lens.name(),
                c.lens.parameter(),
                c.median_micros
            ));
        }
        s.push_str("\nn_points,lens,parameter,n,slope,slope_lo,slope_hi,intercept,r_squared\n");
        for f in &self.fits {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                f.n_points.map_or("all".to_string(), |n| n.to_string()),
                f.lens.name(),
                f.lens.parameter(),
                f.fit.n,
                f.fit.slope,
                f.fit.slope_ci[0],
                f.fit.slope_ci[1],
                f.fit.intercept,
                f.fit.r_squared
            ));
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Lens dimensions used by the benchmark.
const GLOBAL_DIMENSION: &str = "x0";
const MASK_DIMENSIONS: [&str; 2] = ["x0", "x1"];

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = std::hint::black_box(f());
    (out, start.elapsed().as_secs_f64() * 1e6)
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    run_benchmark_with_progress(config, &mut |_| {})
}

/// Runs every grid cell on one thread. Each lens configuration gets one
/// untimed warm-up run before its timed repeats. Cells whose `k` or mask
/// neighbour count does not fit below the dataset size are skipped.
pub fn run_benchmark_with_progress(
    config: &BenchConfig,
    progress: &mut dyn FnMut(&BenchRow),
) -> Result<BenchReport, BenchError> {
    if config.sizes.is_empty() || config.n_neighbors.is_empty() {
        return Err(BenchError::EmptyGrid("sizes and n_neighbors must be non-empty"));
    }
    if config.segments.is_empty() && config.mask_neighbors.is_empty() && config.local_neighbors.is_empty() {
        return Err(BenchError::EmptyGrid("no lens parameters"));
    }
    if !config.segments.is_empty() && config.strategies.is_empty() {
        return Err(BenchError::EmptyGrid("segments given without strategies"));
    }
    let options = KnnOptions { seed: config.seed, ..KnnOptions::default() };
    let metric = DistanceMetric::Euclidean;
    let mut report = BenchReport::default();
    for &n in &config.sizes {
        let (data, _) = generate_hypercube(n, config.seed)?;
        let global_values = data.column_by_name(GLOBAL_DIMENSION).expect("generated column");
        let mask_dims: Vec<String> = MASK_DIMENSIONS.iter().map(|s| s.to_string()).collect();
        let mask_lens = data.select(&mask_dims).expect("generated columns");
        let masks: Vec<(usize, Manifold)> = config
            .mask_neighbors
            .iter()
            .filter(|&&mk| skip_unless(mk < n, || format!("global mask {mk} >= N={n}")))
            .map(|&mk| Ok((mk, build_mask(&data, &mask_dims, metric, mk, &options)?)))
            .collect::<Result<_, BenchError>>()?;
        for &k in &config.n_neighbors {
            if !skip_unless(k < n, || format!("k={k} >= N={n}")) {
                continue;
            }
            log::info!("bench: N={n}, k={k}");
            let m = build_manifold_with(&data, k, metric, &options)?;
            let edge_count = m.n_edges();
            let mut cases = Vec::new();
            for &segments in &config.segments {
                for &strategy in &config.strategies {
                    if strategy == SegmentStrategy::Balanced && segments > n {
                        continue;
                    }
                    cases.push(BenchLens::GlobalLens { n_segments: segments, strategy });
                }
            }
            cases.extend(masks.iter().map(|(mk, _)| BenchLens::GlobalMask { mask_neighbors: *mk }));
            cases.extend(config.local_neighbors.iter().map(|&lk| BenchLens::LocalMask { mask_neighbors: lk }));
            let run_case = |lens: &BenchLens| -> Result<(f64, Option<f64>), BenchError> {
                match *lens {
                    BenchLens::GlobalLens { n_segments, strategy } => {
                        let (seg, seg_us) = time(|| segment_lens(&global_values, n_segments, strategy));
                        let seg = seg?;
                        let (out, us) = time(|| apply_global_lens(&m, &seg, false));
                        out?;
                        Ok((us, Some(seg_us)))
                    }
                    BenchLens::GlobalMask { mask_neighbors } => {
                        let mask = &masks.iter().find(|(mk, _)| *mk == mask_neighbors).expect("mask built").1;
                        let (out, us) = time(|| apply_global_mask(&m, mask));
                        out?;
                        Ok((us, None))
                    }
                    BenchLens::LocalMask { mask_neighbors } => {
                        let (out, us) = time(|| apply_local_mask(&m, &mask_lens, metric, mask_neighbors));
                        out?;
                        Ok((us, None))
                    }
                }
            };
            // One untimed pass, then repeats interleaved across cases so a
            // burst of outside load hits one repeat of many cells rather
            // than every repeat of one.
            for lens in &cases {
                run_case(lens)?;
            }
            for repeat in 0..config.repeats {
                for lens in &cases {
                    let (micros, segment_micros) = run_case(lens)?;
                    let row = BenchRow {
                        n_points: n,
                        k_neighbors: k,
                        edge_count,
                        lens: lens.clone(),
                        repeat,
                        micros,
                        segment_micros,
                    };
                    progress(&row);
                    report.rows.push(row);
                }
            }
        }
    }
    report.compute_fits();
    Ok(report)
}

fn skip_unless(ok: bool, why: impl FnOnce() -> String) -> bool {
    if !ok {
        log::warn!("bench: skipping cell, {}", why());
    }
    ok
}
