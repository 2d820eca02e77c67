//! Two-dimensional layout of a manifold.
//!
//! [`optimize_layout`] runs the sampling-based SGD: every stored edge fires
//! on a fixed schedule with interval `1 / w`, pulls its endpoints together
//! along the gradient of `log nu`, and pushes the head away from
//! `negative_samples` uniformly drawn vertices. The learning rate decays
//! linearly to zero over the run.

mod curve;
mod spectral;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{fit_curve, fit_gradient, Curve};
pub use spectral::spectral_init;

use crate::graph::Manifold;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("manifold has no vertices")]
    EmptyManifold,
    #[error("embedding has {found} points, manifold has {expected} vertices")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error("coordinates became non-finite in epoch {epoch}")]
    NonFiniteCoordinates { epoch: usize },
    #[error("curve fit diverged for min_dist={min_dist}, spread={spread}")]
    FitDiverged { min_dist: f64, spread: f64 },
    #[error("invalid layout parameter: {0}")]
    InvalidParameter(String),
}

/// Epoch count used when [`LayoutParams::n_epochs`] is unset.
pub fn default_epochs(n_vertices: usize) -> usize {
    if n_vertices <= 10_000 {
        500
    } else {
        200
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    /// `None` picks [`default_epochs`] for the manifold size.
    pub n_epochs: Option<usize>,
    pub learn_rate: f64,
    pub negative_samples: usize,
    pub repulsion_strength: f64,
    pub min_dist: f64,
    pub spread: f64,
    /// Explicit curve parameters; fitted from `min_dist`/`spread` when unset.
    pub curve_a: Option<f64>,
    pub curve_b: Option<f64>,
    pub seed: u64,
    /// Single worker with a seeded RNG: bit-reproducible output.
    pub deterministic: bool,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            n_epochs: None,
            learn_rate: 1.0,
            negative_samples: 5,
            repulsion_strength: 1.0,
            min_dist: 0.1,
            spread: 1.0,
            curve_a: None,
            curve_b: None,
            seed: 0,
            deterministic: true,
        }
    }
}

impl LayoutParams {
    /// Defaults for re-embedding a lensed manifold: repulsion halved to
    /// balance the attraction lost with the removed edges.
    pub fn for_reembed() -> Self {
        LayoutParams { repulsion_strength: 0.5, ..Self::default() }
    }

    pub fn curve(&self) -> Result<Curve, LayoutError> {
        match (self.curve_a, self.curve_b) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Ok(Curve { a, b }),
            (None, None) => fit_curve(self.min_dist, self.spread),
            _ => Err(LayoutError::InvalidParameter("curve_a and curve_b must both be positive or both unset".into())),
        }
    }

    pub fn epochs_for(&self, n_vertices: usize) -> usize {
        self.n_epochs.unwrap_or_else(|| default_epochs(n_vertices))
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(LayoutError::InvalidParameter("learn_rate must be positive".into()));
        }
        if !(self.repulsion_strength >= 0.0 && self.repulsion_strength.is_finite()) {
            return Err(LayoutError::InvalidParameter("repulsion_strength must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Spectral,
    WarmStart,
    Random,
}

/// Two-dimensional coordinates for every vertex of a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// [`Manifold::digest`] of the graph the layout was computed for.
    pub source_digest: String,
    pub init: InitMode,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

pub(crate) fn random_coords(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect()
}

/// Uniform random coordinates in `[-10, 10]^2`.
pub fn random_init(m: &Manifold, seed: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Embedding { coords: random_coords(m.n_vertices(), &mut rng), source_digest: m.digest(), init: InitMode::Random }
}

/// Firing schedule: entry `e` fires for the `t`-th time (from 0) in the
/// first epoch `>= t / w_e`, so over `n` epochs it fires `floor(n*w)` or
/// `ceil(n*w)` times.
#[derive(Debug, Clone)]
pub struct EdgeSchedule {
    interval: Vec<f64>,
    fired: Vec<u32>,
}

impl EdgeSchedule {
    pub fn new(weights: &[f32]) -> Self {
        EdgeSchedule {
            interval: weights.iter().map(|&w| 1.0 / w as f64).collect(),
            fired: vec![0; weights.len()],
        }
    }

    /// Whether entry `e` fires in `epoch`; records the firing.
    #[inline]
    pub fn fire(&mut self, e: usize, epoch: usize) -> bool {
        fire(&self.interval[e], &mut self.fired[e], epoch)
    }

    pub fn counts(&self) -> &[u32] {
        &self.fired
    }
}

#[inline]
fn fire(interval: &f64, fired: &mut u32, epoch: usize) -> bool {
    if epoch as f64 >= *fired as f64 * interval {
        *fired += 1;
        true
    } else {
        false
    }
}

#[inline]
fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

pub fn optimize_layout(
    m: &Manifold,
    init: &Embedding,
    p: &LayoutParams,
) -> Result<Embedding, LayoutError> {
    optimize_layout_with_progress(m, init, p, &mut |_, _| {})
}

/// [`optimize_layout`] reporting `(epochs done, total)` after every epoch.
pub fn optimize_layout_with_progress(
    m: &Manifold,
    init: &Embedding,
    p: &LayoutParams,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<Embedding, LayoutError> {
    let n = m.n_vertices();
    if init.len() != n {
        return Err(LayoutError::VertexCountMismatch { expected: n, found: init.len() });
    }
    p.validate()?;
    let curve = p.curve()?;
    let n_epochs = p.epochs_for(n);
    let mut out = Embedding { coords: init.coords.clone(), source_digest: m.digest(), init: init.init };
    if n_epochs == 0 || m.n_entries() == 0 {
        progress(n_epochs, n_epochs);
        return Ok(out);
    }
    let heads: Vec<u32> = (0..n).flat_map(|i| std::iter::repeat_n(i as u32, m.degree(i))).collect();
    let tails = m.indices();
    let mut schedule = EdgeSchedule::new(m.weights());

    if p.deterministic {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let y = &mut out.coords;
        for epoch in 0..n_epochs {
            let alpha = p.learn_rate * (1.0 - epoch as f64 / n_epochs as f64);
            for e in 0..tails.len() {
                if !schedule.fire(e, epoch) {
                    continue;
                }
                let (i, j) = (heads[e] as usize, tails[e] as usize);
                attract(y, i, j, &curve, alpha);
                for _ in 0..p.negative_samples {
                    let k = rng.gen_range(0..n);
                    if k != i {
                        repel(y, i, k, &curve, p.repulsion_strength, alpha);
                    }
                }
            }
            check_finite(y, epoch)?;
            progress(epoch + 1, n_epochs);
        }
    } else {
        // Lock-free shared coordinates; concurrent updates may interleave.
        let shared: Vec<[AtomicU64; 2]> = out
            .coords
            .iter()
            .map(|c| [AtomicU64::new(c[0].to_bits()), AtomicU64::new(c[1].to_bits())])
            .collect();
        const CHUNK: usize = 4096;
        for epoch in 0..n_epochs {
            let alpha = p.learn_rate * (1.0 - epoch as f64 / n_epochs as f64);
            schedule
                .fired
                .par_chunks_mut(CHUNK)
                .zip(schedule.interval.par_chunks(CHUNK))
                .enumerate()
                .for_each(|(chunk, (fired, interval))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        p.seed ^ ((epoch as u64) << 32) ^ chunk as u64,
                    );
                    let base = chunk * CHUNK;
                    for (o, (f, iv)) in fired.iter_mut().zip(interval).enumerate() {
                        if !fire(iv, f, epoch) {
                            continue;
                        }
                        let e = base + o;
                        let (i, j) = (heads[e] as usize, tails[e] as usize);
                        shared_attract(&shared, i, j, &curve, alpha);
                        for _ in 0..p.negative_samples {
                            let k = rng.gen_range(0..n);
                            if k != i {
                                shared_repel(&shared, i, k, &curve, p.repulsion_strength, alpha);
                            }
                        }
                    }
                });
            let snapshot = load_all(&shared);
            check_finite(&snapshot, epoch)?;
            progress(epoch + 1, n_epochs);
        }
        out.coords = load_all(&shared);
    }
    Ok(out)
}

#[inline]
fn attract(y: &mut [[f64; 2]], i: usize, j: usize, curve: &Curve, alpha: f64) {
    let diff = [y[i][0] - y[j][0], y[i][1] - y[j][1]];
    let coeff = curve.attraction_coefficient(diff[0] * diff[0] + diff[1] * diff[1]);
    for d in 0..2 {
        let g = clip(coeff * diff[d]) * alpha;
        y[i][d] += g;
        y[j][d] -= g;
    }
}

#[inline]
fn repel(y: &mut [[f64; 2]], i: usize, k: usize, curve: &Curve, strength: f64, alpha: f64) {
    let diff = [y[i][0] - y[k][0], y[i][1] - y[k][1]];
    let coeff = curve.repulsion_coefficient(diff[0] * diff[0] + diff[1] * diff[1], strength);
    for d in 0..2 {
        y[i][d] += clip(coeff * diff[d]) * alpha;
    }
}

#[inline]
fn load(shared: &[[AtomicU64; 2]], i: usize) -> [f64; 2] {
    [
        f64::from_bits(shared[i][0].load(Ordering::Relaxed)),
        f64::from_bits(shared[i][1].load(Ordering::Relaxed)),
    ]
}

#[inline]
fn store(shared: &[[AtomicU64; 2]], i: usize, v: [f64; 2]) {
    shared[i][0].store(v[0].to_bits(), Ordering::Relaxed);
    shared[i][1].store(v[1].to_bits(), Ordering::Relaxed);
}

fn load_all(shared: &[[AtomicU64; 2]]) -> Vec<[f64; 2]> {
    (0..shared.len()).map(|i| load(shared, i)).collect()
}

fn shared_attract(shared: &[[AtomicU64; 2]], i: usize, j: usize, curve: &Curve, alpha: f64) {
    let (mut yi, mut yj) = (load(shared, i), load(shared, j));
    let diff = [yi[0] - yj[0], yi[1] - yj[1]];
    let coeff = curve.attraction_coefficient(diff[0] * diff[0] + diff[1] * diff[1]);
    for d in 0..2 {
        let g = clip(coeff * diff[d]) * alpha;
        yi[d] += g;
        yj[d] -= g;
    }
    store(shared, i, yi);
    store(shared, j, yj);
}

fn shared_repel(shared: &[[AtomicU64; 2]], i: usize, k: usize, curve: &Curve, strength: f64, alpha: f64) {
    let (mut yi, yk) = (load(shared, i), load(shared, k));
    let diff = [yi[0] - yk[0], yi[1] - yk[1]];
    let coeff = curve.repulsion_coefficient(diff[0] * diff[0] + diff[1] * diff[1], strength);
    for d in 0..2 {
        yi[d] += clip(coeff * diff[d]) * alpha;
    }
    store(shared, i, yi);
}

fn check_finite(y: &[[f64; 2]], epoch: usize) -> Result<(), LayoutError> {
    if y.iter().all(|c| c[0].is_finite() && c[1].is_finite()) {
        Ok(())
    } else {
        Err(LayoutError::NonFiniteCoordinates { epoch })
    }
}

/// Re-embeds a lensed manifold starting from a previous layout.
///
/// Components created by the lens are not pre-separated; the optimisation
/// moves them apart. Pair with [`LayoutParams::for_reembed`].
pub fn reembed(
    lensed: &Manifold,
    previous: &Embedding,
    p: &LayoutParams,
) -> Result<Embedding, LayoutError> {
    let init = Embedding { init: InitMode::WarmStart, ..previous.clone() };
    optimize_layout(lensed, &init, p)
}

/// Translates components so their bounding boxes stack vertically in label
/// order, separated by 10% of the tallest box. A single component is
/// returned unchanged.
pub fn separate_components(e: &Embedding, labels: &[usize]) -> Embedding {
    let n_comp = labels.iter().max().map_or(0, |&c| c + 1);
    if n_comp <= 1 {
        return e.clone();
    }
    let mut lo = vec![[f64::INFINITY; 2]; n_comp];
    let mut hi = vec![[f64::NEG_INFINITY; 2]; n_comp];
    for (c, &l) in e.coords.iter().zip(labels) {
        for d in 0..2 {
            lo[l][d] = lo[l][d].min(c[d]);
            hi[l][d] = hi[l][d].max(c[d]);
        }
    }
    let tallest = (0..n_comp)
        .filter(|&c| lo[c][1].is_finite())
        .map(|c| hi[c][1] - lo[c][1])
        .fold(0.0, f64::max);
    let gap = if tallest > 0.0 { 0.1 * tallest } else { 1.0 };
    // Component 0 on top; each box centred on x = 0.
    let mut shift = vec![[0.0; 2]; n_comp];
    let mut top = 0.0;
    for c in 0..n_comp {
        if !lo[c][1].is_finite() {
            continue;
        }
        shift[c] = [-0.5 * (lo[c][0] + hi[c][0]), top - hi[c][1]];
        top -= (hi[c][1] - lo[c][1]) + gap;
    }
    let coords = e
        .coords
        .iter()
        .zip(labels)
        .map(|(c, &l)| [c[0] + shift[l][0], c[1] + shift[l][1]])
        .collect();
    Embedding { coords, source_digest: e.source_digest.clone(), init: e.init }
}
