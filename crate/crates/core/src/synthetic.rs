//! Seeded synthetic datasets.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{ColumnRole, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("need at least {HYPERCUBE_CLUSTERS} points, got {0}")]
    TooFewPoints(usize),
}

pub const HYPERCUBE_DIM: usize = 10;
pub const HYPERCUBE_CLUSTERS: usize = 10;
pub const HYPERCUBE_NOISE: f64 = 0.1;

/// Dataset with columns `x0..x9` and per-point cluster labels `i % 10`.
pub fn generate_hypercube(n_points: usize, seed: u64) -> Result<(Dataset, Vec<usize>), SyntheticError> {
    generate_hypercube_with_noise(n_points, seed, HYPERCUBE_NOISE)
}

pub fn generate_hypercube_with_noise(
    n_points: usize,
    seed: u64,
    sigma: f64,
) -> Result<(Dataset, Vec<usize>), SyntheticError> {
    if n_points < HYPERCUBE_CLUSTERS {
        return Err(SyntheticError::TooFewPoints(n_points));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<[f64; HYPERCUBE_DIM]> = sample(&mut rng, 1 << HYPERCUBE_DIM, HYPERCUBE_CLUSTERS)
        .into_iter()
        .map(|v| std::array::from_fn(|b| ((v >> b) & 1) as f64))
        .collect();
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let labels: Vec<usize> = (0..n_points).map(|i| i % HYPERCUBE_CLUSTERS).collect();
    let mut values = Vec::with_capacity(n_points * HYPERCUBE_DIM);
    for &l in &labels {
        for c in centres[l] {
            values.push(c + noise.sample(&mut rng));
        }
    }
    let columns = (0..HYPERCUBE_DIM).map(|d| format!("x{d}")).collect();
    let data = Dataset::from_row_major(columns, n_points, values).expect("generated values are finite");
    Ok((data, labels))
}

/// Width and height of the [`generate_hairpin`] strip.
pub const HAIRPIN_SIZE: [f64; 2] = [10.0, 6.0];

/// Points uniform on a `10 x 6` strip with features `x`, `y` and a
/// lens-only column `lens` that runs from 0 to 10 along the lower half and
/// back from 10 to 20 along the upper half.
///
/// The lowest and highest lens values sit side by side at `x = 0`, so a
/// model of the spatial features connects them; any lens on `lens` cuts the
/// strip along its midline except near `x = 10`.
pub fn generate_hairpin(n_points: usize, seed: u64) -> Dataset {
    let [w, h] = HAIRPIN_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n_points)
        .map(|_| {
            let x = rng.gen_range(0.0..w);
            let y = rng.gen_range(0.0..h);
            let lens = if y < h / 2.0 { x } else { 2.0 * w - x };
            vec![x, y, lens]
        })
        .collect();
    let mut data = Dataset::from_rows(vec!["x".into(), "y".into(), "lens".into()], &rows)
        .expect("generated values are finite");
    data.set_role("lens", ColumnRole::LensOnly).expect("column exists");
    data
}
