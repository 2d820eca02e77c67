#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umap_lens::{build_manifold, ColumnRole, Dataset, DistanceMetric, Manifold};

/// A manifold over random clustered features plus two lens-only columns
/// `l0`, `l1` (with deliberate ties in `l1`).
pub struct Case {
    pub manifold: Manifold,
    pub data: Dataset,
    pub k: usize,
}

pub fn random_case(seed: u64, max_n: usize, max_k: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(12..=max_n);
    let d = rng.gen_range(2..=5);
    let k = rng.gen_range(2..=max_k.min(n - 1));
    let n_centres = rng.gen_range(1..=4);
    let centres: Vec<Vec<f64>> =
        (0..n_centres).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let c = &centres[i % n_centres];
        let mut row: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect();
        row.push(rng.gen_range(0.0..1.0));
        row.push((rng.gen_range(0.0..1.0f64) * 8.0).round());
        rows.push(row);
    }
    let mut columns: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    columns.push("l0".into());
    columns.push("l1".into());
    let mut data = Dataset::from_rows(columns, &rows).unwrap();
    data.set_role("l0", ColumnRole::LensOnly).unwrap();
    data.set_role("l1", ColumnRole::LensOnly).unwrap();
    let manifold = build_manifold(&data.features(), k, DistanceMetric::Euclidean).unwrap();
    Case { manifold, data, k }
}

/// Small hand-built graphs with a lens column `l0`.
pub fn fixtures() -> Vec<(&'static str, Manifold, Dataset)> {
    let lens = |vals: &[f64]| {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        Dataset::from_rows(vec!["l0".into()], &rows).unwrap()
    };
    let mut out = Vec::new();
    out.push((
        "triangle",
        Manifold::from_undirected_edges(3, [(0, 1, 0.5), (1, 2, 0.25), (0, 2, 1.0)]).unwrap(),
        lens(&[0.0, 0.5, 1.0]),
    ));
    out.push((
        "path",
        Manifold::from_undirected_edges(5, (0..4).map(|i| (i, i + 1, 0.2 * (i + 1) as f32))).unwrap(),
        lens(&[0.0, 1.0, 2.0, 3.0, 4.0]),
    ));
    out.push((
        "star",
        Manifold::from_undirected_edges(6, (1..6).map(|i| (0, i, 1.0 / i as f32))).unwrap(),
        lens(&[2.5, 0.0, 1.0, 2.0, 4.0, 5.0]),
    ));
    let k5: Vec<(usize, usize, f32)> =
        (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j, 0.1 * (1 + i + j) as f32))).collect();
    out.push(("complete5", Manifold::from_undirected_edges(5, k5).unwrap(), lens(&[3.0, 3.0, 1.0, 0.0, 3.0])));
    out.push((
        "two_components",
        Manifold::from_undirected_edges(6, [(0, 1, 1.0), (1, 2, 0.7), (3, 4, 0.9), (4, 5, 0.3)]).unwrap(),
        lens(&[0.0, 0.1, 0.2, 5.0, 5.1, 5.2]),
    ));
    out.push(("edgeless", Manifold::empty(4), lens(&[0.0, 1.0, 2.0, 3.0])));
    out.push((
        "constant_lens",
        Manifold::from_undirected_edges(4, [(0, 1, 0.4), (1, 2, 0.6), (2, 3, 0.8), (0, 3, 1.0)]).unwrap(),
        lens(&[7.0, 7.0, 7.0, 7.0]),
    ));
    out
}

pub fn pairs(m: &Manifold) -> BTreeSet<(usize, usize)> {
    m.edges().map(|(i, j, _)| (i, j)).collect()
}

/// Subset, symmetry, weight range and bit-exact retained weights.
pub fn check_filter(input: &Manifold, output: &Manifold) -> Result<(), String> {
    if output.n_vertices() != input.n_vertices() {
        return Err("vertex count changed".into());
    }
    for i in 0..output.n_vertices() {
        let (cols, ws) = output.neighbors(i);
        for (&j, &w) in cols.iter().zip(ws) {
            let j = j as usize;
            let Some(orig) = input.weight(i, j) else {
                return Err(format!("edge ({i},{j}) not in input"));
            };
            if orig.to_bits() != w.to_bits() {
                return Err(format!("weight of ({i},{j}) changed: {orig} -> {w}"));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(format!("weight of ({i},{j}) out of range: {w}"));
            }
            if output.weight(j, i).map(f32::to_bits) != Some(w.to_bits()) {
                return Err(format!("edge ({i},{j}) not symmetric"));
            }
        }
    }
    Ok(())
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
