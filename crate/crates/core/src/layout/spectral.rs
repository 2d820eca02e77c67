//! Spectral initialisation from the symmetric normalised Laplacian.
//!
//! Each connected component is embedded on its own with the two eigenvectors
//! following the trivial one, scaled to a diameter of 10 and stacked with
//! [`separate_components`](super::separate_components). Singletons go on a
//! grid below the stack.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{random_coords, separate_components, Embedding, InitMode, LayoutError};
use crate::graph::{connected_components, Manifold};

/// Components up to this size use a dense eigensolver.
const DENSE_LIMIT: usize = 600;
/// Iterative solver block width.
const BLOCK: usize = 6;
/// Sparse matrix-vector products budget for one component.
const WORK_BUDGET: f64 = 4e9;
const DIAMETER: f64 = 10.0;

pub fn spectral_init(m: &Manifold, seed: u64) -> Result<Embedding, LayoutError> {
    let n = m.n_vertices();
    if n == 0 {
        return Err(LayoutError::EmptyManifold);
    }
    let labels = connected_components(m);
    let n_comp = labels.iter().max().map_or(0, |&c| c + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (v, &c) in labels.iter().enumerate() {
        members[c].push(v);
    }

    let mut coords = vec![[0.0; 2]; n];
    let mut failed = false;
    for (c, verts) in members.iter().enumerate() {
        if verts.len() < 2 {
            continue;
        }
        match component_vectors(m, verts, seed.wrapping_add(c as u64)) {
            Some(local) => {
                for (p, &v) in verts.iter().enumerate() {
                    coords[v] = local[p];
                }
            }
            None => {
                failed = true;
                break;
            }
        }
    }
    if failed {
        log::warn!("spectral initialisation failed; using random coordinates");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(Embedding {
            coords: random_coords(n, &mut rng),
            source_digest: m.digest(),
            init: InitMode::Random,
        });
    }

    // Stack the non-trivial components, then lay singletons out beneath.
    let big: Vec<usize> = (0..n_comp).filter(|&c| members[c].len() > 1).collect();
    let singles: Vec<usize> = (0..n_comp).filter(|&c| members[c].len() == 1).map(|c| members[c][0]).collect();
    let mut emb = Embedding { coords, source_digest: m.digest(), init: InitMode::Spectral };
    if !big.is_empty() {
        let mut rank = vec![usize::MAX; n_comp];
        for (r, &c) in big.iter().enumerate() {
            rank[c] = r;
        }
        let stack_labels: Vec<usize> =
            labels.iter().map(|&c| if rank[c] == usize::MAX { 0 } else { rank[c] }).collect();
        let big_vertices: Vec<usize> = (0..n).filter(|&v| rank[labels[v]] != usize::MAX).collect();
        let sub = Embedding {
            coords: big_vertices.iter().map(|&v| emb.coords[v]).collect(),
            source_digest: String::new(),
            init: InitMode::Spectral,
        };
        let sub_labels: Vec<usize> = big_vertices.iter().map(|&v| stack_labels[v]).collect();
        let stacked = separate_components(&sub, &sub_labels);
        for (p, &v) in big_vertices.iter().enumerate() {
            emb.coords[v] = stacked.coords[p];
        }
    }
    if !singles.is_empty() {
        let placed: Vec<[f64; 2]> = (0..n).filter(|&v| members[labels[v]].len() > 1).map(|v| emb.coords[v]).collect();
        let (x0, y0) = if placed.is_empty() {
            (0.0, 0.0)
        } else {
            let x0 = placed.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let y0 = placed.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - 1.0;
            (x0, y0)
        };
        let cols = (singles.len() as f64).sqrt().ceil() as usize;
        for (s, &v) in singles.iter().enumerate() {
            emb.coords[v] = [x0 + (s % cols) as f64, y0 - (s / cols) as f64];
        }
    }
    Ok(emb)
}

/// Eigen-coordinates of one component scaled to the target diameter.
fn component_vectors(m: &Manifold, verts: &[usize], seed: u64) -> Option<Vec<[f64; 2]>> {
    let size = verts.len();
    let mut local = vec![usize::MAX; m.n_vertices()];
    for (p, &v) in verts.iter().enumerate() {
        local[v] = p;
    }
    let degree: Vec<f64> = verts
        .iter()
        .map(|&v| m.neighbors(v).1.iter().map(|&w| w as f64).sum())
        .collect();
    if degree.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut vectors = if size <= DENSE_LIMIT {
        dense_vectors(m, verts, &local, &inv_sqrt)?
    } else {
        iterative_vectors(m, verts, &local, &inv_sqrt, &degree, seed)?
    };
    for v in vectors.iter_mut() {
        // Canonical sign: the largest-magnitude entry is positive.
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut coords: Vec<[f64; 2]> = (0..size).map(|p| [vectors[0][p], vectors[1][p]]).collect();
    scale_to_diameter(&mut coords);
    coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()).then_some(coords)
}

fn scale_to_diameter(coords: &mut [[f64; 2]]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords.iter() {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if extent > 0.0 { DIAMETER / extent } else { 1.0 };
    let centre = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    for c in coords.iter_mut() {
        for d in 0..2 {
            c[d] = (c[d] - centre[d]) * scale;
        }
    }
}

fn dense_vectors(
    m: &Manifold,
    verts: &[usize],
    local: &[usize],
    inv_sqrt: &[f64],
) -> Option<Vec<Vec<f64>>> {
    let size = verts.len();
    let mut lap = DMatrix::<f64>::identity(size, size);
    for (p, &v) in verts.iter().enumerate() {
        let (cols, ws) = m.neighbors(v);
        for (&j, &w) in cols.iter().zip(ws) {
            let q = local[j as usize];
            lap[(p, q)] -= w as f64 * inv_sqrt[p] * inv_sqrt[q];
        }
    }
    let eig = SymmetricEigen::try_new(lap, 1e-12, 10_000)?;
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let pick = |r: usize| -> Vec<f64> {
        match order.get(r) {
            Some(&c) => eig.eigenvectors.column(c).iter().copied().collect(),
            None => vec![0.0; size],
        }
    };
    Some(vec![pick(1), pick(2)])
}

/// Block subspace iteration on `(I + D^-1/2 W D^-1/2) / 2` with the trivial
/// eigenvector projected out, finished by a Rayleigh-Ritz step.
fn iterative_vectors(
    m: &Manifold,
    verts: &[usize],
    local: &[usize],
    inv_sqrt: &[f64],
    degree: &[f64],
    seed: u64,
) -> Option<Vec<Vec<f64>>> {
    use rand::Rng;
    let size = verts.len();
    let nnz: usize = verts.iter().map(|&v| m.degree(v)).sum();
    let trivial = {
        let t: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        DMatrix::from_iterator(size, 1, t.into_iter().map(|x| x / norm))
    };
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = x.clone() * 0.5;
        for (p, &v) in verts.iter().enumerate() {
            let (cols, ws) = m.neighbors(v);
            for (&j, &w) in cols.iter().zip(ws) {
                let q = local[j as usize];
                let s = 0.5 * w as f64 * inv_sqrt[p] * inv_sqrt[q];
                for c in 0..x.ncols() {
                    y[(p, c)] += s * x[(q, c)];
                }
            }
        }
        y
    };
    let deflate = |x: &mut DMatrix<f64>| {
        let proj = trivial.transpose() * &*x;
        *x -= &trivial * proj;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = BLOCK.min(size - 1).max(2);
    let mut x = DMatrix::from_fn(size, block, |_, _| rng.gen_range(-1.0..1.0));
    deflate(&mut x);
    x = x.qr().q();
    let per_iter = (nnz + size) as f64 * block as f64;
    let max_iter = ((WORK_BUDGET / per_iter) as usize).clamp(50, 20_000);
    let mut ritz = None;
    for it in 0..max_iter {
        let mut y = apply(&x);
        deflate(&mut y);
        x = y.qr().q();
        if it % 10 == 9 || it + 1 == max_iter {
            let bx = apply(&x);
            let h = x.transpose() * &bx;
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::try_new(h, 1e-12, 1000)?;
            let mut order: Vec<usize> = (0..block).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let top = [order[0], order[1]];
            let vecs: Vec<DMatrix<f64>> =
                top.iter().map(|&c| DMatrix::from_column_slice(x.nrows(), 1, (&x * eig.eigenvectors.column(c)).as_slice())).collect();
            let converged = top.iter().zip(&vecs).all(|(&c, v)| {
                let r = apply(v) - v * eig.eigenvalues[c];
                r.norm() < 1e-6
            });
            ritz = Some(vecs);
            if converged {
                break;
            }
        }
    }
    let vecs = ritz?;
    Some(vecs.into_iter().map(|v| v.iter().copied().collect()).collect())
}
