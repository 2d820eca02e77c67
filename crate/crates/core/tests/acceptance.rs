//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The large-scale smoke run is skipped unless `UMAP_LENS_SMOKE=1`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{check_filter, euclid, fixtures, pairs, random_case};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use umap_lens::bench::{BenchConfig, BenchLens};
use umap_lens::io::{load_model, save_model, ModelFile};
use umap_lens::manifold::local_scales;
use umap_lens::*;

type Outcome = Result<String, String>;

enum Status {
    Pass,
    Fail,
    Skip,
}

fn run(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Option<Outcome>) -> Status {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (status, detail) = match result {
        Ok(None) => (Status::Skip, "set UMAP_LENS_SMOKE=1 to run".to_string()),
        Ok(Some(Ok(d))) => match limit {
            Some(l) if elapsed > l => (Status::Fail, format!("{d}; over time limit {l:?}")),
            _ => (Status::Pass, d),
        },
        Ok(Some(Err(d))) => (Status::Fail, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (Status::Fail, format!("panicked: {msg}"))
        }
    };
    let tag = match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    println!("{tag} {name} [{:.1}s] {detail}", elapsed.as_secs_f64());
    status
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// Brute-force oracles -------------------------------------------------------

fn oracle_regular_segments(values: &[f64], n: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n as f64;
    let edges: Vec<f64> = (0..=n).map(|s| if s == n { hi } else { lo + s as f64 * width }).collect();
    values
        .iter()
        .map(|&v| {
            if width == 0.0 {
                return 0;
            }
            (0..n).find(|&s| edges[s] <= v && (v < edges[s + 1] || s == n - 1)).unwrap()
        })
        .collect()
}

fn oracle_balanced_segments(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let (base, extra) = (values.len() / n, values.len() % n);
    let mut out = vec![0; values.len()];
    let mut pos = 0;
    for s in 0..n {
        for _ in 0..base + usize::from(s < extra) {
            out[order[pos]] = s;
            pos += 1;
        }
    }
    out
}

fn oracle_global_lens(m: &Manifold, seg: &[usize], n: usize, circular: bool) -> BTreeSet<(usize, usize)> {
    pairs(m)
        .into_iter()
        .filter(|&(i, j)| {
            let gap = seg[i].abs_diff(seg[j]);
            gap <= 1 || (circular && n > 1 && gap == n - 1)
        })
        .collect()
}

fn oracle_global_mask(m: &Manifold, mask: &Manifold) -> BTreeSet<(usize, usize)> {
    let n = m.n_vertices();
    let mut dense = vec![false; n * n];
    for (i, j, _) in mask.edges() {
        dense[i * n + j] = true;
        dense[j * n + i] = true;
    }
    pairs(m).into_iter().filter(|&(i, j)| dense[i * n + j] && dense[j * n + i]).collect()
}

fn oracle_local_mask(m: &Manifold, lens: &Dataset, k_mask: usize) -> BTreeSet<(usize, usize)> {
    let mut chosen = BTreeSet::new();
    for i in 0..m.n_vertices() {
        let mut nb: Vec<(f64, usize)> =
            m.neighbors(i).0.iter().map(|&j| (euclid(lens.row(i), lens.row(j as usize)), j as usize)).collect();
        nb.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in nb.iter().take(k_mask) {
            chosen.insert((i.min(j), i.max(j)));
        }
    }
    chosen
}

// Criteria ------------------------------------------------------------------

fn lens_oracle_equivalence() -> Outcome {
    let mut checked = 0;
    for seed in 0..50u64 {
        let case = random_case(seed, 200, 20);
        let m = &case.manifold;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let lens_col = if seed % 2 == 0 { "l0" } else { "l1" };
        let values = case.data.column_by_name(lens_col).unwrap();

        let n_seg = rng.gen_range(1..=12);
        let circular = rng.gen_bool(0.5);
        for (strategy, seg) in [
            (SegmentStrategy::Regular, oracle_regular_segments(&values, n_seg)),
            (SegmentStrategy::Balanced, oracle_balanced_segments(&values, n_seg)),
        ] {
            let assignment = segment_lens(&values, n_seg, strategy).map_err(|e| e.to_string())?;
            let got_seg: Vec<usize> = assignment.segments.iter().map(|&s| s as usize).collect();
            ensure(got_seg == seg, || format!("seed {seed}: {strategy} segments differ from interval oracle"))?;
            let out = apply_global_lens(m, &assignment, circular).map_err(|e| e.to_string())?;
            check_filter(m, &out).map_err(|e| format!("seed {seed} global lens: {e}"))?;
            ensure(pairs(&out) == oracle_global_lens(m, &seg, n_seg, circular), || {
                format!("seed {seed}: global lens ({strategy}, {n_seg}, circular={circular}) edge set differs")
            })?;
        }

        let k_mask = rng.gen_range(1..m.n_vertices().min(40));
        let dims = vec!["l0".to_string(), "f0".to_string()];
        let mask = build_manifold(&case.data.select(&dims).unwrap(), k_mask, DistanceMetric::Euclidean)
            .map_err(|e| e.to_string())?;
        let out = apply_global_mask(m, &mask).map_err(|e| e.to_string())?;
        check_filter(m, &out).map_err(|e| format!("seed {seed} global mask: {e}"))?;
        ensure(pairs(&out) == oracle_global_mask(m, &mask), || format!("seed {seed}: global mask edge set differs"))?;

        let k_local = rng.gen_range(1..=case.k + 2);
        let lens = case.data.select(&[lens_col]).unwrap();
        let out = apply_local_mask(m, &lens, DistanceMetric::Euclidean, k_local).map_err(|e| e.to_string())?;
        check_filter(m, &out).map_err(|e| format!("seed {seed} local mask: {e}"))?;
        ensure(pairs(&out) == oracle_local_mask(m, &lens, k_local), || format!("seed {seed}: local mask edge set differs"))?;
        checked += 1;
    }
    Ok(format!("{checked} manifolds x 4 lens variants match their oracles; retained weights bit-identical"))
}

fn lens_each(m: &Manifold, data: &Dataset, rng: &mut ChaCha8Rng) -> Vec<(String, Manifold, Option<usize>)> {
    let n = m.n_vertices();
    let lens_col = data.columns().iter().find(|c| c.starts_with('l')).unwrap().clone();
    let values = data.column_by_name(&lens_col).unwrap();
    let n_seg = rng.gen_range(1..=n.min(10));
    let strategy = if rng.gen_bool(0.5) { SegmentStrategy::Regular } else { SegmentStrategy::Balanced };
    let seg = segment_lens(&values, n_seg, strategy).unwrap();
    let mut out = vec![(format!("global lens {n_seg}/{strategy}"), apply_global_lens(m, &seg, rng.gen_bool(0.5)).unwrap(), None)];
    if n >= 2 {
        let k_mask = rng.gen_range(1..n);
        let mask = build_manifold(&data.select(&[&lens_col]).unwrap(), k_mask, DistanceMetric::Euclidean).unwrap();
        out.push((format!("global mask {k_mask}"), apply_global_mask(m, &mask).unwrap(), None));
    }
    let k_local = rng.gen_range(1..=8);
    let lens = data.select(&[&lens_col]).unwrap();
    out.push((format!("local mask {k_local}"), apply_local_mask(m, &lens, DistanceMetric::Euclidean, k_local).unwrap(), Some(k_local)));
    out
}

fn degree_floor(input: &Manifold, output: &Manifold, k_mask: usize) -> usize {
    (0..input.n_vertices()).filter(|&i| output.degree(i) < k_mask.min(input.degree(i))).count()
}

fn weight_preservation_and_degree_floor() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut violations = 0;
    let mut local_cases = 0;
    let mut checks = 0;
    let mut failure = None;
    for (name, m, data) in fixtures() {
        // Exhaustive over small parameter ranges on fixtures.
        let values = data.column(0);
        for n_seg in 1..=m.n_vertices() {
            for strategy in [SegmentStrategy::Regular, SegmentStrategy::Balanced] {
                for circular in [false, true] {
                    let seg = segment_lens(&values, n_seg, strategy).unwrap();
                    let out = apply_global_lens(&m, &seg, circular).unwrap();
                    if let Err(e) = check_filter(&m, &out) {
                        failure.get_or_insert(format!("{name} global lens: {e}"));
                    }
                    checks += 1;
                }
            }
        }
        for k_mask in 1..m.n_vertices() {
            let mask = build_manifold(&data, k_mask, DistanceMetric::Euclidean).unwrap();
            let out = apply_global_mask(&m, &mask).unwrap();
            if let Err(e) = check_filter(&m, &out) {
                failure.get_or_insert(format!("{name} global mask: {e}"));
            }
            checks += 1;
        }
        for k_mask in 1..=m.n_vertices() {
            let out = apply_local_mask(&m, &data, DistanceMetric::Euclidean, k_mask).unwrap();
            if let Err(e) = check_filter(&m, &out) {
                failure.get_or_insert(format!("{name} local mask: {e}"));
            }
            violations += degree_floor(&m, &out, k_mask);
            local_cases += 1;
            checks += 1;
        }
    }
    for seed in 0..1000u64 {
        let case = random_case(10_000 + seed, 120, 15);
        for (what, out, k_local) in lens_each(&case.manifold, &case.data, &mut rng) {
            if let Err(e) = check_filter(&case.manifold, &out) {
                failure.get_or_insert(format!("case {seed} {what}: {e}"));
            }
            if let Some(k) = k_local {
                violations += degree_floor(&case.manifold, &out, k);
                local_cases += 1;
            }
            checks += 1;
        }
    }
    let weights = match failure {
        Some(f) => Err(f),
        None => Ok(format!("{checks} lens applications (fixtures exhaustive + 1000 random cases)")),
    };
    let floor = if violations == 0 {
        Ok(format!("0 violations over {local_cases} local-mask applications"))
    } else {
        Err(format!("{violations} vertices below min(k_mask, deg)"))
    };
    (weights, floor)
}

fn quintile_distance(coords: &[[f64; 2]], lens: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..lens.len()).collect();
    order.sort_by(|&a, &b| lens[a].total_cmp(&lens[b]).then(a.cmp(&b)));
    let q = lens.len() / 5;
    let (low, high) = (&order[..q], &order[lens.len() - q..]);
    let mut sum = 0.0;
    for &i in low {
        for &j in high {
            sum += (coords[i][0] - coords[j][0]).hypot(coords[i][1] - coords[j][1]);
        }
    }
    sum / (low.len() * high.len()) as f64
}

fn teaser() -> Outcome {
    let data = generate_hairpin(2000, 7);
    let lens = data.column_by_name("lens").unwrap();
    let m = build_manifold(&data.features(), 50, DistanceMetric::Euclidean).map_err(|e| e.to_string())?;
    let params = LayoutParams { seed: 7, ..LayoutParams::default() };
    let init = spectral_init(&m, 7).map_err(|e| e.to_string())?;
    let base = optimize_layout(&m, &init, &params).map_err(|e| e.to_string())?;
    let before = quintile_distance(&base.coords, &lens);
    let specs = [
        LensSpec::GlobalLens {
            dimension: "lens".into(),
            n_segments: 10,
            strategy: SegmentStrategy::Regular,
            circular: false,
        },
        LensSpec::GlobalMask { dimensions: vec!["lens".into()], metric: DistanceMetric::Euclidean, mask_neighbors: 100 },
        LensSpec::LocalMask { dimensions: vec!["lens".into()], metric: DistanceMetric::Euclidean, mask_neighbors: 25 },
    ];
    let mut parts = vec![format!("before {before:.2}")];
    let mut failed = false;
    for spec in &specs {
        let lensed = apply_lens(&m, spec, &data).map_err(|e| e.to_string())?;
        let p = LayoutParams { seed: 7, ..LayoutParams::for_reembed() };
        let after = reembed(&lensed, &base, &p).map_err(|e| e.to_string())?;
        let ratio = quintile_distance(&after.coords, &lens) / before;
        failed |= ratio < 2.0;
        parts.push(format!("{} x{ratio:.2}", spec.kind()));
    }
    let detail = parts.join(", ") + " (need >= 2x)";
    if failed {
        Err(detail)
    } else {
        Ok(detail)
    }
}

fn manifold_invariants() -> Outcome {
    let mut worst_row_max: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut dominance_checked = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.gen_range(20..300);
        let d = rng.gen_range(1..6);
        let values: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let data = Dataset::from_matrix(n, d, values).unwrap();
        let k = rng.gen_range(3..=30.min(n - 1));
        let knn = build_knn(&data, k, DistanceMetric::Euclidean).map_err(|e| e.to_string())?;
        let directed = smooth_weights(&knn);
        for (i, s) in local_scales(&knn).iter().enumerate() {
            let (_, ws) = directed.neighbors(i);
            let row_max = ws.iter().copied().fold(0.0f32, f32::max) as f64;
            worst_row_max = worst_row_max.max((row_max - 1.0).abs());
            let dist = knn.neighbors(i).1;
            let sum: f64 = dist.iter().map(|&x| (-(x - s.rho).max(0.0) / s.sigma).exp()).sum();
            worst_residual = worst_residual.max((sum - (k as f64).log2()).abs());
        }
        let sym = symmetrize_union(&directed);
        for (i, j, w) in directed.edges() {
            let back = directed.weight(j, i).unwrap_or(0.0);
            let s = sym.weight(i, j).ok_or_else(|| format!("seed {seed}: union lost ({i},{j})"))?;
            ensure(s >= w.max(back) && s <= 1.0, || format!("seed {seed}: union weight {s} < max({w}, {back})"))?;
            dominance_checked += 1;
        }
    }
    ensure(worst_row_max <= 1e-9, || format!("row max deviates from 1 by {worst_row_max:e}"))?;
    ensure(worst_residual <= 1e-5, || format!("sigma residual {worst_residual:e}"))?;
    Ok(format!(
        "100 datasets: |row max - 1| <= {worst_row_max:e}, sigma residual <= {worst_residual:.1e}, {dominance_checked} union edges dominate"
    ))
}

fn layout_checks() -> Outcome {
    // Zero-epoch identity.
    let case = random_case(3, 80, 10);
    let init = random_init(&case.manifold, 5);
    let p0 = LayoutParams { n_epochs: Some(0), ..LayoutParams::default() };
    let same = optimize_layout(&case.manifold, &init, &p0).map_err(|e| e.to_string())?;
    ensure(
        same.coords.iter().zip(&init.coords).all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()),
        || "zero-epoch layout moved points".into(),
    )?;

    // Attraction gradient against central differences of log nu.
    let curve = fit_curve(0.1, 1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let yi = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let yj = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        if euclid(&yi, &yj) < 0.05 {
            continue;
        }
        let g = curve.log_nu_gradient(yi, yj);
        let f = |y: [f64; 2]| curve.nu(euclid(&y, &yj)).ln();
        for d in 0..2 {
            let h = 1e-6;
            let (mut plus, mut minus) = (yi, yi);
            plus[d] += h;
            minus[d] -= h;
            let fd = (f(plus) - f(minus)) / (2.0 * h);
            worst = worst.max((g[d] - fd).abs() / fd.abs().max(1e-3));
        }
    }
    ensure(worst <= 1e-4, || format!("gradient relative error {worst:e}"))?;

    // Cluster separation on the hypercube.
    let (data, labels) = generate_hypercube(1000, 3).map_err(|e| e.to_string())?;
    let m = build_manifold(&data, 15, DistanceMetric::Euclidean).map_err(|e| e.to_string())?;
    let init = spectral_init(&m, 3).map_err(|e| e.to_string())?;
    let p = LayoutParams { n_epochs: Some(500), seed: 3, ..LayoutParams::default() };
    let e = optimize_layout(&m, &init, &p).map_err(|e| e.to_string())?;
    let (mut intra, mut inter, mut n_intra, mut n_inter) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            let d = euclid(&e.coords[i], &e.coords[j]);
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let ratio = (intra / n_intra as f64) / (inter / n_inter as f64);
    ensure(ratio < 0.5, || format!("intra/inter distance ratio {ratio:.3} (need < 0.5)"))?;
    Ok(format!("zero-epoch identity exact; gradient rel. error {worst:.1e}; hypercube intra/inter {ratio:.3}"))
}

fn benchmark_scaling() -> Outcome {
    let config = BenchConfig {
        sizes: vec![100, 1_000, 10_000],
        mask_neighbors: vec![],
        local_neighbors: vec![],
        ..BenchConfig::default()
    };
    let report = run_benchmark(&config).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for f in report.fits.iter().filter(|f| f.n_points.is_none()) {
        if let BenchLens::GlobalLens { .. } = f.lens {
            worst = worst.min(f.fit.r_squared);
            parts.push(format!("{}:R2={:.3}", f.lens.parameter(), f.fit.r_squared));
        }
    }
    ensure(!parts.is_empty(), || "no global-lens fits".into())?;
    let detail = format!("min R2 {worst:.3} over {} settings ({})", parts.len(), parts.join(" "));
    if worst >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn smoke() -> Option<Outcome> {
    if std::env::var("UMAP_LENS_SMOKE").ok().as_deref() != Some("1") {
        return None;
    }
    Some((|| {
        let (data, _) = generate_hypercube(180_000, 1).map_err(|e| e.to_string())?;
        let t = Instant::now();
        let m = build_manifold(&data, 50, DistanceMetric::Euclidean).map_err(|e| e.to_string())?;
        let build = t.elapsed();
        let values = data.column_by_name("x0").unwrap();
        let t = Instant::now();
        let seg = segment_lens(&values, 24, SegmentStrategy::Balanced).map_err(|e| e.to_string())?;
        let global = apply_global_lens(&m, &seg, false).map_err(|e| e.to_string())?;
        let t_global = t.elapsed();
        let lens = data.select(&["x0", "x1"]).unwrap();
        let t = Instant::now();
        let local = apply_local_mask(&m, &lens, DistanceMetric::Euclidean, 10).map_err(|e| e.to_string())?;
        let t_local = t.elapsed();
        let p = LayoutParams { deterministic: false, seed: 1, ..LayoutParams::default() };
        let t = Instant::now();
        let init = spectral_init(&m, 1).map_err(|e| e.to_string())?;
        let base = optimize_layout(&m, &init, &p).map_err(|e| e.to_string())?;
        let t_initial = t.elapsed();
        let t = Instant::now();
        let rp = LayoutParams { deterministic: false, seed: 1, ..LayoutParams::for_reembed() };
        reembed(&global, &base, &rp).map_err(|e| e.to_string())?;
        let t_reembed = t.elapsed();
        let detail = format!(
            "{} edges; build {:.1}s, global lens {:.3}s ({} edges), local mask {:.3}s ({} edges), initial layout {:.1}s, reembed {:.1}s",
            m.n_edges(),
            build.as_secs_f64(),
            t_global.as_secs_f64(),
            global.n_edges(),
            t_local.as_secs_f64(),
            local.n_edges(),
            t_initial.as_secs_f64(),
            t_reembed.as_secs_f64()
        );
        ensure(t_global.as_secs_f64() < 5.0 && t_local.as_secs_f64() < 5.0, || format!("filter over 5 s: {detail}"))?;
        Ok(detail)
    })())
}

fn oracle_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

fn ks_statistics() -> Outcome {
    let same = ks_test(&[0.3, 1.0, 2.0, 2.0], &[0.3, 1.0, 2.0, 2.0]).map_err(|e| e.to_string())?;
    ensure(same.d == 0.0, || format!("identical samples gave D={}", same.d))?;
    let disjoint = ks_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    ensure(disjoint.d == 1.0, || format!("disjoint samples gave D={}", disjoint.d))?;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..500).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = (0..500).map(|_| Normal::new(1.0, 1.0).unwrap().sample(&mut rng)).collect();
        let r = ks_test(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((r.d - oracle_ks(&a, &b)).abs());
    }
    ensure(worst <= 0.02, || format!("D deviates from ECDF oracle by {worst}"))?;

    let mut first = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, d, shifted) = (400, 6, 3);
        let selected: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n, 40).into_iter().collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| normal.sample(&mut rng) + if j == shifted && selected.contains(&i) { 1.5 } else { 0.0 })
                    .collect()
            })
            .collect();
        let data = Dataset::from_rows((0..d).map(|j| format!("g{j}")).collect(), &rows).unwrap();
        let sel: Vec<usize> = selected.into_iter().collect();
        let r = contrast_selection(&data, &sel, &Against::Rest).map_err(|e| e.to_string())?;
        if r.features[0].column == format!("g{shifted}") {
            first += 1;
        }
    }
    ensure(first == 20, || format!("shifted feature ranked first in {first}/20 seeds"))?;
    Ok(format!("D=0 identical, D=1 disjoint, max |D - oracle| = {worst:e}, shifted feature first in 20/20"))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut with_history = 0;
    for seed in 0..20u64 {
        let case = random_case(200 + seed, 150, 15);
        let mut m = case.manifold.clone();
        for _ in 0..rng.gen_range(1..=3) {
            let spec = match rng.gen_range(0..3) {
                0 => LensSpec::GlobalLens {
                    dimension: "l0".into(),
                    n_segments: rng.gen_range(2..8),
                    strategy: SegmentStrategy::Balanced,
                    circular: rng.gen_bool(0.5),
                },
                1 => LensSpec::GlobalMask { dimensions: vec!["l0".into(), "l1".into()], metric: DistanceMetric::Euclidean, mask_neighbors: 8 },
                _ => LensSpec::LocalMask { dimensions: vec!["l1".into()], metric: DistanceMetric::Cosine, mask_neighbors: 3 },
            };
            m = apply_lens(&m, &spec, &case.data).map_err(|e| e.to_string())?;
        }
        with_history += usize::from(!m.lens_history.is_empty());
        let model = ModelFile { manifold: m, metric: DistanceMetric::Euclidean, k: case.k, dataset_digest: case.data.digest() };
        let path = dir.path().join(format!("m{seed}.lum"));
        save_model(&model, &path).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        let back = load_model(&path).map_err(|e| e.to_string())?;
        ensure(back == model, || format!("seed {seed}: loaded model differs"))?;
        ensure(back.to_bytes() == bytes, || format!("seed {seed}: re-serialised bytes differ"))?;
        ensure(back.manifold.digest() == model.manifold.digest(), || format!("seed {seed}: digest differs"))?;
    }
    Ok(format!("20 models round-trip bit-identically ({with_history} with lens history)"))
}

fn main() {
    let mut statuses = Vec::new();
    statuses.push(run("lens-oracle-equivalence", Some(Duration::from_secs(10)), || Some(lens_oracle_equivalence())));
    let mut floor = None;
    statuses.push(run("weight-preservation-symmetry", None, || {
        let (weights, f) = weight_preservation_and_degree_floor();
        floor = Some(f);
        Some(weights)
    }));
    statuses.push(run("local-mask-degree-floor", None, || {
        Some(floor.unwrap_or_else(|| Err("not evaluated".into())))
    }));
    statuses.push(run("teaser-reproduction", Some(Duration::from_secs(60)), || Some(teaser())));
    statuses.push(run("manifold-invariants", None, || Some(manifold_invariants())));
    statuses.push(run("layout-checks", Some(Duration::from_secs(120)), || Some(layout_checks())));
    statuses.push(run("benchmark-scaling", Some(Duration::from_secs(600)), || Some(benchmark_scaling())));
    statuses.push(run("large-scale-smoke", None, smoke));
    statuses.push(run("ks-statistics", None, || Some(ks_statistics())));
    statuses.push(run("persistence", None, || Some(persistence())));
    let failed = statuses.iter().filter(|s| matches!(s, Status::Fail)).count();
    println!("acceptance: {} passed, {failed} failed, {} skipped", statuses.iter().filter(|s| matches!(s, Status::Pass)).count(), statuses.iter().filter(|s| matches!(s, Status::Skip)).count());
    if failed > 0 {
        std::process::exit(1);
    }
}
