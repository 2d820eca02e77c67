//! Lays out the hairpin strip before and after each lens type and reports
//! how far apart the lowest and highest lens quintiles end up.
//!
//! `cargo run --release -p umap-lens --example teaser [out_dir]` also writes
//! each embedding as `id,x,y,lens` CSV for plotting.

use std::error::Error;
use std::path::PathBuf;

use umap_lens::*;

fn quintile_distance(coords: &[[f64; 2]], lens: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..lens.len()).collect();
    order.sort_by(|&a, &b| lens[a].total_cmp(&lens[b]).then(a.cmp(&b)));
    let q = lens.len() / 5;
    let (low, high) = (&order[..q], &order[lens.len() - q..]);
    let total: f64 = low
        .iter()
        .flat_map(|&i| high.iter().map(move |&j| (i, j)))
        .map(|(i, j)| (coords[i][0] - coords[j][0]).hypot(coords[i][1] - coords[j][1]))
        .sum();
    total / (low.len() * high.len()) as f64
}

fn write(dir: &Option<PathBuf>, name: &str, coords: &[[f64; 2]], lens: &[f64]) -> Result<(), Box<dyn Error>> {
    if let Some(dir) = dir {
        let mut s = String::from("id,x,y,lens\n");
        for (i, (c, l)) in coords.iter().zip(lens).enumerate() {
            s.push_str(&format!("{i},{},{},{l}\n", c[0], c[1]));
        }
        std::fs::write(dir.join(format!("{name}.csv")), s)?;
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    let out_dir = std::env::args().nth(1).map(PathBuf::from);
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)?;
    }
    let data = generate_hairpin(2000, 7);
    let lens = data.column_by_name("lens")?;
    let model = build_manifold(&data.features(), 50, DistanceMetric::Euclidean)?;
    let params = LayoutParams { seed: 7, ..LayoutParams::default() };
    let base = optimize_layout(&model, &spectral_init(&model, 7)?, &params)?;
    let before = quintile_distance(&base.coords, &lens);
    write(&out_dir, "before", &base.coords, &lens)?;
    println!("{:<12} {:>8} {:>10}", "lens", "edges", "distance");
    println!("{:<12} {:>8} {:>10.2}", "none", model.n_edges(), before);

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
    for spec in &specs {
        let lensed = apply_lens(&model, spec, &data)?;
        let after = reembed(&lensed, &base, &LayoutParams { seed: 7, ..LayoutParams::for_reembed() })?;
        let d = quintile_distance(&after.coords, &lens);
        println!("{:<12} {:>8} {:>10.2}  x{:.2}", spec.kind(), lensed.n_edges(), d, d / before);
        write(&out_dir, spec.kind(), &after.coords, &lens)?;
    }
    Ok(())
}
