pub mod analysis;
pub mod bench;
pub mod dataset;
pub mod graph;
pub mod io;
pub mod knn;
pub mod layout;
pub mod lenses;
pub mod manifold;
pub mod metric;
pub mod synthetic;

pub use analysis::{
    contrast_selection, equal_histogram_normalize, ks_test, Against, AnalysisError, ContrastResult, FeatureContrast,
    KsResult,
};
pub use bench::{
    fit_regression, generate_hypercube, run_benchmark, BenchConfig, BenchError, BenchLens, BenchReport, BenchRow,
    Regression,
};
pub use dataset::{ColumnRole, DataError, Dataset};
pub use graph::{connected_components, symmetrize_max, symmetrize_union, DirectedWeightedGraph, GraphError, Manifold};
pub use io::{
    load_csv, load_model, parse_csv, read_embedding, save_model, write_embedding, IoError, MissingPolicy, ModelFile,
    RawTable,
};
pub use knn::{build_knn, build_knn_with, KnnGraph, KnnOptions};
pub use lenses::{
    apply_global_lens, apply_global_mask, apply_lens, apply_lens_sequence, apply_local_mask,
    normalize_weights, segment_lens, LensError, LensSpec, SegmentAssignment, SegmentStrategy,
};
pub use layout::{
    fit_curve, optimize_layout, optimize_layout_with_progress, random_init, reembed, separate_components,
    spectral_init, Curve, EdgeSchedule, Embedding, InitMode, LayoutError, LayoutParams,
};
pub use manifold::{build_manifold, build_manifold_with, smooth_weights, ManifoldError};
pub use metric::DistanceMetric;
pub use synthetic::{generate_hairpin, SyntheticError};
