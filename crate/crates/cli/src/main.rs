//! `umap-lens` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use umap_lens::io::{parse_selection, write_atomic};
use umap_lens::{
    apply_lens, build_manifold, contrast_selection, load_csv, load_model, optimize_layout, read_embedding,
    run_benchmark, save_model, spectral_init, Against, AnalysisError, BenchConfig, BenchError, ColumnRole, Dataset,
    DistanceMetric, Embedding, InitMode, IoError, LayoutError, LayoutParams, LensError, LensSpec, ManifoldError,
    MissingPolicy, ModelFile, SegmentStrategy,
};

#[derive(Parser)]
#[command(name = "umap-lens", version, about = "Build UMAP models, apply lenses, and lay out the results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the initial model from a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "euclidean")]
        metric: DistanceMetric,
        #[arg(long, default_value_t = 15)]
        n_neighbors: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Filter a model's edges with a lens.
    Lens {
        #[command(subcommand)]
        kind: LensCommand,
    },
    /// Compute a 2-D embedding of a model.
    Layout {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to 500 epochs up to 10,000 points, 200 above.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `spectral` or `warm:<embedding.csv>`.
        #[arg(long, default_value = "spectral")]
        init: String,
        /// Defaults to 1.0 for spectral and 0.5 for warm starts.
        #[arg(long)]
        repulsion: Option<f64>,
        #[arg(long)]
        min_dist: Option<f64>,
        #[arg(long)]
        spread: Option<f64>,
        /// Lock-free multi-threaded epochs; results vary run to run.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank columns by how well they separate a selection from the rest.
    Contrast {
        #[arg(long)]
        data: PathBuf,
        /// Newline-separated 0-based row indices.
        #[arg(long)]
        selection: PathBuf,
        /// Comparison rows; defaults to every unselected row.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        roles: DataArgs,
    },
    /// Time lens filters on synthetic hypercube data.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
        neighbors: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON-lines file with one row per timed run.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Every `*.csv` here is registered under its file stem.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = umap_lens_service::DEFAULT_MAX_UPLOAD_MB)]
        max_upload_mb: usize,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// `error`, `drop_rows` or `knn_impute:<k>`.
    #[arg(long, default_value = "error")]
    missing: MissingPolicy,
    /// Columns kept out of the feature space but usable as lenses.
    #[arg(long, value_delimiter = ',')]
    lens_only: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

#[derive(Args)]
struct LensIo {
    #[arg(long)]
    model: PathBuf,
    /// The dataset the model was fitted on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "error")]
    missing: MissingPolicy,
}

#[derive(Subcommand)]
enum LensCommand {
    Global {
        #[command(flatten)]
        io: LensIo,
        #[arg(long)]
        dimension: String,
        #[arg(long)]
        segments: usize,
        #[arg(long, default_value = "regular")]
        strategy: SegmentStrategy,
        #[arg(long)]
        circular: bool,
    },
    GlobalMask {
        #[command(flatten)]
        io: LensIo,
        #[arg(long, value_delimiter = ',', required = true)]
        dimensions: Vec<String>,
        #[arg(long)]
        mask_neighbors: usize,
        #[arg(long, default_value = "euclidean")]
        metric: DistanceMetric,
    },
    LocalMask {
        #[command(flatten)]
        io: LensIo,
        #[arg(long, value_delimiter = ',', required = true)]
        dimensions: Vec<String>,
        #[arg(long)]
        mask_neighbors: usize,
        #[arg(long, default_value = "euclidean")]
        metric: DistanceMetric,
    },
}

enum Failure {
    Data(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

macro_rules! data_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.to_string())
            }
        }
    )*};
}

data_failure!(IoError, LensError, ManifoldError, AnalysisError, umap_lens::DataError, std::io::Error);

impl From<LayoutError> for Failure {
    fn from(e: LayoutError) -> Self {
        match e {
            LayoutError::NonFiniteCoordinates { .. } | LayoutError::FitDiverged { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::TooFewObservations(_) | BenchError::DegenerateX => Failure::Numerical(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Data(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn load_data(path: &Path, args: &DataArgs) -> Result<Dataset, Failure> {
    let mut data = load_csv(path, args.missing)?;
    for c in &args.lens_only {
        data.set_role(c, ColumnRole::LensOnly)?;
    }
    for c in &args.labels {
        data.set_role(c, ColumnRole::Label)?;
    }
    Ok(data)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit { input, metric, n_neighbors, out, data } => {
            let data = load_data(&input, &data)?;
            let manifold = build_manifold(&data.features(), n_neighbors, metric)?;
            log::info!("{} vertices, {} edges", manifold.n_vertices(), manifold.n_edges());
            save_model(&ModelFile { manifold, metric, k: n_neighbors, dataset_digest: data.digest() }, out)?;
        }
        Command::Lens { kind } => {
            let (io, spec) = match kind {
                LensCommand::Global { io, dimension, segments, strategy, circular } => {
                    (io, LensSpec::GlobalLens { dimension, n_segments: segments, strategy, circular })
                }
                LensCommand::GlobalMask { io, dimensions, mask_neighbors, metric } => {
                    (io, LensSpec::GlobalMask { dimensions, metric, mask_neighbors })
                }
                LensCommand::LocalMask { io, dimensions, mask_neighbors, metric } => {
                    (io, LensSpec::LocalMask { dimensions, metric, mask_neighbors })
                }
            };
            let model = load_model(&io.model)?;
            let data = load_csv(&io.data, io.missing)?;
            if data.digest() != model.dataset_digest {
                log::warn!("{} does not match the dataset the model was fitted on", io.data.display());
            }
            let manifold = apply_lens(&model.manifold, &spec, &data)?;
            log::info!("{} of {} edges kept", manifold.n_edges(), model.manifold.n_edges());
            save_model(&ModelFile { manifold, ..model }, io.out)?;
        }
        Command::Layout { model, epochs, seed, init, repulsion, min_dist, spread, parallel, out } => {
            let model = load_model(&model)?;
            let m = &model.manifold;
            let mut params = LayoutParams { n_epochs: epochs, seed, deterministic: !parallel, ..LayoutParams::default() };
            let start = match init.split_once(':') {
                None if init == "spectral" => spectral_init(m, seed)?,
                Some(("warm", path)) if !path.is_empty() => {
                    params.repulsion_strength = LayoutParams::for_reembed().repulsion_strength;
                    Embedding { coords: read_embedding(path)?, source_digest: String::new(), init: InitMode::WarmStart }
                }
                _ => return Err(Failure::Data(format!("--init must be `spectral` or `warm:<csv>`, got `{init}`"))),
            };
            if let Some(r) = repulsion {
                params.repulsion_strength = r;
            }
            params.min_dist = min_dist.unwrap_or(params.min_dist);
            params.spread = spread.unwrap_or(params.spread);
            let embedding = optimize_layout(m, &start, &params)?;
            umap_lens::write_embedding(out, &embedding.coords)?;
        }
        Command::Contrast { data, selection, against, out, roles } => {
            let data = load_data(&data, &roles)?;
            let selected = parse_selection(&std::fs::read_to_string(&selection)?)?;
            let against = match against {
                Some(p) => Against::Other(parse_selection(&std::fs::read_to_string(p)?)?),
                None => Against::Rest,
            };
            let result = contrast_selection(&data, &selected, &against)?;
            let json = serde_json::to_string_pretty(&result).expect("contrast result serialises") + "\n";
            match out {
                Some(p) => write_atomic(p, json.as_bytes())?,
                None => print!("{json}"),
            }
        }
        Command::Bench { sizes, neighbors, repeats, seed, out } => {
            let config = BenchConfig { sizes, n_neighbors: neighbors, repeats, seed, ..BenchConfig::default() };
            let mut report = run_benchmark(&config)?;
            report.compute_fits();
            write_atomic(&out, report.to_jsonl().as_bytes())?;
            print!("{}", report.summary_csv());
        }
        Command::Serve { port, host, data_dir, max_upload_mb } => {
            let state = umap_lens_service::AppState::new();
            if let Some(dir) = data_dir {
                umap_lens_service::preload_dir(&state, &dir, MissingPolicy::Error)
                    .map_err(|e| Failure::Data(e.to_string()))?;
            }
            let config = umap_lens_service::ServiceConfig { max_upload_bytes: max_upload_mb << 20 };
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(umap_lens_service::serve((host, port).into(), state, config))?;
        }
    }
    Ok(())
}
