use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cfunhddc::cli::{self, BenchmarkConfig, DataSource, RunConfig};
use cfunhddc::ecm::EcmConfig;
use cfunhddc::init::{InitConfig, InitMethod};
use cfunhddc::selection::DimensionStrategy;
use cfunhddc::simulate::{simulate, DatasetKind, SimSpec};
use cfunhddc::{Error, Result};

#[derive(Parser)]
#[command(
    version,
    about = "Clustering and outlier detection for multivariate curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth, fit and select a model; write the report files.
    Run(RunArgs),
    /// Write a simulated dataset as long-format CSV.
    Simulate(SimulateArgs),
    /// Score fixed-K fits over repeated simulated datasets.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Starting partition: trimmed, kmeans or random.
    #[arg(long, default_value = "trimmed")]
    init: InitMethod,
    /// Fraction trimmed by the trimmed k-means.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long = "nb-init", default_value_t = 10)]
    nb_init: usize,
    /// Convergence threshold on the log-likelihood.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Basis functions per component.
    #[arg(long, default_value_t = 25)]
    basis: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
}

impl FitArgs {
    fn init(&self) -> InitConfig {
        InitConfig {
            method: self.init,
            trim: self.alpha,
            nb_init: self.nb_init,
            seed: self.seed,
            ..InitConfig::default()
        }
    }

    fn ecm(&self) -> EcmConfig {
        EcmConfig {
            tol: self.eps,
            max_iter: self.max_iter,
            ..EcmConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Simulate the input instead of reading it: dataset1, dataset2 or normal.
    #[arg(long, conflicts_with = "input")]
    simulate: Option<DatasetKind>,
    /// Long-format CSV with columns curve_id,component,time,value.
    #[arg(long, required_unless_present = "simulate")]
    input: Option<PathBuf>,
    #[arg(long = "K", conflicts_with = "k_range")]
    k: Option<usize>,
    /// Inclusive range of cluster counts, e.g. 2:6.
    #[arg(long = "K-range")]
    k_range: Option<String>,
    /// Common intrinsic dimension.
    #[arg(long, conflicts_with_all = ["d_grid", "cattell"])]
    d: Option<usize>,
    /// Inclusive range of common dimensions, e.g. 2:10.
    #[arg(long = "d-grid", conflicts_with = "cattell")]
    d_grid: Option<String>,
    /// Try every per-cluster combination of the --d-grid values.
    #[arg(long = "per-cluster-grid", requires = "d_grid")]
    per_cluster_grid: bool,
    /// Scree-test thresholds, e.g. 0.1,0.15,0.2,0.25.
    #[arg(long)]
    cattell: Option<String>,
    /// Rescale each curve's time axis to [0, 1].
    #[arg(long = "normalize-time")]
    normalize_time: bool,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "dataset1")]
    kind: DatasetKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "per-class", default_value_t = 250)]
    per_class: usize,
    #[arg(long)]
    outlier1: Option<usize>,
    #[arg(long)]
    outlier2: Option<usize>,
    #[arg(long = "noise-sd", default_value_t = 0.5)]
    noise_sd: f64,
    #[arg(long)]
    out: PathBuf,
}

impl SimulateArgs {
    fn spec(&self) -> SimSpec {
        let mut spec = SimSpec::new(self.kind, self.seed);
        spec.per_class = self.per_class;
        spec.noise_sd = self.noise_sd;
        if let Some(n) = self.outlier1 {
            spec.outlier1 = n;
        }
        if let Some(n) = self.outlier2 {
            spec.outlier2 = n;
        }
        spec
    }
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value = "dataset1")]
    simulate: DatasetKind,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[command(flatten)]
    fit: FitArgs,
    /// JSON file for the per-replication scores.
    #[arg(long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> Result<()> {
    let source = match (&args.simulate, &args.input) {
        (Some(kind), _) => DataSource::Simulate(SimSpec::new(*kind, args.fit.seed)),
        (None, Some(path)) => DataSource::Input(path.clone()),
        (None, None) => {
            return Err(Error::Config(
                "either --simulate or --input is required".into(),
            ))
        }
    };
    let k_values = match (&args.k, &args.k_range) {
        (_, Some(r)) => cli::parse_range(r)?,
        (Some(k), None) => vec![*k],
        (None, None) => vec![4],
    };
    let strategy = if let Some(t) = &args.cattell {
        DimensionStrategy::Cattell(cli::parse_thresholds(t)?)
    } else if let Some(g) = &args.d_grid {
        let grid = cli::parse_range(g)?;
        if args.per_cluster_grid {
            DimensionStrategy::PerClusterGrid(grid)
        } else {
            DimensionStrategy::Grid(grid)
        }
    } else {
        DimensionStrategy::Grid(vec![args.d.unwrap_or(2)])
    };
    let mut config = RunConfig::new(source, args.out.clone());
    config.basis_size = args.fit.basis;
    config.degree = args.fit.degree;
    config.k_values = k_values;
    config.strategy = strategy;
    config.init = args.fit.init();
    config.ecm = args.fit.ecm();
    config.normalize_time = args.normalize_time;
    let report = cli::run(&config)?;
    let chosen = report.selection.chosen();
    println!(
        "K = {}, d = {:?}, BIC = {:.3}, {} outlier(s); results in {}",
        chosen.k,
        chosen.dims.clone().unwrap_or_default(),
        report.bic,
        report.n_outliers,
        args.out.display()
    );
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let data = simulate(&args.spec())?;
    cli::write_csv(&data.curves, &args.out)?;
    println!(
        "{} curves written to {}",
        data.curves.len(),
        args.out.display()
    );
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let config = BenchmarkConfig {
        spec: SimSpec::new(args.simulate, args.fit.seed),
        replications: args.replications,
        k: args.k,
        d: args.d,
        basis_size: args.fit.basis,
        degree: args.fit.degree,
        init: args.fit.init(),
        ecm: args.fit.ecm(),
    };
    let report = cli::benchmark(&config)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "median ARI_c = {:?}, median ARI_o = {:?}",
        report.median_ari_c, report.median_ari_o
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Benchmark(args) => benchmark(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "module": e.module(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
