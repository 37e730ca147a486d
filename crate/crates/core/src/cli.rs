//! File-level pipeline: ingest, smoothing, model selection and report output.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::ecm::EcmConfig;
use crate::error::{Error, Result};
use crate::funbasis::{
    build_bspline_basis, smooth_curves, BasisKey, Curve, CurveSet, Domain, Observations,
};
use crate::init::InitConfig;
use crate::metrics::{evaluate, Evaluation};
use crate::selection::{
    fit_with_restarts, select_model, DimensionStrategy, SelectionConfig, SelectionReport,
};
use crate::simulate::{simulate, LabeledCurves, SimSpec};

pub const SCHEMA_VERSION: &str = "1";

/// Points per component in `plotdata.csv`.
pub const PLOT_GRID: usize = 200;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "CFUNHDDC_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row {
    curve_id: String,
    component: usize,
    time: f64,
    value: f64,
}

const COLUMNS: [&str; 4] = ["curve_id", "component", "time", "value"];

/// Reads long-format curves (`curve_id,component,time,value`, components
/// numbered from 1). Curves keep their first-appearance order and points
/// their file order. The domain spans all observed times.
pub fn ingest_csv(path: &Path) -> Result<CurveSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            row: None,
            reason: format!("cannot open {}: {e}", path.display()),
        })?;
    let headers = reader.headers()?.clone();
    let missing: Vec<&str> = COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Ingest {
            row: Some(1),
            reason: format!("missing column(s) {}", missing.join(", ")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<Observations>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize);
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::Ingest {
                row: line,
                reason: e.to_string(),
            })?;
        if row.component == 0 {
            return Err(Error::Ingest {
                row: line,
                reason: "components are numbered from 1".into(),
            });
        }
        if !row.time.is_finite() || !row.value.is_finite() {
            return Err(Error::Ingest {
                row: line,
                reason: "non-finite time or value".into(),
            });
        }
        let comps = by_id.entry(row.curve_id.clone()).or_insert_with(|| {
            order.push(row.curve_id.clone());
            Vec::new()
        });
        if comps.len() < row.component {
            comps.resize_with(row.component, || Observations::new(vec![], vec![]));
        }
        let obs = &mut comps[row.component - 1];
        obs.times.push(row.time);
        obs.values.push(row.value);
    }
    if order.is_empty() {
        return Err(Error::Ingest {
            row: None,
            reason: "no data rows".into(),
        });
    }

    let p = by_id.values().map(Vec::len).max().unwrap_or(0);
    let mut curves = Vec::with_capacity(order.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for id in order {
        let comps = by_id.remove(&id).unwrap();
        if let Some(j) = (0..p).find(|&j| comps.get(j).is_none_or(|o| o.is_empty())) {
            return Err(Error::Ingest {
                row: None,
                reason: format!("curve `{id}` has no observations for component {}", j + 1),
            });
        }
        for t in comps.iter().flat_map(|o| o.times.iter()) {
            lo = lo.min(*t);
            hi = hi.max(*t);
        }
        curves.push(Curve {
            id,
            components: comps,
        });
    }
    let domain = Domain::new(lo, hi)?;
    CurveSet::new(curves, domain)
}

/// Writes curves in the long format read by [`ingest_csv`].
pub fn write_csv(curves: &CurveSet, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for curve in curves.curves() {
        for (j, obs) in curve.components.iter().enumerate() {
            for (t, v) in obs.times.iter().zip(&obs.values) {
                writer.serialize(Row {
                    curve_id: curve.id.clone(),
                    component: j + 1,
                    time: *t,
                    value: *v,
                })?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Rescales every curve's time axis to `[0, 1]` using that curve's own
/// first and last observation times across components.
pub fn normalize_time(curves: &CurveSet) -> Result<CurveSet> {
    let mut out = Vec::with_capacity(curves.len());
    for curve in curves.curves() {
        let times = curve
            .components
            .iter()
            .flat_map(|o| o.times.iter().copied());
        let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        });
        if !(hi > lo) {
            return Err(Error::InvalidCurves(format!(
                "curve `{}` has a constant time axis",
                curve.id
            )));
        }
        let span = hi - lo;
        let components = curve
            .components
            .iter()
            .map(|o| {
                let times = o
                    .times
                    .iter()
                    .map(|&t| if t == hi { 1.0 } else { (t - lo) / span })
                    .collect();
                Observations::new(times, o.values.clone())
            })
            .collect();
        out.push(Curve {
            id: curve.id.clone(),
            components,
        });
    }
    CurveSet::new(out, Domain::unit())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Input(PathBuf),
    Simulate(SimSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DataSource,
    /// Basis functions per component.
    pub basis_size: usize,
    pub degree: usize,
    pub k_values: Vec<usize>,
    pub strategy: DimensionStrategy,
    pub init: InitConfig,
    pub ecm: EcmConfig,
    pub normalize_time: bool,
    /// Not part of the report: the same run writes the same bytes anywhere.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(source: DataSource, out_dir: PathBuf) -> Self {
        RunConfig {
            source,
            basis_size: 25,
            degree: 3,
            k_values: vec![4],
            strategy: DimensionStrategy::Grid(vec![2]),
            init: InitConfig::default(),
            ecm: EcmConfig::default(),
            normalize_time: false,
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config(
                "K values must be non-empty and positive".into(),
            ));
        }
        let empty = match &self.strategy {
            DimensionStrategy::Grid(d) | DimensionStrategy::PerClusterGrid(d) => d.is_empty(),
            DimensionStrategy::Cattell(t) => t.is_empty(),
        };
        if empty {
            return Err(Error::Config("dimension sweep is empty".into()));
        }
        if !(self.ecm.tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance {} must be positive",
                self.ecm.tol
            )));
        }
        self.init.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// 1-based cluster number as used in the output files.
    pub cluster: usize,
    pub size: usize,
    pub outliers: usize,
    pub proportion: f64,
    pub normal_proportion: f64,
    pub inflation: f64,
    pub dim: usize,
    pub signal_variances: Vec<f64>,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAssignment {
    pub curve_id: String,
    pub cluster: usize,
    pub outlier: bool,
    pub t_max: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub n_curves: usize,
    pub n_components: usize,
    pub basis: BasisKey,
    pub config: RunConfig,
    pub selection: SelectionReport,
    pub loglik: f64,
    pub bic: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub clusters: Vec<ClusterSummary>,
    pub n_outliers: usize,
    pub curves: Vec<CurveAssignment>,
    /// Scores against the generating labels, for simulated input only.
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub load_seconds: f64,
    pub smoothing_seconds: f64,
    pub selection_seconds: f64,
    pub output_seconds: f64,
}

fn load(source: &DataSource) -> Result<(CurveSet, Option<LabeledCurves>)> {
    match source {
        DataSource::Input(path) => Ok((ingest_csv(path)?, None)),
        DataSource::Simulate(spec) => {
            let data = simulate(spec)?;
            Ok((data.curves.clone(), Some(data)))
        }
    }
}

/// Thread pool honoring [`THREADS_ENV`]; `None` uses rayon's default.
pub fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    if n == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn in_pool<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match thread_pool()? {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Runs the whole pipeline and writes `report.json`, `assignments.csv`,
/// `plotdata.csv` and `timing.json` into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    in_pool(|| run_inner(config))
}

fn run_inner(config: &RunConfig) -> Result<RunReport> {
    let clock = std::time::Instant::now();
    let (mut curves, truth) = load(&config.source)?;
    if config.normalize_time {
        curves = normalize_time(&curves)?;
    }
    let load_seconds = clock.elapsed().as_secs_f64();

    let clock = std::time::Instant::now();
    let sizes = vec![config.basis_size; curves.n_components()];
    let basis = build_bspline_basis(&sizes, config.degree, curves.domain())?;
    let coeffs = smooth_curves(&curves, &basis)?;
    let smoothing_seconds = clock.elapsed().as_secs_f64();
    info!(
        "{} curves, {} components, basis size {}",
        curves.len(),
        curves.n_components(),
        basis.size()
    );

    let clock = std::time::Instant::now();
    let selection = select_model(
        &coeffs,
        basis.metric(),
        &SelectionConfig {
            k_values: config.k_values.clone(),
            strategy: config.strategy.clone(),
            init: config.init.clone(),
            ecm: config.ecm.clone(),
        },
    )?;
    let selection_seconds = clock.elapsed().as_secs_f64();
    let fit = &selection.best;

    let clock = std::time::Instant::now();
    let clusters = fit
        .model
        .clusters
        .iter()
        .enumerate()
        .map(|(j, c)| ClusterSummary {
            cluster: j + 1,
            size: fit.labels.iter().filter(|&&l| l == j).count(),
            outliers: (0..fit.labels.len())
                .filter(|&i| fit.labels[i] == j && fit.outliers[i])
                .count(),
            proportion: c.proportion,
            normal_proportion: c.normal_proportion,
            inflation: c.inflation,
            dim: c.dim(),
            signal_variances: c.signal_variances.clone(),
            noise_variance: c.noise_variance,
        })
        .collect();
    let assignments: Vec<CurveAssignment> = curves
        .curves()
        .iter()
        .enumerate()
        .map(|(i, curve)| {
            let label = fit.labels[i];
            CurveAssignment {
                curve_id: curve.id.clone(),
                cluster: label + 1,
                outlier: fit.outliers[i],
                t_max: fit.resp.t[(i, label)],
                s: fit.resp.s[(i, label)],
            }
        })
        .collect();
    let evaluation = truth.as_ref().map(|t| evaluate(fit, t)).transpose()?;

    let report = RunReport {
        schema_version: SCHEMA_VERSION.into(),
        n_curves: curves.len(),
        n_components: curves.n_components(),
        basis: basis.key(),
        config: config.clone(),
        selection: selection.report.clone(),
        loglik: fit.loglik,
        bic: fit.bic,
        aic: fit.aic,
        iterations: fit.iterations,
        converged: fit.converged,
        clusters,
        n_outliers: fit.outliers.iter().filter(|o| **o).count(),
        curves: assignments,
        evaluation,
    };

    let plot_times = curves.domain().grid(PLOT_GRID);
    let mut outputs = Outputs::new(&config.out_dir)?;
    let written = (|| {
        outputs.write("report.json", |path| {
            fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
            Ok(())
        })?;
        outputs.write("assignments.csv", |path| {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["curve_id", "cluster", "outlier", "t_max", "s"])?;
            for a in &report.curves {
                w.write_record([
                    a.curve_id.clone(),
                    a.cluster.to_string(),
                    u8::from(a.outlier).to_string(),
                    a.t_max.to_string(),
                    a.s.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        outputs.write("plotdata.csv", |path| {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["curve_id", "component", "t", "value", "cluster", "outlier"])?;
            for (i, a) in report.curves.iter().enumerate() {
                let row = coeffs.row(i);
                for j in 0..basis.n_components() {
                    let values = basis.evaluate(&row, j, &plot_times);
                    for (t, v) in plot_times.iter().zip(values) {
                        w.write_record([
                            a.curve_id.clone(),
                            (j + 1).to_string(),
                            t.to_string(),
                            v.to_string(),
                            a.cluster.to_string(),
                            u8::from(a.outlier).to_string(),
                        ])?;
                    }
                }
            }
            w.flush()?;
            Ok(())
        })?;
        let timing = Timing {
            load_seconds,
            smoothing_seconds,
            selection_seconds,
            output_seconds: clock.elapsed().as_secs_f64(),
        };
        outputs.write("timing.json", |path| {
            fs::write(path, serde_json::to_string_pretty(&timing)? + "\n")?;
            Ok(())
        })
    })();
    if let Err(e) = written {
        outputs.remove_all();
        return Err(e);
    }
    Ok(report)
}

/// Tracks files written into the output directory so a failed run can
/// remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        f(&path)
    }

    fn remove_all(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub spec: SimSpec,
    pub replications: usize,
    pub k: usize,
    pub d: usize,
    pub basis_size: usize,
    pub degree: usize,
    pub init: InitConfig,
    pub ecm: EcmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub evaluation: Option<Evaluation>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub replications: Vec<Replication>,
    pub median_ari_c: Option<f64>,
    pub median_ari_o: Option<f64>,
    pub mean_ari_c: Option<f64>,
    pub mean_ari_o: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Fits `K` clusters with fixed `d` on independently seeded simulated
/// datasets (seeds `spec.seed`, `spec.seed + 1`, …) and scores each fit.
pub fn benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.init.validate()?;
    if config.replications == 0 {
        return Err(Error::Config("at least one replication is needed".into()));
    }
    in_pool(|| {
        let mut reps = Vec::with_capacity(config.replications);
        for r in 0..config.replications {
            let seed = config.spec.seed + r as u64;
            let outcome = (|| {
                let data = simulate(&SimSpec {
                    seed,
                    ..config.spec.clone()
                })?;
                let sizes = vec![config.basis_size; data.curves.n_components()];
                let basis = build_bspline_basis(&sizes, config.degree, data.curves.domain())?;
                let coeffs = smooth_curves(&data.curves, &basis)?;
                let init = InitConfig {
                    seed,
                    ..config.init.clone()
                };
                let rule = crate::ecm::DimensionRule::common(config.d, config.k);
                let fit = fit_with_restarts(
                    &coeffs,
                    basis.metric(),
                    config.k,
                    &rule,
                    &init,
                    &config.ecm,
                )?;
                evaluate(&fit, &data)
            })();
            reps.push(match outcome {
                Ok(e) => Replication {
                    seed,
                    evaluation: Some(e),
                    error: None,
                },
                Err(e) => Replication {
                    seed,
                    evaluation: None,
                    error: Some(e.to_string()),
                },
            });
        }
        let c: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.evaluation.map(|e| e.ari_c))
            .collect();
        let o: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.evaluation.map(|e| e.ari_o))
            .collect();
        Ok(BenchmarkReport {
            config: config.clone(),
            median_ari_c: median(&c),
            median_ari_o: median(&o),
            mean_ari_c: mean(&c),
            mean_ari_o: mean(&o),
            replications: reps,
        })
    })
}

/// Parses `a:b` (inclusive) or a single integer.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("`{s}` is not a range like 2:6"));
    match s.split_once(':') {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

/// Parses a comma-separated list of fractions.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{t}` is not a threshold")))
        })
        .collect()
}
