//! Model complexity, information criteria and the model-selection sweep.

use std::cmp::Ordering;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecm::{fit, DimensionRule, EcmConfig, FitResult};
use crate::error::{Error, Result};
use crate::funbasis::{BasisKey, CoefficientMatrix, CoefficientMetric};
use crate::init::{initialize, InitConfig};

/// Free-parameter count of a mixture with `K` clusters on a basis of size `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCount {
    /// Means and proportions, `KB + K − 1`.
    pub h: u64,
    /// Orientation matrices, `Σ d_k (B − (d_k + 1)/2)`.
    pub w: u64,
    /// Variances, `K + Σ d_k`.
    #[serde(rename = "D")]
    pub d: u64,
    /// `β_k` and `η_k`, `2K`.
    pub extra: u64,
    pub total: u64,
}

pub fn count_parameters(k: usize, b: usize, dims: &[usize]) -> Result<ComplexityCount> {
    if k == 0 || b == 0 {
        return Err(Error::Selection(format!(
            "K = {k}, B = {b}: both must be positive"
        )));
    }
    if dims.len() != k {
        return Err(Error::Selection(format!(
            "{} dimensions for K = {k}",
            dims.len()
        )));
    }
    if let Some(&bad) = dims.iter().find(|&&d| d == 0 || d > b) {
        return Err(Error::Dimension {
            dim: bad,
            basis_size: b,
        });
    }
    let (k, b) = (k as u64, b as u64);
    let h = k * b + k - 1;
    // d(2B − d − 1) is always even
    let w = dims
        .iter()
        .map(|&d| d as u64 * (2 * b - d as u64 - 1) / 2)
        .sum();
    let d = k + dims.iter().map(|&d| d as u64).sum::<u64>();
    let extra = 2 * k;
    Ok(ComplexityCount {
        h,
        w,
        d,
        extra,
        total: h + w + d + extra,
    })
}

/// `ℓ − (ξ/2) log n`; larger is better.
pub fn bic(loglik: f64, xi: u64, n: usize) -> f64 {
    loglik - xi as f64 / 2.0 * (n as f64).ln()
}

/// `ℓ − ξ`; larger is better.
pub fn aic(loglik: f64, xi: u64) -> f64 {
    loglik - xi as f64
}

/// Scree test: the largest `l` whose eigenvalue gap `λ_l − λ_{l+1}` is at
/// least `threshold` times the largest gap.
pub fn cattell_select(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if eigenvalues.len() < 2 {
        return Err(Error::Selection(
            "scree test needs at least two eigenvalues".into(),
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Selection(format!(
            "scree threshold {threshold} not in (0, 1]"
        )));
    }
    let diffs: Vec<f64> = eigenvalues.windows(2).map(|w| w[0] - w[1]).collect();
    let max = diffs.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        debug!("flat eigenvalue spectrum; scree test falls back to d = 1");
        return Ok(1);
    }
    let cut = threshold * max;
    Ok(diffs.iter().rposition(|&d| d >= cut).map_or(1, |l| l + 1))
}

/// How the intrinsic dimensions are swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionStrategy {
    /// One common `d` for every cluster, swept over the set.
    Grid(Vec<usize>),
    /// Every combination of per-cluster dimensions from the set.
    PerClusterGrid(Vec<usize>),
    /// Scree test at every CM1 step, swept over thresholds.
    Cattell(Vec<f64>),
}

/// Upper bound on per-cluster grid combinations for one `K`.
pub const MAX_PER_CLUSTER_COMBINATIONS: usize = 4096;

/// One dimension setting tried in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionSetting {
    Fixed(Vec<usize>),
    Cattell(f64),
}

impl DimensionSetting {
    pub fn rule(&self) -> DimensionRule {
        match self {
            DimensionSetting::Fixed(d) => DimensionRule::Fixed(d.clone()),
            DimensionSetting::Cattell(t) => DimensionRule::Cattell { threshold: *t },
        }
    }
}

impl DimensionStrategy {
    fn settings(&self, k: usize) -> Result<Vec<DimensionSetting>> {
        let out: Vec<DimensionSetting> = match self {
            DimensionStrategy::Grid(ds) => ds
                .iter()
                .map(|&d| DimensionSetting::Fixed(vec![d; k]))
                .collect(),
            DimensionStrategy::PerClusterGrid(ds) => {
                let total = (ds.len() as f64).powi(k as i32);
                if total > MAX_PER_CLUSTER_COMBINATIONS as f64 {
                    return Err(Error::Config(format!(
                        "per-cluster grid of {} values for K = {k} has {total} combinations \
                         (limit {MAX_PER_CLUSTER_COMBINATIONS})",
                        ds.len()
                    )));
                }
                let mut combos = vec![Vec::new()];
                for _ in 0..k {
                    combos = combos
                        .into_iter()
                        .flat_map(|prefix: Vec<usize>| {
                            ds.iter().map(move |&d| {
                                let mut next = prefix.clone();
                                next.push(d);
                                next
                            })
                        })
                        .collect();
                }
                combos.into_iter().map(DimensionSetting::Fixed).collect()
            }
            DimensionStrategy::Cattell(ts) => {
                ts.iter().map(|&t| DimensionSetting::Cattell(t)).collect()
            }
        };
        if out.is_empty() {
            return Err(Error::Config("empty dimension sweep".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k_values: Vec<usize>,
    pub strategy: DimensionStrategy,
    pub init: InitConfig,
    pub ecm: EcmConfig,
}

/// One restart of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cell: usize,
    pub k: usize,
    pub setting: DimensionSetting,
    pub restart: usize,
    /// Final per-cluster dimensions (differs from the setting under the scree test).
    pub dims: Option<Vec<usize>>,
    pub loglik: Option<f64>,
    pub n_params: Option<u64>,
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

impl Candidate {
    fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub k: usize,
    pub setting: DimensionSetting,
    /// Index into the candidate table of the cell's best restart, if any succeeded.
    pub best: Option<usize>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub basis: Option<BasisKey>,
    pub n: usize,
    pub cells: Vec<Cell>,
    pub candidates: Vec<Candidate>,
    /// Index into `candidates`.
    pub chosen: usize,
    pub tie_break: Vec<String>,
}

impl SelectionReport {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }
}

/// The report plus the selected fit.
#[derive(Debug, Clone)]
pub struct Selection {
    pub report: SelectionReport,
    pub best: FitResult,
}

/// Refuses to compare criteria computed on different bases.
pub fn ensure_same_basis(a: &SelectionReport, b: &SelectionReport) -> Result<()> {
    if a.basis != b.basis || a.n != b.n {
        return Err(Error::Selection(
            "information criteria are only comparable on the same coefficients and basis".into(),
        ));
    }
    Ok(())
}

/// Best fit out of `nb_init` restarts of one configuration, highest BIC first
/// among converged runs, then among all runs; ties go to the lower restart.
pub fn fit_with_restarts(
    coeffs: &CoefficientMatrix,
    metric: &CoefficientMetric,
    k: usize,
    rule: &DimensionRule,
    init: &InitConfig,
    ecm: &EcmConfig,
) -> Result<FitResult> {
    init.validate()?;
    let runs: Vec<Result<FitResult>> = (0..init.nb_init)
        .into_par_iter()
        .map(|r| run_one(coeffs, metric, k, rule, &init.for_restart(r), ecm))
        .collect();
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(f) => {
                if best
                    .as_ref()
                    .is_none_or(|b| fit_rank(&f, b) == Ordering::Less)
                {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart"))
}

fn fit_rank(a: &FitResult, b: &FitResult) -> Ordering {
    b.converged.cmp(&a.converged).then(b.bic.total_cmp(&a.bic))
}

fn run_one(
    coeffs: &CoefficientMatrix,
    metric: &CoefficientMetric,
    k: usize,
    rule: &DimensionRule,
    init: &InitConfig,
    ecm: &EcmConfig,
) -> Result<FitResult> {
    let state = initialize(coeffs, k, init)?;
    fit(coeffs, metric, rule, &state, ecm)
}

/// Sweeps `K` and the dimension settings, `nb_init` restarts each, and picks
/// the fit with the highest BIC.
pub fn select_model(
    coeffs: &CoefficientMatrix,
    metric: &CoefficientMetric,
    config: &SelectionConfig,
) -> Result<Selection> {
    config.init.validate()?;
    if config.k_values.is_empty() {
        return Err(Error::Config("empty K range".into()));
    }
    let mut cells = Vec::new();
    for &k in &config.k_values {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        for setting in config.strategy.settings(k)? {
            cells.push(Cell {
                k,
                setting,
                best: None,
                failed: true,
            });
        }
    }
    let nb_init = config.init.nb_init;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..nb_init).map(move |r| (c, r)))
        .collect();
    info!(
        "selection sweep: {} cells x {nb_init} restarts",
        cells.len()
    );

    let results: Vec<(Candidate, Option<FitResult>)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cell = &cells[c];
            let outcome = run_one(
                coeffs,
                metric,
                cell.k,
                &cell.setting.rule(),
                &config.init.for_restart(r),
                &config.ecm,
            );
            let mut cand = Candidate {
                cell: c,
                k: cell.k,
                setting: cell.setting.clone(),
                restart: r,
                dims: None,
                loglik: None,
                n_params: None,
                bic: None,
                aic: None,
                converged: false,
                iterations: None,
                error: None,
            };
            match outcome {
                Ok(f) => {
                    cand.dims = Some(f.dims());
                    cand.loglik = Some(f.loglik);
                    cand.n_params = Some(f.complexity.total);
                    cand.bic = Some(f.bic);
                    cand.aic = Some(f.aic);
                    cand.converged = f.converged;
                    cand.iterations = Some(f.iterations);
                    (cand, Some(f))
                }
                Err(e) => {
                    debug!("K = {} restart {r} failed: {e}", cell.k);
                    cand.error = Some(e.to_string());
                    (cand, None)
                }
            }
        })
        .collect();

    let (candidates, mut fits): (Vec<Candidate>, Vec<Option<FitResult>>) =
        results.into_iter().unzip();

    for (c, cell) in cells.iter_mut().enumerate() {
        let best = candidates
            .iter()
            .enumerate()
            .filter(|(_, cand)| cand.cell == c && cand.succeeded())
            .min_by(|(_, x), (_, y)| rank(x, y));
        cell.best = best.map(|(i, _)| i);
        cell.failed = cell.best.is_none();
    }

    let finalists: Vec<usize> = cells.iter().filter_map(|c| c.best).collect();
    if finalists.is_empty() {
        return Err(Error::Selection(
            "every restart of every cell failed".into(),
        ));
    }
    let mut tie_break = Vec::new();
    let any_converged = finalists.iter().any(|&i| candidates[i].converged);
    if !any_converged {
        tie_break.push("no candidate converged; choosing among non-converged fits".into());
    }
    let pool: Vec<usize> = finalists
        .iter()
        .copied()
        .filter(|&i| candidates[i].converged || !any_converged)
        .collect();
    let chosen = *pool
        .iter()
        .min_by(|&&x, &&y| rank(&candidates[x], &candidates[y]))
        .unwrap();
    let top = candidates[chosen].bic.unwrap();
    let tied: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| candidates[i].bic.unwrap() == top)
        .collect();
    if tied.len() > 1 {
        tie_break.push(format!(
            "{} candidates share BIC {top}; resolved by smaller K, then smaller total d, then lower restart",
            tied.len()
        ));
    } else {
        tie_break.push("unique highest BIC".into());
    }

    let best = fits[chosen].take().expect("chosen candidate has a fit");
    Ok(Selection {
        report: SelectionReport {
            basis: coeffs.basis_key().cloned(),
            n: coeffs.n_rows(),
            cells,
            candidates,
            chosen,
            tie_break,
        },
        best,
    })
}

/// Ordering of successful candidates: converged first, higher BIC, smaller
/// `K`, smaller `Σ d_k`, lower restart, earlier cell.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    let sum = |c: &Candidate| c.dims.as_ref().map_or(0, |d| d.iter().sum::<usize>());
    b.converged
        .cmp(&a.converged)
        .then(b.bic.unwrap().total_cmp(&a.bic.unwrap()))
        .then(a.k.cmp(&b.k))
        .then(sum(a).cmp(&sum(b)))
        .then(a.restart.cmp(&b.restart))
        .then(a.cell.cmp(&b.cell))
}
