//! The contaminated functional mixture and its ECM inference.
//!
//! Each cluster is a two-component contaminated Gaussian on the basis
//! coefficients: a normal part `N(μ_k, Σ_k)` with weight `β_k` and an
//! abnormal part `N(μ_k, η_k Σ_k)`. `Σ_k` is never formed. With
//! `y = W^{1/2}(c − μ_k)` the covariance is diagonal in the orthonormal frame
//! `Q_k`: the first `d_k` directions (columns of `U_k`) carry variances
//! `a_k1 ≥ … ≥ a_kd`, the remaining `B − d_k` share the noise variance `b_k`.
//!
//! All computations run on whitened coefficients `y_i = W^{1/2} c_i`, so a
//! Mahalanobis distance costs `O(B·d_k)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funbasis::{CoefficientMatrix, CoefficientMetric};
use crate::init::InitState;
use crate::selection::{aic, bic, cattell_select, count_parameters, ComplexityCount};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Below this abnormal weight `Σ t_ik (1 − s_ik)` the inflation update is skipped.
pub const INFLATION_DEGENERACY: f64 = 1e-8;

/// Relative floor of the noise variance: `b_k ≥ 1e-10 · trace(M_k) / B`.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Relative weight below which an observation is skipped in the CM1 sums.
pub const ACTIVE_WEIGHT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    /// Mixing proportion `π_k`.
    pub proportion: f64,
    /// Proportion of normal observations `β_k`.
    pub normal_proportion: f64,
    /// Covariance inflation `η_k` of the abnormal component.
    pub inflation: f64,
    /// Mean `μ_k` in coefficient space.
    pub mean: DVector<f64>,
    /// `B × d_k` leading eigenvectors of `W^{1/2} H_k W^{1/2}`.
    pub orientation: DMatrix<f64>,
    /// `a_k1 ≥ … ≥ a_kd`.
    pub signal_variances: Vec<f64>,
    /// `b_k`.
    pub noise_variance: f64,
}

impl ClusterParams {
    pub fn dim(&self) -> usize {
        self.signal_variances.len()
    }

    /// `trace(R_k) = Σ a_kl + (B − d_k) b_k`.
    pub fn total_variance(&self) -> f64 {
        let b = self.mean.len();
        self.signal_variances.iter().sum::<f64>() + (b - self.dim()) as f64 * self.noise_variance
    }

    fn validate(&self, basis_size: usize, index: usize) -> Result<()> {
        let d = self.dim();
        let bad = |what: &str| Err(Error::Numeric(format!("cluster {index}: {what}")));
        if self.mean.len() != basis_size || self.orientation.shape() != (basis_size, d) {
            return bad("parameter shapes do not match the basis");
        }
        if d > basis_size {
            return Err(Error::Dimension { dim: d, basis_size });
        }
        if !(self.noise_variance > 0.0) || self.signal_variances.iter().any(|a| !(*a > 0.0)) {
            return bad("variances must be positive");
        }
        if !(self.inflation >= 1.0) || !(0.0..=1.0).contains(&self.normal_proportion) {
            return bad("inflation below 1 or normal proportion outside [0, 1]");
        }
        Ok(())
    }

    /// `log` of the covariance determinant in the whitened frame, `log |R_k|`.
    fn log_det_frame(&self) -> f64 {
        let b = self.mean.len();
        self.signal_variances.iter().map(|a| a.ln()).sum::<f64>()
            + (b - self.dim()) as f64 * self.noise_variance.ln()
    }
}

/// A fitted or candidate mixture, tied to the coefficient metric it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub clusters: Vec<ClusterParams>,
    metric: CoefficientMetric,
}

impl MixtureModel {
    pub fn new(clusters: Vec<ClusterParams>, metric: CoefficientMetric) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Numeric("mixture without clusters".into()));
        }
        for (k, c) in clusters.iter().enumerate() {
            c.validate(metric.dim(), k)?;
        }
        let total: f64 = clusters.iter().map(|c| c.proportion).sum();
        if (total - 1.0).abs() > 1e-10 || clusters.iter().any(|c| !(c.proportion > 0.0)) {
            return Err(Error::Numeric(format!(
                "mixing proportions must be positive and sum to 1 (sum {total})"
            )));
        }
        Ok(MixtureModel { clusters, metric })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn basis_size(&self) -> usize {
        self.metric.dim()
    }

    pub fn metric(&self) -> &CoefficientMetric {
        &self.metric
    }

    pub fn dims(&self) -> Vec<usize> {
        self.clusters.iter().map(ClusterParams::dim).collect()
    }
}

/// Posterior cluster memberships `t` and normality probabilities `s`, both `n × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub t: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// How the intrinsic dimensions are chosen inside the CM1 step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRule {
    /// `d_k` fixed for the whole run.
    Fixed(Vec<usize>),
    /// `d_k` re-selected by the scree test at every CM1 step.
    Cattell { threshold: f64 },
}

impl DimensionRule {
    pub fn common(d: usize, k: usize) -> Self {
        DimensionRule::Fixed(vec![d; k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmConfig {
    /// Stop when the observed log-likelihood moves less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound applied to every inflation update inside [`fit`].
    pub min_inflation: f64,
    /// When false, `β = 1`, `η = 1` and `s ≡ 1`: the uncontaminated model.
    pub contamination: bool,
}

impl Default for EcmConfig {
    fn default() -> Self {
        EcmConfig {
            tol: 1e-4,
            max_iter: 200,
            min_inflation: DEFAULT_MIN_INFLATION,
            contamination: true,
        }
    }
}

/// Default lower bound on `η_k` inside [`fit`]. With the uniform initial
/// normality weights, `η = 1` is a fixed point of the iteration; starting
/// strictly above it lets contaminated clusters move away.
pub const DEFAULT_MIN_INFLATION: f64 = 1.001;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    pub resp: Responsibilities,
    /// Observed log-likelihood after the initial CM pass and after every iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// MAP cluster index (0-based) per observation.
    pub labels: Vec<usize>,
    /// `s_{i,label_i} ≤ 0.5`.
    pub outliers: Vec<bool>,
    pub loglik: f64,
    pub complexity: ComplexityCount,
    pub bic: f64,
    pub aic: f64,
}

impl FitResult {
    pub fn n_clusters(&self) -> usize {
        self.model.n_clusters()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.model.dims()
    }
}

// ---------------------------------------------------------------------------
// densities

struct Prepared<'a> {
    params: &'a ClusterParams,
    whitened_mean: DVector<f64>,
    log_det: f64,
}

impl<'a> Prepared<'a> {
    fn new(params: &'a ClusterParams, metric: &CoefficientMetric) -> Self {
        Prepared {
            params,
            whitened_mean: metric.whiten(&params.mean),
            log_det: params.log_det_frame() - metric.log_det(),
        }
    }

    /// Mahalanobis distances of all whitened rows under `Σ_k`.
    fn mahalanobis(&self, y: &DMatrix<f64>) -> Vec<f64> {
        let (n, b) = y.shape();
        let mut centered = y.clone();
        for j in 0..b {
            let m = self.whitened_mean[j];
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let proj = &centered * &self.params.orientation;
        let inv_b = 1.0 / self.params.noise_variance;
        (0..n)
            .map(|i| {
                let norm: f64 = centered.row(i).norm_squared();
                let mut signal = 0.0;
                let mut explained = 0.0;
                for (l, a) in self.params.signal_variances.iter().enumerate() {
                    let rho2 = proj[(i, l)] * proj[(i, l)];
                    signal += rho2 / a;
                    explained += rho2;
                }
                signal + (norm - explained).max(0.0) * inv_b
            })
            .collect()
    }

    fn log_density(&self, mahal: f64, inflated: bool) -> f64 {
        let b = self.whitened_mean.len() as f64;
        if inflated {
            let eta = self.params.inflation;
            -0.5 * (b * LOG_2PI + b * eta.ln() + self.log_det + mahal / eta)
        } else {
            -0.5 * (b * LOG_2PI + self.log_det + mahal)
        }
    }
}

/// `log N(c; μ_k, Σ_k)`, or with `η_k Σ_k` when `inflated`.
pub fn cluster_log_density(
    c: &DVector<f64>,
    cluster: &ClusterParams,
    inflated: bool,
    metric: &CoefficientMetric,
) -> Result<f64> {
    cluster.validate(metric.dim(), 0)?;
    if c.len() != metric.dim() {
        return Err(Error::Numeric(format!(
            "coefficient vector of length {} for basis size {}",
            c.len(),
            metric.dim()
        )));
    }
    let prep = Prepared::new(cluster, metric);
    let y = DMatrix::from_row_slice(1, c.len(), metric.whiten(c).as_slice());
    let value = prep.log_density(prep.mahalanobis(&y)[0], inflated);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite log density ({value})")));
    }
    Ok(value)
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-observation, per-cluster log terms of the mixture.
struct Densities {
    /// `log β_k + log f(c_i; μ_k, Σ_k)`
    normal: DMatrix<f64>,
    /// `log(1 − β_k) + log f(c_i; μ_k, η_k Σ_k)`
    abnormal: DMatrix<f64>,
    log_prop: Vec<f64>,
}

fn densities_with(
    y: &DMatrix<f64>,
    model: &MixtureModel,
    mahal: Option<&[Vec<f64>]>,
) -> Result<Densities> {
    let n = y.nrows();
    let k = model.n_clusters();
    let mut normal = DMatrix::zeros(n, k);
    let mut abnormal = DMatrix::zeros(n, k);
    for (j, cluster) in model.clusters.iter().enumerate() {
        let prep = Prepared::new(cluster, model.metric());
        let computed;
        let m = match mahal {
            Some(m) => &m[j],
            None => {
                computed = prep.mahalanobis(y);
                &computed
            }
        };
        let log_beta = cluster.normal_proportion.ln();
        let log_not_beta = (1.0 - cluster.normal_proportion).ln();
        for i in 0..n {
            normal[(i, j)] = log_beta + prep.log_density(m[i], false);
            abnormal[(i, j)] = log_not_beta + prep.log_density(m[i], true);
            if normal[(i, j)].is_nan() || abnormal[(i, j)].is_nan() {
                return Err(Error::Numeric(format!(
                    "NaN density for observation {i} in cluster {j}"
                )));
            }
        }
    }
    Ok(Densities {
        normal,
        abnormal,
        log_prop: model.clusters.iter().map(|c| c.proportion.ln()).collect(),
    })
}

impl Densities {
    fn cluster_term(&self, i: usize, k: usize) -> f64 {
        self.log_prop[k] + log_add(self.normal[(i, k)], self.abnormal[(i, k)])
    }

    fn log_likelihood(&self) -> Result<f64> {
        let (n, k) = self.normal.shape();
        let mut total = 0.0;
        for i in 0..n {
            let terms: Vec<f64> = (0..k).map(|j| self.cluster_term(i, j)).collect();
            let value = log_sum_exp(&terms);
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "observation {i} has zero likelihood under every cluster"
                )));
            }
            total += value;
        }
        if !total.is_finite() {
            return Err(Error::Numeric("non-finite log-likelihood".into()));
        }
        Ok(total)
    }

    fn responsibilities(&self) -> Result<Responsibilities> {
        let (n, k) = self.normal.shape();
        let mut t = DMatrix::zeros(n, k);
        let mut s = DMatrix::zeros(n, k);
        let mut terms = vec![0.0; k];
        for i in 0..n {
            for (j, term) in terms.iter_mut().enumerate() {
                let within = log_add(self.normal[(i, j)], self.abnormal[(i, j)]);
                *term = self.log_prop[j] + within;
                s[(i, j)] = if within == f64::NEG_INFINITY {
                    0.0
                } else {
                    (self.normal[(i, j)] - within).exp().min(1.0)
                };
            }
            let total = log_sum_exp(&terms);
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "observation {i} underflows under every cluster"
                )));
            }
            for (j, term) in terms.iter().enumerate() {
                t[(i, j)] = (term - total).exp();
            }
            let row_sum: f64 = t.row(i).sum();
            t.row_mut(i).scale_mut(1.0 / row_sum);
        }
        Ok(Responsibilities { t, s })
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_shapes(coeffs: &CoefficientMatrix, metric: &CoefficientMetric) -> Result<()> {
    if coeffs.n_cols() != metric.dim() {
        return Err(Error::Numeric(format!(
            "{} coefficient columns for a metric of dimension {}",
            coeffs.n_cols(),
            metric.dim()
        )));
    }
    Ok(())
}

/// Posterior probabilities `t_ik` and `s_ik` under `model`.
pub fn e_step(coeffs: &CoefficientMatrix, model: &MixtureModel) -> Result<Responsibilities> {
    check_shapes(coeffs, model.metric())?;
    let y = model.metric().whiten_rows(coeffs.matrix());
    densities_with(&y, model, None)?.responsibilities()
}

/// `Σ_i log Σ_k π_k [β_k f(c_i; μ_k, Σ_k) + (1 − β_k) f(c_i; μ_k, η_k Σ_k)]`.
pub fn observed_log_likelihood(coeffs: &CoefficientMatrix, model: &MixtureModel) -> Result<f64> {
    check_shapes(coeffs, model.metric())?;
    let y = model.metric().whiten_rows(coeffs.matrix());
    densities_with(&y, model, None)?.log_likelihood()
}

// ---------------------------------------------------------------------------
// conditional maximization

fn check_resp(resp: &Responsibilities, n: usize) -> Result<usize> {
    let k = resp.t.ncols();
    if resp.t.nrows() != n || resp.s.shape() != resp.t.shape() || k == 0 {
        return Err(Error::Numeric(format!(
            "responsibilities of shape {:?}/{:?} for {n} observations",
            resp.t.shape(),
            resp.s.shape()
        )));
    }
    Ok(k)
}

fn cm1_whitened(
    coeffs: &DMatrix<f64>,
    y: &DMatrix<f64>,
    resp: &Responsibilities,
    inflation: &[f64],
    dims: &DimensionRule,
    metric: &CoefficientMetric,
) -> Result<Vec<ClusterParams>> {
    let (n, b) = coeffs.shape();
    let k = check_resp(resp, n)?;
    if inflation.len() != k {
        return Err(Error::Numeric(format!(
            "{} inflation factors for K = {k}",
            inflation.len()
        )));
    }
    if let DimensionRule::Fixed(d) = dims {
        if d.len() != k {
            return Err(Error::Config(format!("{} dimensions for K = {k}", d.len())));
        }
        if let Some(&bad) = d.iter().find(|&&d| d == 0 || d >= b) {
            return Err(Error::Dimension {
                dim: bad,
                basis_size: b,
            });
        }
    }

    let mut clusters = Vec::with_capacity(k);
    for j in 0..k {
        let t = resp.t.column(j);
        let s = resp.s.column(j);
        let gamma: f64 = t.sum();
        let fixed_d = match dims {
            DimensionRule::Fixed(d) => Some(d[j]),
            DimensionRule::Cattell { .. } => None,
        };
        if let Some(d) = fixed_d {
            let threshold = (d + 2) as f64;
            if !(gamma >= threshold) {
                return Err(Error::DegenerateCluster {
                    cluster: j,
                    weight: gamma,
                    threshold,
                });
            }
        }
        let normal_weight: f64 = t.component_mul(&s).sum();
        let eta = inflation[j];
        let weights: Vec<f64> = (0..n).map(|i| t[i] * (s[i] + (1.0 - s[i]) / eta)).collect();
        let weight_sum: f64 = weights.iter().sum();
        if !(weight_sum > 0.0) {
            return Err(Error::DegenerateCluster {
                cluster: j,
                weight: weight_sum,
                threshold: 0.0,
            });
        }

        // observations whose weight is negligible next to the cluster's largest
        // one are left out of the mean and scatter sums
        let cutoff = ACTIVE_WEIGHT * weights.iter().copied().fold(0.0, f64::max);
        let active: Vec<usize> = (0..n).filter(|&i| weights[i] > cutoff).collect();
        let active_sum: f64 = active.iter().map(|&i| weights[i]).sum();
        let mut mean = DVector::zeros(b);
        for &i in &active {
            for col in 0..b {
                mean[col] += weights[i] * coeffs[(i, col)];
            }
        }
        mean /= active_sum;
        let wmean = metric.whiten(&mean);

        // rows sqrt(w_i) (y_i − W^{1/2} μ_k); scatter = Zᵀ Z / γ_k
        let z = DMatrix::from_fn(active.len(), b, |r, col| {
            let i = active[r];
            (y[(i, col)] - wmean[col]) * weights[i].sqrt()
        });
        let mut scatter = z.tr_mul(&z);
        scatter /= gamma;
        let scatter = (&scatter + scatter.transpose()) * 0.5;
        let trace = scatter.trace();

        let eig = SymmetricEigen::new(scatter);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "eigensolver failed for cluster {j}"
            )));
        }

        let d = match fixed_d {
            Some(d) => d,
            None => {
                let DimensionRule::Cattell { threshold } = dims else {
                    unreachable!()
                };
                let positive: Vec<f64> = sorted.iter().map(|v| v.max(0.0)).collect();
                let d = cattell_select(&positive, *threshold)?.min(b - 1);
                let needed = (d + 2) as f64;
                if !(gamma >= needed) {
                    return Err(Error::DegenerateCluster {
                        cluster: j,
                        weight: gamma,
                        threshold: needed,
                    });
                }
                d
            }
        };

        let leading: f64 = sorted[..d].iter().sum();
        let floor = NOISE_FLOOR * trace.max(f64::MIN_POSITIVE) / b as f64;
        let noise = ((trace - leading) / (b - d) as f64).max(floor);
        let signal: Vec<f64> = sorted[..d].iter().map(|l| l.max(noise)).collect();
        let mut orientation = DMatrix::zeros(b, d);
        for (l, &idx) in order[..d].iter().enumerate() {
            orientation.set_column(l, &eig.eigenvectors.column(idx));
        }

        clusters.push(ClusterParams {
            proportion: gamma / n as f64,
            normal_proportion: (normal_weight / gamma).clamp(0.0, 1.0),
            inflation: eta,
            mean,
            orientation,
            signal_variances: signal,
            noise_variance: noise,
        });
    }
    Ok(clusters)
}

/// First conditional maximization: `π, β, μ, U, a, b` given the current
/// responsibilities and inflation factors. The returned clusters carry the
/// given `inflation` unchanged.
pub fn cm1_step(
    coeffs: &CoefficientMatrix,
    resp: &Responsibilities,
    inflation: &[f64],
    dims: &DimensionRule,
    metric: &CoefficientMetric,
) -> Result<Vec<ClusterParams>> {
    check_shapes(coeffs, metric)?;
    let y = metric.whiten_rows(coeffs.matrix());
    cm1_whitened(coeffs.matrix(), &y, resp, inflation, dims, metric)
}

fn inflation_update(
    resp: &Responsibilities,
    cluster: usize,
    mahal: &[f64],
    basis_size: usize,
) -> f64 {
    let t = resp.t.column(cluster);
    let s = resp.s.column(cluster);
    let mut numerator = 0.0;
    let mut abnormal = 0.0;
    for i in 0..mahal.len() {
        let w = t[i] * (1.0 - s[i]);
        numerator += w * mahal[i];
        abnormal += w;
    }
    if abnormal <= INFLATION_DEGENERACY {
        return 1.0;
    }
    (numerator / (basis_size as f64 * abnormal)).max(1.0)
}

/// Second conditional maximization: `η_k = max{1, Σ t(1−s)·δ²(c_i) / (B Σ t(1−s))}`
/// where `δ²` is the Mahalanobis distance under the freshly updated `Σ_k`.
pub fn cm2_step(
    coeffs: &CoefficientMatrix,
    resp: &Responsibilities,
    model: &MixtureModel,
) -> Result<Vec<f64>> {
    check_shapes(coeffs, model.metric())?;
    check_resp(resp, coeffs.n_rows())?;
    let y = model.metric().whiten_rows(coeffs.matrix());
    Ok(model
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let m = Prepared::new(c, model.metric()).mahalanobis(&y);
            inflation_update(resp, k, &m, model.basis_size())
        })
        .collect())
}

/// MAP labels (lowest index wins ties) and outlier flags (`s ≤ 0.5` in the
/// assigned cluster).
pub fn map_classify(resp: &Responsibilities) -> (Vec<usize>, Vec<bool>) {
    let n = resp.t.nrows();
    let mut labels = Vec::with_capacity(n);
    let mut outliers = Vec::with_capacity(n);
    for i in 0..n {
        let row = resp.t.row(i);
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        labels.push(best);
        outliers.push(resp.s[(i, best)] <= 0.5);
    }
    (labels, outliers)
}

// ---------------------------------------------------------------------------
// the ECM loop

struct Step {
    model: MixtureModel,
    densities: Densities,
    loglik: f64,
}

fn cm_pass(
    coeffs: &DMatrix<f64>,
    y: &DMatrix<f64>,
    resp: &Responsibilities,
    inflation: &[f64],
    dims: &DimensionRule,
    metric: &CoefficientMetric,
    config: &EcmConfig,
) -> Result<Step> {
    let mut clusters = cm1_whitened(coeffs, y, resp, inflation, dims, metric)?;
    if !config.contamination {
        for c in &mut clusters {
            c.normal_proportion = 1.0;
            c.inflation = 1.0;
        }
    }
    let mahal: Vec<Vec<f64>> = clusters
        .iter()
        .map(|c| Prepared::new(c, metric).mahalanobis(y))
        .collect();
    if config.contamination {
        let b = metric.dim();
        for (k, c) in clusters.iter_mut().enumerate() {
            c.inflation = inflation_update(resp, k, &mahal[k], b).max(config.min_inflation);
        }
    }
    let model = MixtureModel::new(clusters, metric.clone())?;
    let densities = densities_with(y, &model, Some(&mahal))?;
    let loglik = densities.log_likelihood()?;
    Ok(Step {
        model,
        densities,
        loglik,
    })
}

/// Runs the ECM algorithm: one CM1/CM2 pass from the initial latent
/// variables, then E/CM1/CM2 iterations until the observed log-likelihood
/// changes by less than `config.tol` or `config.max_iter` iterations ran.
pub fn fit(
    coeffs: &CoefficientMatrix,
    metric: &CoefficientMetric,
    dims: &DimensionRule,
    init: &InitState,
    config: &EcmConfig,
) -> Result<FitResult> {
    check_shapes(coeffs, metric)?;
    let n = coeffs.n_rows();
    let k = init.n_clusters();
    if init.z.nrows() != n || init.v.shape() != init.z.shape() || init.inflation.len() != k {
        return Err(Error::Config(format!(
            "initial state of shape {:?} for {n} observations",
            init.z.shape()
        )));
    }
    if !(config.min_inflation >= 1.0) {
        return Err(Error::Config(format!(
            "minimum inflation {} below 1",
            config.min_inflation
        )));
    }
    let x = coeffs.matrix();
    let y = metric.whiten_rows(x);

    let initial = Responsibilities {
        t: init.z.clone(),
        s: if config.contamination {
            init.v.clone()
        } else {
            DMatrix::from_element(n, k, 1.0)
        },
    };
    let mut step = cm_pass(x, &y, &initial, &init.inflation, dims, metric, config)?;
    let mut trace = vec![step.loglik];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let mut resp = step.densities.responsibilities()?;
        if !config.contamination {
            resp.s.fill(1.0);
        }
        let inflation: Vec<f64> = step.model.clusters.iter().map(|c| c.inflation).collect();
        let next = cm_pass(x, &y, &resp, &inflation, dims, metric, config)?;
        iterations += 1;
        let delta = next.loglik - step.loglik;
        trace.push(next.loglik);
        step = next;
        if delta.abs() < config.tol {
            converged = true;
            break;
        }
    }

    let mut resp = step.densities.responsibilities()?;
    if !config.contamination {
        resp.s.fill(1.0);
    }
    let (labels, outliers) = map_classify(&resp);
    let model = step.model;
    let complexity = count_parameters(k, metric.dim(), &model.dims())?;
    let loglik = step.loglik;
    Ok(FitResult {
        bic: bic(loglik, complexity.total, n),
        aic: aic(loglik, complexity.total),
        model,
        resp,
        loglik_trace: trace,
        iterations,
        converged,
        labels,
        outliers,
        loglik,
        complexity,
    })
}
