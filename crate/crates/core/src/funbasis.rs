//! Functional reconstruction: clamped B-spline bases, least-squares smoothing
//! of discretely observed curves, and the Gram matrix `W` of basis inner
//! products together with its symmetric square root.
//!
//! Coefficients of a p-variate curve are stored as one row, the blocks of the
//! p components concatenated in order. `W` is block diagonal accordingly.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[start, end]` shared by all curves of a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub start: f64,
    pub end: f64,
}

impl Domain {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(Error::InvalidDomain { start, end });
        }
        Ok(Domain { start, end })
    }

    pub fn unit() -> Self {
        Domain {
            start: 0.0,
            end: 1.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    /// `n` equally spaced points covering the domain, both ends included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.start],
            _ => {
                let last = (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            self.end
                        } else {
                            self.start + self.length() * i as f64 / last
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Observations of one component of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Observations {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        Observations { times, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One multivariate curve: an identifier and one observation list per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    pub components: Vec<Observations>,
}

/// `n` discretely observed p-variate curves over a common domain. Each curve
/// may have its own time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    curves: Vec<Curve>,
    n_components: usize,
    domain: Domain,
}

impl CurveSet {
    pub fn new(curves: Vec<Curve>, domain: Domain) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidCurves("curve set is empty".into()))?;
        let p = first.components.len();
        if p == 0 {
            return Err(Error::InvalidCurves(format!(
                "curve `{}` has no components",
                first.id
            )));
        }
        for curve in &curves {
            if curve.components.len() != p {
                return Err(Error::InvalidCurves(format!(
                    "curve `{}` has {} components, expected {p}",
                    curve.id,
                    curve.components.len()
                )));
            }
            for (j, obs) in curve.components.iter().enumerate() {
                if obs.times.len() != obs.values.len() {
                    return Err(Error::InvalidCurves(format!(
                        "curve `{}` component {}: {} times but {} values",
                        curve.id,
                        j + 1,
                        obs.times.len(),
                        obs.values.len()
                    )));
                }
                if obs.len() < 2 {
                    return Err(Error::InvalidCurves(format!(
                        "curve `{}` component {} has fewer than 2 observations",
                        curve.id,
                        j + 1
                    )));
                }
                if let Some(t) = obs.times.iter().find(|t| !domain.contains(**t)) {
                    return Err(Error::InvalidCurves(format!(
                        "curve `{}` component {}: time {t} outside [{}, {}]",
                        curve.id,
                        j + 1,
                        domain.start,
                        domain.end
                    )));
                }
                if obs.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidCurves(format!(
                        "curve `{}` component {} has non-finite values",
                        curve.id,
                        j + 1
                    )));
                }
            }
        }
        Ok(CurveSet {
            curves,
            n_components: p,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn into_curves(self) -> Vec<Curve> {
        self.curves
    }

    /// Keeps the curves whose index satisfies `keep`.
    pub fn subset(&self, mut keep: impl FnMut(usize) -> bool) -> Result<Self> {
        let curves = self
            .curves
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, c)| c.clone())
            .collect();
        CurveSet::new(curves, self.domain)
    }
}

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    size: usize,
    degree: usize,
    knots: Vec<f64>,
    domain: Domain,
}

impl SplineBasis {
    pub fn new(size: usize, degree: usize, domain: Domain) -> Result<Self> {
        if degree > 15 {
            return Err(Error::InvalidBasis(format!("degree {degree} above 15")));
        }
        if size < degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "{size} basis functions cannot carry degree {degree} (need at least {})",
                degree + 1
            )));
        }
        let domain = Domain::new(domain.start, domain.end)?;
        let segments = size - degree;
        let mut knots = Vec::with_capacity(size + degree + 1);
        knots.extend(std::iter::repeat_n(domain.start, degree + 1));
        for i in 1..segments {
            knots.push(domain.start + domain.length() * i as f64 / segments as f64);
        }
        knots.extend(std::iter::repeat_n(domain.end, degree + 1));
        Ok(SplineBasis {
            size,
            degree,
            knots,
            domain,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Index of the knot span containing `t`; `t` is clamped to the domain and
    /// the right end belongs to the last non-empty span.
    fn span(&self, t: f64) -> usize {
        let p = self.degree;
        let n = self.size;
        if t >= self.knots[n] {
            return n - 1;
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut low, mut high) = (p, n);
        let mut mid = (low + high) / 2;
        while t < self.knots[mid] || t >= self.knots[mid + 1] {
            if t < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        mid
    }

    /// Writes the `degree + 1` basis functions that are non-zero at `t` into
    /// `out` and returns the index of the first one.
    pub fn eval_nonzero(&self, t: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        debug_assert!(out.len() > p);
        let t = t.clamp(self.domain.start, self.domain.end);
        let span = self.span(t);
        // degree is capped at 15 when the basis is built
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        span - p
    }

    /// All basis functions evaluated at `t`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(t, &mut local);
        let mut all = vec![0.0; self.size];
        all[first..first + local.len()].copy_from_slice(&local);
        all
    }

    /// `len(times) × size` design matrix.
    pub fn design_matrix(&self, times: &[f64]) -> DMatrix<f64> {
        let mut design = DMatrix::zeros(times.len(), self.size);
        let mut local = vec![0.0; self.degree + 1];
        for (row, &t) in times.iter().enumerate() {
            let first = self.eval_nonzero(t, &mut local);
            for (r, v) in local.iter().enumerate() {
                design[(row, first + r)] = *v;
            }
        }
        design
    }

    /// Gram matrix `∫ φ_b φ_l` by Gauss–Legendre quadrature with `degree + 1`
    /// nodes per knot span, exact for the piecewise polynomial products.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let p = self.degree;
        let (nodes, weights) = gauss_legendre(p + 1);
        let mut gram: DMatrix<f64> = DMatrix::zeros(self.size, self.size);
        let mut local = vec![0.0; p + 1];
        for span in p..self.size {
            let (lo, hi) = (self.knots[span], self.knots[span + 1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let first = self.eval_nonzero(t, &mut local);
                for r in 0..=p {
                    for s in 0..=p {
                        gram[(first + r, first + s)] += half * w * local[r] * local[s];
                    }
                }
            }
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Gram matrix entry".into()));
        }
        Ok(gram)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn_1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn_1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Symmetric square root of an SPD matrix and the log-determinant of the
/// matrix itself, both from one symmetric eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMetric {
    sqrt: DMatrix<f64>,
    log_det: f64,
}

impl CoefficientMetric {
    pub fn from_gram(gram: &DMatrix<f64>) -> Result<Self> {
        let (sqrt, log_det) = sqrt_with_log_det(gram)?;
        Ok(CoefficientMetric { sqrt, log_det })
    }

    /// Euclidean metric on `dim` coefficients (`W = I`).
    pub fn identity(dim: usize) -> Self {
        CoefficientMetric {
            sqrt: DMatrix::identity(dim, dim),
            log_det: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sqrt.nrows()
    }

    /// `W^{1/2}`.
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    /// `log |W|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Rows `c_i` mapped to `W^{1/2} c_i` (as rows).
    pub fn whiten_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        rows * &self.sqrt
    }

    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.sqrt * v
    }
}

fn sqrt_with_log_det(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !m.is_square() {
        return Err(Error::Numeric(format!(
            "square root of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * m.abs().max().max(1.0) {
        return Err(Error::Numeric(format!(
            "square root of a non-symmetric matrix (asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(f64::sqrt);
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&roots) * q.transpose();
    let root = (&root + root.transpose()) * 0.5;
    let log_det = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    Ok((root, log_det))
}

/// Symmetric square root `S` with `S·S = M` of a symmetric positive-definite matrix.
pub fn matrix_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sqrt_with_log_det(m).map(|(root, _)| root)
}

/// Block-diagonal Gram matrix of a list of component bases.
pub fn gram_matrix(components: &[SplineBasis]) -> Result<DMatrix<f64>> {
    let total = components.iter().map(SplineBasis::size).sum();
    let mut gram = DMatrix::zeros(total, total);
    let mut offset = 0;
    for basis in components {
        let block = basis.gram()?;
        gram.view_mut((offset, offset), (basis.size(), basis.size()))
            .copy_from(&block);
        offset += basis.size();
    }
    Ok(gram)
}

/// Identifies a basis configuration, so coefficient matrices from different
/// bases are never mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisKey {
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub domain: Domain,
}

/// Per-component B-spline bases with the Gram matrix and its square root.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    components: Vec<SplineBasis>,
    gram: DMatrix<f64>,
    metric: CoefficientMetric,
}

/// Builds clamped uniform B-spline bases for each component, plus `W` and `W^{1/2}`.
pub fn build_bspline_basis(sizes: &[usize], degree: usize, domain: Domain) -> Result<BasisSystem> {
    if sizes.is_empty() {
        return Err(Error::InvalidBasis("no components".into()));
    }
    let domain = Domain::new(domain.start, domain.end)?;
    let components = sizes
        .iter()
        .map(|&b| SplineBasis::new(b, degree, domain))
        .collect::<Result<Vec<_>>>()?;
    let gram = gram_matrix(&components)?;
    let metric = CoefficientMetric::from_gram(&gram)?;
    Ok(BasisSystem {
        components,
        gram,
        metric,
    })
}

impl BasisSystem {
    pub fn components(&self) -> &[SplineBasis] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Total number of basis functions `B`.
    pub fn size(&self) -> usize {
        self.gram.nrows()
    }

    pub fn degree(&self) -> usize {
        self.components[0].degree()
    }

    pub fn domain(&self) -> Domain {
        self.components[0].domain()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_sqrt(&self) -> &DMatrix<f64> {
        self.metric.sqrt()
    }

    pub fn metric(&self) -> &CoefficientMetric {
        &self.metric
    }

    pub fn key(&self) -> BasisKey {
        BasisKey {
            sizes: self.components.iter().map(SplineBasis::size).collect(),
            degree: self.degree(),
            domain: self.domain(),
        }
    }

    /// Column offset of component `j` inside a coefficient row.
    pub fn offset(&self, component: usize) -> usize {
        self.components[..component]
            .iter()
            .map(SplineBasis::size)
            .sum()
    }

    /// Evaluates component `component` of the curve with coefficient row `coeffs` at `times`.
    pub fn evaluate(&self, coeffs: &[f64], component: usize, times: &[f64]) -> Vec<f64> {
        let basis = &self.components[component];
        let offset = self.offset(component);
        let block = &coeffs[offset..offset + basis.size()];
        let mut local = vec![0.0; basis.degree() + 1];
        times
            .iter()
            .map(|&t| {
                let first = basis.eval_nonzero(t, &mut local);
                local
                    .iter()
                    .zip(&block[first..])
                    .map(|(phi, c)| phi * c)
                    .sum()
            })
            .collect()
    }
}

/// `n × B` basis-expansion coefficients, one curve per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    data: DMatrix<f64>,
    key: Option<BasisKey>,
}

impl CoefficientMatrix {
    /// Wraps raw coefficients that are not tied to a particular basis.
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite coefficient".into()));
        }
        Ok(CoefficientMatrix { data, key: None })
    }

    pub fn with_basis(data: DMatrix<f64>, basis: &BasisSystem) -> Result<Self> {
        if data.ncols() != basis.size() {
            return Err(Error::InvalidBasis(format!(
                "{} coefficient columns for a basis of size {}",
                data.ncols(),
                basis.size()
            )));
        }
        let mut m = Self::from_matrix(data)?;
        m.key = Some(basis.key());
        Ok(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn basis_key(&self) -> Option<&BasisKey> {
        self.key.as_ref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }
}

/// Least-squares projector `(ΦᵀΦ)⁻¹Φᵀ` for one time grid, via thin QR.
fn projector(basis: &SplineBasis, times: &[f64]) -> std::result::Result<DMatrix<f64>, String> {
    if times.len() < basis.size() {
        return Err(format!(
            "{} observations for {} basis functions",
            times.len(),
            basis.size()
        ));
    }
    let design = basis.design_matrix(times);
    let qr = design.qr();
    let r = qr.r();
    let diag_max = r.diagonal().abs().max();
    let diag_min = r.diagonal().abs().min();
    if !(diag_min > 1e-10 * diag_max) {
        return Err(
            "rank-deficient design (too few distinct time points in some knot span)".into(),
        );
    }
    let qt = qr.q().transpose();
    r.solve_upper_triangular(&qt)
        .ok_or_else(|| "singular triangular factor".to_string())
}

/// Ordinary least-squares fit of every curve component onto its basis.
pub fn smooth_curves(curves: &CurveSet, basis: &BasisSystem) -> Result<CoefficientMatrix> {
    if curves.n_components() != basis.n_components() {
        return Err(Error::InvalidBasis(format!(
            "curves have {} components, basis has {}",
            curves.n_components(),
            basis.n_components()
        )));
    }
    let mut data = DMatrix::zeros(curves.len(), basis.size());
    // grids are usually shared between curves; factor each distinct one once
    let mut cache: HashMap<(usize, Vec<u64>), DMatrix<f64>> = HashMap::new();
    for (i, curve) in curves.curves().iter().enumerate() {
        for (j, obs) in curve.components.iter().enumerate() {
            let component_basis = &basis.components()[j];
            let key = (j, obs.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
            if !cache.contains_key(&key) {
                let proj =
                    projector(component_basis, &obs.times).map_err(|reason| Error::Smoothing {
                        curve: curve.id.clone(),
                        component: j + 1,
                        reason,
                    })?;
                if cache.len() > 64 {
                    cache.clear();
                }
                cache.insert(key.clone(), proj);
            }
            let proj = &cache[&key];
            let values = DVector::from_column_slice(&obs.values);
            let coef = proj * values;
            let offset = basis.offset(j);
            for (b, c) in coef.iter().enumerate() {
                data[(i, offset + b)] = *c;
            }
        }
    }
    CoefficientMatrix::with_basis(data, basis)
}
