//! Independent reference implementations used by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use cfunhddc::ecm::ClusterParams;
use cfunhddc::funbasis::{matrix_sqrt, CoefficientMetric};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Textbook multivariate normal log-density with a dense covariance.
pub fn dense_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let b = x.len() as f64;
    let chol = cov.clone().cholesky().expect("covariance must be SPD");
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (b * (2.0 * std::f64::consts::PI).ln() + log_det + diff.dot(&solved))
}

pub fn random_spd(b: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(b, b, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(b, b) * 0.5
}

/// Orthonormal `b × b` matrix from the QR factorization of a random matrix.
pub fn random_orthonormal(b: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(b, b, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// A random valid cluster of dimension `d` in `R^b`, plus the full orthonormal
/// frame its orientation was cut from.
pub fn random_cluster(b: usize, d: usize, rng: &mut impl Rng) -> (ClusterParams, DMatrix<f64>) {
    let q = random_orthonormal(b, rng);
    let noise = rng.random_range(0.05..1.0);
    let mut signal: Vec<f64> = (0..d)
        .map(|_| noise + rng.random_range(0.01..5.0))
        .collect();
    signal.sort_by(|x, y| y.total_cmp(x));
    let params = ClusterParams {
        proportion: 1.0,
        normal_proportion: rng.random_range(0.5..1.0),
        inflation: rng.random_range(1.0..20.0),
        mean: DVector::from_fn(b, |_, _| rng.random_range(-3.0..3.0)),
        orientation: q.columns(0, d).into_owned(),
        signal_variances: signal,
        noise_variance: noise,
    };
    (params, q)
}

/// `Σ = W^{-1/2} Q diag(a, b, …, b) Qᵀ W^{-1/2}` with the full frame `q`.
pub fn dense_covariance(
    params: &ClusterParams,
    q: &DMatrix<f64>,
    gram: &DMatrix<f64>,
) -> DMatrix<f64> {
    let b = q.nrows();
    let mut r = DMatrix::zeros(b, b);
    for l in 0..b {
        r[(l, l)] = params
            .signal_variances
            .get(l)
            .copied()
            .unwrap_or(params.noise_variance);
    }
    let inv_sqrt = matrix_sqrt(gram).unwrap().try_inverse().unwrap();
    let cov = &inv_sqrt * q * r * q.transpose() * &inv_sqrt;
    (&cov + cov.transpose()) * 0.5
}

pub fn metric_for(gram: &DMatrix<f64>) -> CoefficientMetric {
    CoefficientMetric::from_gram(gram).unwrap()
}

/// ARI straight from the definition: count agreeing and disagreeing pairs.
pub fn brute_force_ari(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len();
    if n <= 1 {
        return 1.0;
    }
    let (mut both, mut only_a, mut only_b, mut total) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// One weighted-Gaussian eigen step in whitened coordinates: weighted mean,
/// weighted scatter divided by the total weight, eigenvalues of
/// `W^{1/2} H W^{1/2}` sorted descending. Returns (mean, eigenvalues,
/// eigenvectors as columns in matching order).
pub fn plain_eigen_step(
    x: &DMatrix<f64>,
    weights: &[f64],
    gram: &DMatrix<f64>,
) -> (DVector<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, b) = x.shape();
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(b);
    for i in 0..n {
        mean += x.row(i).transpose() * weights[i];
    }
    mean /= total;
    let mut h = DMatrix::zeros(b, b);
    for i in 0..n {
        let r = x.row(i).transpose() - &mean;
        h += &r * r.transpose() * weights[i];
    }
    h /= total;
    let s = matrix_sqrt(gram).unwrap();
    let m = &s * h * &s;
    let eig = nalgebra::SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(b, b, |r, c| eig.eigenvectors[(r, order[c])]);
    (mean, values, vectors)
}

/// Plain Lloyd iterations from given centers (rows); returns (centers, labels).
pub fn lloyd(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    iters: usize,
) -> (DMatrix<f64>, Vec<usize>) {
    let (n, dim) = points.shape();
    let k = centers.nrows();
    let mut centers = centers.clone();
    let mut labels = vec![0; n];
    for _ in 0..=iters {
        for i in 0..n {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = (points.row(i) - centers.row(c)).norm_squared();
                if d < best.0 {
                    best = (d, c);
                }
            }
            labels[i] = best.1;
        }
        let mut next = DMatrix::zeros(k, dim);
        let mut counts = vec![0.0; k];
        for i in 0..n {
            let row = points.row(i).into_owned();
            let mut target = next.row_mut(labels[i]);
            target += row;
            counts[labels[i]] += 1.0;
        }
        for c in 0..k {
            if counts[c] > 0.0 {
                let mean = next.row(c) / counts[c];
                centers.row_mut(c).copy_from(&mean);
            }
        }
    }
    (centers, labels)
}
