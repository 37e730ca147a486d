//! Starting partitions for the ECM algorithm.
//!
//! Trimmed k-means drops the `⌈αn⌉` points farthest from their centers
//! before every center update, so a handful of abnormal curves cannot drag
//! the centers away. With `α = 0` it is plain Lloyd k-means.

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funbasis::CoefficientMatrix;

/// Initial normality weight given to the assigned cluster.
pub const INITIAL_NORMALITY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    Trimmed,
    Kmeans,
    Random,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trimmed" => Ok(InitMethod::Trimmed),
            "kmeans" => Ok(InitMethod::Kmeans),
            "random" => Ok(InitMethod::Random),
            other => Err(Error::Config(format!("unknown init method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub method: InitMethod,
    /// Fraction of points trimmed by the trimmed k-means.
    pub trim: f64,
    /// Number of restarts.
    pub nb_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            method: InitMethod::Trimmed,
            trim: 0.2,
            nb_init: 10,
            max_iter: 100,
            seed: 0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.trim) {
            return Err(Error::Config(format!(
                "trim fraction {} not in [0, 1)",
                self.trim
            )));
        }
        if self.nb_init == 0 {
            return Err(Error::Config("nb_init must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed of restart `restart`; restarts share nothing but the base seed.
    pub fn restart_seed(&self, restart: usize) -> u64 {
        // splitmix64 finalizer over (seed, restart)
        let mut z = self
            .seed
            .wrapping_add((restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn for_restart(&self, restart: usize) -> InitConfig {
        InitConfig {
            seed: self.restart_seed(restart),
            ..self.clone()
        }
    }
}

/// Latent variables and inflation factors the ECM starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitState {
    /// `n × K` one-hot cluster indicators.
    pub z: DMatrix<f64>,
    /// `n × K` normality weights.
    pub v: DMatrix<f64>,
    pub inflation: Vec<f64>,
}

impl InitState {
    /// Builds the state from hard labels in `0..k`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let n = labels.len();
        let mut z = DMatrix::zeros(n, k);
        let mut v = DMatrix::zeros(n, k);
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::Config(format!(
                    "label {label} out of range for K = {k}"
                )));
            }
            z[(i, label)] = 1.0;
            v[(i, label)] = INITIAL_NORMALITY;
        }
        Ok(InitState {
            z,
            v,
            inflation: vec![1.0; k],
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.z.ncols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.z
            .row_iter()
            .map(|row| row.iter().position(|x| *x == 1.0).unwrap_or(0))
            .collect()
    }
}

/// Outcome of a (trimmed) k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `K × dim` centers, one per row.
    pub centers: DMatrix<f64>,
    /// Nearest-center label of every point, trimmed points included.
    pub labels: Vec<usize>,
    pub trimmed: Vec<bool>,
    /// Trimmed within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn n_trimmed(&self) -> usize {
        self.trimmed.iter().filter(|t| **t).count()
    }

    /// Final trimmed within-cluster sum of squares.
    pub fn objective(&self) -> f64 {
        self.objective_trace
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
    }
}

/// Number of points trimmed for a fraction `alpha` of `n`.
pub fn trim_count(alpha: f64, n: usize) -> usize {
    // the small offset keeps products like 0.2 * 1005 from rounding up past an integer
    ((alpha * n as f64) - 1e-9).ceil().max(0.0) as usize
}

struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Points { data, n, dim }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center. The `n_trim` points currently
/// farthest from every center are never drawn, so isolated outliers do not
/// become seeds.
pub fn kmeans_pp_seeds(
    points: &DMatrix<f64>,
    k: usize,
    n_trim: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let pts = Points::from_matrix(points);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..pts.n));
    let mut best: Vec<f64> = (0..pts.n)
        .map(|i| sq_dist(pts.row(i), pts.row(chosen[0])))
        .collect();
    let mut order: Vec<usize> = (0..pts.n).collect();
    while chosen.len() < k {
        order.sort_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)));
        let eligible = &order[..pts.n - n_trim.min(pts.n - 1)];
        let total: f64 = eligible.iter().map(|&i| best[i]).sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = *eligible.last().unwrap();
            for &i in eligible {
                if target < best[i] {
                    pick = i;
                    break;
                }
                target -= best[i];
            }
            pick
        } else {
            eligible[rng.random_range(0..eligible.len())]
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(pts.row(i), pts.row(next)));
        }
    }
    chosen
}

/// Independent seedings tried by [`trimmed_kmeans`]; the lowest final trimmed
/// objective wins.
pub const KMEANS_STARTS: usize = 10;

/// Trimmed k-means: best of [`KMEANS_STARTS`] seeded runs.
pub fn trimmed_kmeans(
    points: &DMatrix<f64>,
    k: usize,
    alpha: f64,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult> {
    validate_kmeans(points, k, alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_trim = trim_count(alpha, points.nrows());
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_STARTS {
        let seeds = kmeans_pp_seeds(points, k, n_trim, &mut rng);
        let mut centers = DMatrix::zeros(k, points.ncols());
        for (c, &i) in seeds.iter().enumerate() {
            centers.row_mut(c).copy_from(&points.row(i));
        }
        let run = trimmed_kmeans_from(points, centers, alpha, max_iter)?;
        let better = best
            .as_ref()
            .is_none_or(|b| run.objective() < b.objective());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

fn validate_kmeans(points: &DMatrix<f64>, k: usize, alpha: f64) -> Result<()> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "trim fraction {alpha} not in [0, 1)"
        )));
    }
    if n < k + trim_count(alpha, n) {
        return Err(Error::Config(format!(
            "{n} points leave fewer than K = {k} untrimmed points at trim fraction {alpha}"
        )));
    }
    Ok(())
}

/// Trimmed k-means iterations from given initial centers (one per row).
pub fn trimmed_kmeans_from(
    points: &DMatrix<f64>,
    initial_centers: DMatrix<f64>,
    alpha: f64,
    max_iter: usize,
) -> Result<KMeansResult> {
    let k = initial_centers.nrows();
    validate_kmeans(points, k, alpha)?;
    let pts = Points::from_matrix(points);
    let dim = pts.dim;
    let n = pts.n;
    let n_trim = trim_count(alpha, n);
    let mut centers: Vec<f64> = Points::from_matrix(&initial_centers).data;

    let mut labels = vec![usize::MAX; n];
    let mut trimmed = vec![false; n];
    let mut dists = vec![0.0; n];
    let mut objective_trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // assignment and trimming with the current centers
        let mut changed = false;
        for i in 0..n {
            let x = pts.row(i);
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(x, &centers[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if labels[i] != best {
                changed = true;
                labels[i] = best;
            }
            dists[i] = best_d;
        }
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
        let mut new_trimmed = vec![false; n];
        for &i in &order[n - n_trim..] {
            new_trimmed[i] = true;
        }
        if new_trimmed != trimmed {
            changed = true;
            trimmed = new_trimmed;
        }
        objective_trace.push(order[..n - n_trim].iter().map(|&i| dists[i]).sum());

        if !changed && iterations > 0 {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        // center update from untrimmed members
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in (0..n).filter(|&i| !trimmed[i]) {
            let c = labels[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(pts.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s * inv;
                }
            } else {
                let far = order[..n - n_trim]
                    .iter()
                    .rev()
                    .copied()
                    .find(|&i| counts[labels[i]] > 1)
                    .unwrap_or(order[0]);
                warn!("k-means cluster {c} emptied; reseeding from point {far}");
                counts[labels[far]] -= 1;
                centers[c * dim..(c + 1) * dim].copy_from_slice(pts.row(far));
            }
        }
    }

    Ok(KMeansResult {
        centers: DMatrix::from_row_slice(k, dim, &centers),
        labels,
        trimmed,
        objective_trace,
        iterations,
        converged,
    })
}

const RANDOM_INIT_RETRIES: usize = 1000;

fn random_labels(n: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    for _ in 0..RANDOM_INIT_RETRIES {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        labels.iter().for_each(|&l| seen[l] = true);
        if seen.iter().all(|s| *s) {
            return Ok(labels);
        }
    }
    Err(Error::Config(format!(
        "random initialization left a cluster empty after {RANDOM_INIT_RETRIES} draws"
    )))
}

/// Initial `(z, v, η)` for `k` clusters using the configured method.
pub fn initialize(coeffs: &CoefficientMatrix, k: usize, config: &InitConfig) -> Result<InitState> {
    config.validate()?;
    let n = coeffs.n_rows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("K = {k} invalid for {n} curves")));
    }
    let labels = match config.method {
        InitMethod::Trimmed => {
            trimmed_kmeans(
                coeffs.matrix(),
                k,
                config.trim,
                config.seed,
                config.max_iter,
            )?
            .labels
        }
        InitMethod::Kmeans => {
            trimmed_kmeans(coeffs.matrix(), k, 0.0, config.seed, config.max_iter)?.labels
        }
        InitMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            random_labels(n, k, &mut rng)?
        }
    };
    InitState::from_labels(&labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DMatrix<f64> {
        let mut rows = Vec::new();
        for i in 0..10 {
            let dx = (i % 5) as f64 * 0.1;
            let dy = (i / 5) as f64 * 0.1;
            rows.extend([dx, dy]);
        }
        for i in 0..10 {
            let dx = (i % 5) as f64 * 0.1;
            let dy = (i / 5) as f64 * 0.1;
            rows.extend([10.0 + dx, 10.0 + dy]);
        }
        rows.extend([100.0, 100.0]);
        DMatrix::from_row_slice(21, 2, &rows)
    }

    #[test]
    fn far_point_is_trimmed_and_centers_are_cluster_means() {
        let points = toy();
        for seed in 0..20 {
            let res = trimmed_kmeans(&points, 2, 0.05, seed, 100).unwrap();
            assert_eq!(res.n_trimmed(), 2);
            assert!(res.trimmed[20]);
            // ⌈0.05 · 21⌉ = 2 trims: the outlier and one boundary point of a
            // tight cluster, so compare against the untrimmed means
            for c in 0..2 {
                let members: Vec<usize> = (0..21)
                    .filter(|&i| !res.trimmed[i] && res.labels[i] == c)
                    .collect();
                for col in 0..2 {
                    let mean = members.iter().map(|&i| points[(i, col)]).sum::<f64>()
                        / members.len() as f64;
                    assert!((res.centers[(c, col)] - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trim_count_semantics() {
        assert_eq!(trim_count(0.2, 1005), 201);
        assert_eq!(trim_count(0.0, 50), 0);
        assert_eq!(trim_count(0.05, 21), 2);
        assert_eq!(trim_count(0.05, 20), 1);
    }

    #[test]
    fn initial_state_contract() {
        let coeffs = CoefficientMatrix::from_matrix(toy()).unwrap();
        for method in [InitMethod::Trimmed, InitMethod::Kmeans, InitMethod::Random] {
            let cfg = InitConfig {
                method,
                seed: 4,
                trim: 0.05,
                ..Default::default()
            };
            let state = initialize(&coeffs, 2, &cfg).unwrap();
            assert_eq!(state.inflation, vec![1.0, 1.0]);
            for i in 0..21 {
                let row_sum: f64 = state.z.row(i).sum();
                assert_eq!(row_sum, 1.0);
                for k in 0..2 {
                    let expected = if state.z[(i, k)] == 1.0 { 0.99 } else { 0.0 };
                    assert_eq!(state.v[(i, k)], expected);
                }
            }
            assert_eq!(state, initialize(&coeffs, 2, &cfg).unwrap());
        }
    }

    #[test]
    fn random_init_fills_every_cluster() {
        let coeffs = CoefficientMatrix::from_matrix(toy()).unwrap();
        let cfg = InitConfig {
            method: InitMethod::Random,
            seed: 17,
            ..Default::default()
        };
        let state = initialize(&coeffs, 5, &cfg).unwrap();
        let labels = state.labels();
        for k in 0..5 {
            assert!(labels.contains(&k));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let coeffs = CoefficientMatrix::from_matrix(toy()).unwrap();
        let cfg = InitConfig::default();
        assert!(matches!(
            initialize(&coeffs, 22, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            initialize(&coeffs, 0, &cfg),
            Err(Error::Config(_))
        ));
        let bad = InitConfig {
            trim: 1.0,
            ..cfg.clone()
        };
        assert!(initialize(&coeffs, 2, &bad).is_err());
        let bad = InitConfig { nb_init: 0, ..cfg };
        assert!(initialize(&coeffs, 2, &bad).is_err());
    }

    #[test]
    fn restart_seeds_differ() {
        let cfg = InitConfig::default();
        let seeds: std::collections::HashSet<u64> = (0..50).map(|r| cfg.restart_seed(r)).collect();
        assert_eq!(seeds.len(), 50);
    }
}
