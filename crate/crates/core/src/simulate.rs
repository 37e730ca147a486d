//! Synthetic bivariate benchmark curves: four classes of shifted triangular
//! waveforms, plus two kinds of abnormal curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funbasis::{Curve, CurveSet, Domain, Observations};

/// Triangular waveforms used to build the classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    H1,
    H2,
    H3,
}

pub fn waveform(kind: Waveform, t: f64) -> f64 {
    match kind {
        Waveform::H1 => (6.0 - (t - 7.0).abs()).max(0.0),
        Waveform::H2 => (6.0 - (t - 15.0).abs()).max(0.0),
        Waveform::H3 => {
            let shifted = if t < 7.0 { t } else { 0.0 };
            (6.0 - (shifted - 7.0).abs()).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Both components of the abnormal curves are abnormal.
    Dataset1,
    /// Only one component of the abnormal curves is abnormal.
    Dataset2,
    /// Normal curves only.
    NormalOnly,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset1" => Ok(DatasetKind::Dataset1),
            "dataset2" => Ok(DatasetKind::Dataset2),
            "normal_only" | "normal-only" | "normal" => Ok(DatasetKind::NormalOnly),
            other => Err(Error::SimSpec(format!("unknown dataset kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierType {
    None,
    Outlier1,
    Outlier2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: DatasetKind,
    pub per_class: usize,
    pub outlier1: usize,
    pub outlier2: usize,
    /// Standard deviation of the normal-curve noise.
    pub noise_sd: f64,
    pub grid_size: usize,
    pub domain: Domain,
    pub seed: u64,
    /// Replaces every uniform draw by this value; for exact-shape tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_uniform: Option<f64>,
}

impl SimSpec {
    pub fn new(kind: DatasetKind, seed: u64) -> Self {
        let (outlier1, outlier2) = match kind {
            DatasetKind::NormalOnly => (0, 0),
            _ => (3, 2),
        };
        SimSpec {
            kind,
            per_class: 250,
            outlier1,
            outlier2,
            noise_sd: 0.5,
            grid_size: 101,
            domain: Domain {
                start: 1.0,
                end: 21.0,
            },
            seed,
            fixed_uniform: None,
        }
    }

    pub fn n_normal(&self) -> usize {
        4 * self.per_class
    }

    pub fn n_total(&self) -> usize {
        self.n_normal() + self.outlier1 + self.outlier2
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::SimSpec(format!(
                "noise sd {} must be >= 0",
                self.noise_sd
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::SimSpec("grid size must be at least 2".into()));
        }
        if self.n_total() == 0 {
            return Err(Error::SimSpec("spec produces no curves".into()));
        }
        if self.kind == DatasetKind::NormalOnly && self.outlier1 + self.outlier2 > 0 {
            return Err(Error::SimSpec("normal-only dataset with outliers".into()));
        }
        Domain::new(self.domain.start, self.domain.end)?;
        Ok(())
    }
}

/// Simulated curves with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCurves {
    pub curves: CurveSet,
    /// Class in `1..=4` for normal curves, `0` for outliers.
    pub classes: Vec<u8>,
    pub outlier_flags: Vec<bool>,
    pub outlier_types: Vec<OutlierType>,
}

impl LabeledCurves {
    pub fn n_outliers(&self) -> usize {
        self.outlier_flags.iter().filter(|f| **f).count()
    }

    /// The curves without outliers, as a normal-only data set.
    pub fn normals_only(&self) -> Result<LabeledCurves> {
        let keep: Vec<usize> = (0..self.classes.len())
            .filter(|&i| !self.outlier_flags[i])
            .collect();
        let curves = self.curves.subset(|i| !self.outlier_flags[i])?;
        Ok(LabeledCurves {
            curves,
            classes: keep.iter().map(|&i| self.classes[i]).collect(),
            outlier_flags: vec![false; keep.len()],
            outlier_types: vec![OutlierType::None; keep.len()],
        })
    }
}

struct Draws {
    rng: ChaCha8Rng,
    fixed_uniform: Option<f64>,
}

impl Draws {
    fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        self.fixed_uniform.unwrap_or(u)
    }

    fn noise(&mut self, sd: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        sd * z
    }
}

/// Generates the benchmark described by `spec`. Curves are ordered by class
/// (1 to 4), then outlier1, then outlier2.
pub fn simulate(spec: &SimSpec) -> Result<LabeledCurves> {
    use Waveform::*;
    spec.validate()?;
    let grid = spec.domain.grid(spec.grid_size);
    let mut draws = Draws {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        fixed_uniform: spec.fixed_uniform,
    };
    let sd = spec.noise_sd;
    let half_pi = std::f64::consts::FRAC_PI_2;

    let mut curves = Vec::with_capacity(spec.n_total());
    let mut classes = Vec::with_capacity(spec.n_total());
    let mut types = Vec::with_capacity(spec.n_total());

    let push = |curves: &mut Vec<Curve>, x1: Vec<f64>, x2: Vec<f64>| {
        let id = format!("c{:05}", curves.len() + 1);
        curves.push(Curve {
            id,
            components: vec![
                Observations::new(grid.clone(), x1),
                Observations::new(grid.clone(), x2),
            ],
        });
    };

    // (first waveform, weight 1 - U or 0.5 - U), per component
    let class_shapes: [[(Waveform, f64); 2]; 4] = [
        [(H1, 1.0), (H1, 0.5)],
        [(H2, 1.0), (H2, 0.5)],
        [(H1, 0.5), (H2, 1.0)],
        [(H2, 0.5), (H1, 1.0)],
    ];

    for (class, shape) in class_shapes.iter().enumerate() {
        for _ in 0..spec.per_class {
            let u = draws.uniform();
            let mut comps = shape.iter().map(|&(h, w)| {
                grid.iter()
                    .map(|&t| u + (w - u) * waveform(h, t) + draws.noise(sd))
                    .collect::<Vec<_>>()
            });
            let x1 = comps.next().unwrap();
            let x2 = comps.next().unwrap();
            push(&mut curves, x1, x2);
            classes.push(class as u8 + 1);
            types.push(OutlierType::None);
        }
    }

    for _ in 0..spec.outlier1 {
        let u = draws.uniform();
        let (x1, x2): (Vec<f64>, Vec<f64>) = match spec.kind {
            DatasetKind::Dataset1 => grid
                .iter()
                .map(|&t| {
                    let a = (0.5 - u) * waveform(H1, t) + (half_pi * t).sin() + draws.noise(1.0);
                    let b = (1.0 - u) * waveform(H2, t) + (half_pi * t).sin() + draws.noise(1.0);
                    (a, b)
                })
                .unzip(),
            _ => grid
                .iter()
                .map(|&t| {
                    let a = u + (0.5 - u) * waveform(H1, t) + draws.noise(sd);
                    let b = (1.0 - u) * waveform(H2, t) + (half_pi * t).sin() + draws.noise(1.0);
                    (a, b)
                })
                .unzip(),
        };
        push(&mut curves, x1, x2);
        classes.push(0);
        types.push(OutlierType::Outlier1);
    }

    for _ in 0..spec.outlier2 {
        let u = draws.uniform();
        let (x1, x2): (Vec<f64>, Vec<f64>) = match spec.kind {
            DatasetKind::Dataset1 => grid
                .iter()
                .map(|&t| {
                    let a = u + (1.0 - u) * waveform(H3, t) + draws.noise(sd);
                    let b = u + (0.5 - u) * waveform(H3, t) + draws.noise(sd);
                    (a, b)
                })
                .unzip(),
            _ => grid
                .iter()
                .map(|&t| {
                    let a = u + (1.0 - u) * waveform(H3, t) + draws.noise(sd);
                    let b = u + (0.5 - u) * waveform(H1, t) + draws.noise(sd);
                    (a, b)
                })
                .unzip(),
        };
        push(&mut curves, x1, x2);
        classes.push(0);
        types.push(OutlierType::Outlier2);
    }

    let flags = types.iter().map(|t| *t != OutlierType::None).collect();
    Ok(LabeledCurves {
        curves: CurveSet::new(curves, spec.domain)?,
        classes,
        outlier_flags: flags,
        outlier_types: types,
    })
}

/// Specs with growing contamination: for each level (outliers per thousand
/// normal curves) the outlier2 count is raised while outlier1 stays fixed.
/// Level 0 yields a normal-only set.
pub fn contamination_specs(base: &SimSpec, per_mille_levels: &[u32]) -> Result<Vec<SimSpec>> {
    let normals = base.n_normal();
    per_mille_levels
        .iter()
        .map(|&level| {
            let scaled = level as usize * normals;
            if !scaled.is_multiple_of(1000) {
                return Err(Error::SimSpec(format!(
                    "{level} per mille of {normals} normal curves is not a whole number of outliers"
                )));
            }
            let total = scaled / 1000;
            let mut spec = base.clone();
            if total == 0 {
                spec.kind = DatasetKind::NormalOnly;
                spec.outlier1 = 0;
                spec.outlier2 = 0;
            } else {
                if base.kind == DatasetKind::NormalOnly {
                    return Err(Error::SimSpec("contamination sweep needs an outlier model".into()));
                }
                if total < base.outlier1 {
                    return Err(Error::SimSpec(format!(
                        "{level} per mille gives {total} outliers, fewer than the {} outlier1 curves",
                        base.outlier1
                    )));
                }
                spec.outlier2 = total - base.outlier1;
            }
            Ok(spec)
        })
        .collect()
}

pub fn contamination_sweep(base: &SimSpec, per_mille_levels: &[u32]) -> Result<Vec<LabeledCurves>> {
    contamination_specs(base, per_mille_levels)?
        .iter()
        .map(simulate)
        .collect()
}

/// One data set per noise variance of the normal curves.
pub fn noise_sweep(base: &SimSpec, variances: &[f64]) -> Result<Vec<LabeledCurves>> {
    variances
        .iter()
        .map(|&var| {
            if !(var >= 0.0) {
                return Err(Error::SimSpec(format!("negative noise variance {var}")));
            }
            let mut spec = base.clone();
            spec.noise_sd = var.sqrt();
            simulate(&spec)
        })
        .collect()
}
