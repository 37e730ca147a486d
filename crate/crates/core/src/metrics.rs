//! Adjusted Rand Index and outlier-detection confusion matrices.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::ecm::FitResult;
use crate::error::{Error, Result};
use crate::simulate::LabeledCurves;

fn pairs(m: u64) -> i128 {
    let m = m as i128;
    m * (m - 1) / 2
}

/// Hubert–Arabie adjusted Rand index between two labelings of the same points.
pub fn ari<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "partitions of different lengths ({} and {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    if n <= 1 {
        return Ok(1.0);
    }
    let mut joint: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: i128 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: i128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // (index − E)/(max − E) scaled by 2·C(n, 2) keeps everything integral
    let numerator = 2 * (total * index - sum_a * sum_b);
    let denominator = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    Ok(ratio(numerator, denominator))
}

fn ratio(num: i128, den: i128) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// ARI between predicted clusters and true classes, over the truly normal curves.
pub fn ari_clustering(labels: &[usize], truth: &LabeledCurves) -> Result<f64> {
    check_len(labels.len(), truth)?;
    let (pred, true_classes): (Vec<usize>, Vec<u8>) = labels
        .iter()
        .zip(&truth.classes)
        .zip(&truth.outlier_flags)
        .filter(|(_, out)| !**out)
        .map(|((l, c), _)| (*l, *c))
        .unzip();
    if pred.is_empty() {
        return Err(Error::Metric(
            "no normal curves to score the clustering on".into(),
        ));
    }
    ari(&pred, &true_classes)
}

/// ARI between predicted and true outlier flags, over all curves.
pub fn ari_outlier(outliers: &[bool], truth: &LabeledCurves) -> Result<f64> {
    check_len(outliers.len(), truth)?;
    ari(outliers, &truth.outlier_flags)
}

fn check_len(n: usize, truth: &LabeledCurves) -> Result<()> {
    if n != truth.outlier_flags.len() {
        return Err(Error::Input(format!(
            "{n} predictions for {} reference curves",
            truth.outlier_flags.len()
        )));
    }
    Ok(())
}

/// Rows are the reference (normal, outlier), columns the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_positive: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }

    pub fn as_rows(&self) -> [[u64; 2]; 2] {
        [
            [self.true_negative, self.false_positive],
            [self.false_negative, self.true_positive],
        ]
    }
}

pub fn confusion(predicted: &[bool], reference: &[bool]) -> Result<ConfusionMatrix> {
    if predicted.len() != reference.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} reference flags",
            predicted.len(),
            reference.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &r) in predicted.iter().zip(reference) {
        match (r, p) {
            (false, false) => m.true_negative += 1,
            (false, true) => m.false_positive += 1,
            (true, false) => m.false_negative += 1,
            (true, true) => m.true_positive += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ari_c: f64,
    pub ari_o: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(result: &FitResult, truth: &LabeledCurves) -> Result<Evaluation> {
    Ok(Evaluation {
        ari_c: ari_clustering(&result.labels, truth)?,
        ari_o: ari_outlier(&result.outliers, truth)?,
        confusion: confusion(&result.outliers, &truth.outlier_flags)?,
    })
}
