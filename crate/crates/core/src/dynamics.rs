//! Label-free training-dynamics signals: norm-ranked gradient sampling, the
//! cohesion and divergence of gradient sets, plus the label-based telemetry
//! (AUC, class loss means) used only for evaluation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EvalBatch, INLIER, OUTLIER};
use crate::error::{Error, Result};
use crate::linalg::{angle_between, norm, sum_vectors, GradientVector};
use crate::model::ModelParams;

/// Gradients of selected evaluation-batch rows, paired with their batch positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    vectors: Vec<GradientVector>,
    source_indices: Vec<usize>,
}

impl GradientSet {
    pub fn new(vectors: Vec<GradientVector>, source_indices: Vec<usize>) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty("gradient set"))?;
        if vectors.len() != source_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                got: source_indices.len(),
            });
        }
        let dim = first.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        Ok(Self {
            vectors,
            source_indices,
        })
    }

    /// Set without meaningful source indices (positions `0..n`).
    pub fn from_vectors(vectors: Vec<GradientVector>) -> Result<Self> {
        let idx = (0..vectors.len()).collect();
        Self::new(vectors, idx)
    }

    pub fn vectors(&self) -> &[GradientVector] {
        &self.vectors
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn sum(&self) -> GradientVector {
        sum_vectors(&self.vectors).expect("non-empty, equal-dimension set")
    }

    /// Sum of the member norms.
    pub fn total_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(v).unwrap_or(0.0)).sum()
    }
}

/// Positions of the `k` largest and `k` smallest values, in ascending value
/// order. Ties keep the lower position first.
pub fn select_by_norm(norms: &[f64], k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = norms.len();
    if k == 0 || 2 * k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={} for a batch of {n}",
            n / 2
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let last = order[..k].to_vec();
    let top = order[n - k..].to_vec();
    Ok((top, last))
}

/// Splits the evaluation batch into the `k` largest-gradient-norm samples
/// (`top`, outlier-like) and the `k` smallest (`last`, inlier-like).
pub fn grad_sample(p: &ModelParams, batch: &EvalBatch, k: usize) -> Result<(GradientSet, GradientSet)> {
    let grads = p.gradients(batch.x())?;
    let norms = grads.iter().map(|g| norm(g)).collect::<Result<Vec<_>>>()?;
    let (top, last) = select_by_norm(&norms, k)?;
    let pick = |idx: Vec<usize>| {
        let vectors = idx.iter().map(|&i| grads[i].clone()).collect();
        GradientSet::new(vectors, idx)
    };
    Ok((pick(top)?, pick(last)?))
}

/// `‖Σ g‖ / Σ ‖g‖`, in `[0, 1]`; an all-zero set has cohesion 0.
pub fn cohesion(g: &GradientSet) -> f64 {
    let total = g.total_norm();
    if total == 0.0 {
        return 0.0;
    }
    let summed = norm(&g.sum()).unwrap_or(0.0);
    (summed / total).clamp(0.0, 1.0)
}

/// Angle between the summed gradients of two sets.
pub fn divergence(g1: &GradientSet, g2: &GradientSet) -> Result<f64> {
    angle_between(&g1.sum(), &g2.sum())
}

/// How exact score ties between an inlier and an outlier are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Only `s_in < s_out` counts.
    #[default]
    Strict,
    /// Ties count one half.
    Half,
}

impl std::str::FromStr for TieMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(TieMode::Strict),
            "half" => Ok(TieMode::Half),
            _ => Err(Error::InvalidArgument(format!("unknown tie mode {s:?}"))),
        }
    }
}

/// Fraction of (inlier, outlier) pairs ranked correctly, via one sort.
pub fn auc(scores: &[f64], labels: &[u8], ties: TieMode) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auc scores"));
    }
    let n_out = labels.iter().filter(|&&l| l == OUTLIER).count() as u64;
    let n_in = labels.iter().filter(|&&l| l == INLIER).count() as u64;
    if n_out == 0 || n_in == 0 || n_in + n_out != labels.len() as u64 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Count in half-units so both tie modes stay in exact integer arithmetic.
    let mut inliers_below = 0u64;
    let mut half_units = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut grp_in, mut grp_out) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == OUTLIER {
                grp_out += 1;
            } else {
                grp_in += 1;
            }
            j += 1;
        }
        half_units += 2 * grp_out * inliers_below;
        if ties == TieMode::Half {
            half_units += grp_out * grp_in;
        }
        inliers_below += grp_in;
        i = j;
    }
    Ok(half_units as f64 / 2.0 / (n_in * n_out) as f64)
}

/// Mean per-sample loss of the inliers and of the outliers.
pub fn class_loss_means(p: &ModelParams, ds: &Dataset) -> Result<(f64, f64)> {
    let labels = ds.labels().ok_or(Error::LabelsRequired("class loss means"))?;
    let scores = p.score(ds.training_view())?;
    let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (s, &l) in scores.iter().zip(labels) {
        if l == OUTLIER {
            sum_out += s;
            n_out += 1;
        } else {
            sum_in += s;
            n_in += 1;
        }
    }
    if n_in == 0 || n_out == 0 {
        return Err(Error::SingleClass);
    }
    Ok((sum_in / n_in as f64, sum_out / n_out as f64))
}

/// One telemetry row, written on every metric epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batch_loss: f64,
    pub c_top: f64,
    pub c_last: f64,
    pub c_delta: f64,
    pub d: f64,
    pub auc: Option<f64>,
    pub mean_inlier_loss: Option<f64>,
    pub mean_outlier_loss: Option<f64>,
}

pub const TELEMETRY_HEADER: &str =
    "epoch,batch_loss,C_top,C_last,C_delta,D,auc,mean_inlier_loss,mean_outlier_loss";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.batch_loss,
            self.c_top,
            self.c_last,
            self.c_delta,
            self.d,
            opt(self.auc),
            opt(self.mean_inlier_loss),
            opt(self.mean_outlier_loss)
        )
    }
}

pub fn write_telemetry_csv<W: Write>(mut out: W, records: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "{TELEMETRY_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
