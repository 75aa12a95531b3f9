//! Empirical checks of the inlier-priority result.
//!
//! A [`DynamicsProbe`] snapshots the class-summed gradients at one set of
//! parameters, takes one descent step along their sum and measures how much
//! faster the inlier loss fell than the outlier loss. The sufficient condition
//! says: whenever `r_t > threshold_mean_gap(cos θ_t, R)` and the step decreases
//! both class losses, the per-sample gap `delta_mean` is positive.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, INLIER, OUTLIER};
use crate::dynamics::{cohesion, GradientSet};
use crate::error::{Error, Result};
use crate::hyper::Hyperparameters;
use crate::linalg::{angle_between, norm, GradientVector, Mat64};
use crate::model::{Architecture, ModelParams};
use crate::rng::Rng;

/// Largest number of step halvings tried before giving up on a probe.
pub const MAX_HALVINGS: u32 = 40;

/// `cR + sqrt(c²R² + 2R + 1)`.
pub fn threshold_mean_gap(cos_theta: f64, big_r: f64) -> f64 {
    let cr = cos_theta * big_r;
    cr + (cr * cr + 2.0 * big_r + 1.0).sqrt()
}

/// `sqrt(c² + 3) + c`.
pub fn threshold_sum_gap(cos_theta: f64) -> f64 {
    (cos_theta * cos_theta + 3.0).sqrt() + cos_theta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsProbe {
    pub epoch: usize,
    #[serde(skip)]
    pub grad_in: GradientVector,
    #[serde(skip)]
    pub grad_out: GradientVector,
    pub norm_in: f64,
    pub norm_out: f64,
    pub r_t: f64,
    pub theta_t: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub n_in: usize,
    pub n_out: usize,
    /// Summed inlier loss drop minus summed outlier loss drop.
    pub delta_sum: f64,
    /// Mean inlier loss drop minus mean outlier loss drop.
    pub delta_mean: f64,
    pub drop_in: f64,
    pub drop_out: f64,
    pub lr_used: f64,
    pub halvings: u32,
}

impl DynamicsProbe {
    pub fn threshold(&self) -> f64 {
        threshold_mean_gap(self.theta_t.cos(), self.big_r)
    }

    pub fn condition_met(&self) -> bool {
        self.r_t > self.threshold()
    }
}

/// Column header of [`write_scatter_csv`].
pub const SCATTER_HEADER: &str = "r_t,threshold,theta_t,R,delta_mean,condition_met";

pub fn write_scatter_csv<W: Write>(mut out: W, probes: &[DynamicsProbe]) -> std::io::Result<()> {
    writeln!(out, "{SCATTER_HEADER}")?;
    for p in probes {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.r_t,
            p.threshold(),
            p.theta_t,
            p.big_r,
            p.delta_mean,
            p.condition_met()
        )?;
    }
    Ok(())
}

fn class_rows(ds: &Dataset) -> Result<(Mat64, Mat64)> {
    let labels = ds.labels().ok_or(Error::LabelsRequired("theory probes (inlier/outlier gradients are class-conditional)"))?;
    let pick = |class: u8| -> Vec<usize> { (0..ds.n()).filter(|&i| labels[i] == class).collect() };
    let (inl, out) = (pick(INLIER), pick(OUTLIER));
    if inl.is_empty() || out.is_empty() {
        return Err(Error::SingleClass);
    }
    let x = ds.training_view();
    Ok((x.select_rows(&inl), x.select_rows(&out)))
}

fn losses(p: &ModelParams, x: &Mat64) -> Result<Vec<f64>> {
    x.row_iter().map(|r| p.loss(r)).collect()
}

// Summing per-sample differences keeps the sign of tiny drops; differencing two
// large sums would bury them in rounding.
fn summed_drop(before: &[f64], next: &ModelParams, x: &Mat64) -> Result<f64> {
    let mut drop = 0.0;
    for (b, r) in before.iter().zip(x.row_iter()) {
        drop += b - next.loss(r)?;
    }
    Ok(drop)
}

fn summed_gradient(p: &ModelParams, x: &Mat64) -> Result<GradientVector> {
    let mut acc = vec![0.0; p.trainable_count()];
    for g in p.gradients(x)? {
        for (a, v) in acc.iter_mut().zip(g.iter()) {
            *a += v;
        }
    }
    GradientVector::new(acc)
}

/// One probe at `p`. `lr` is the step on the summed (not averaged) gradient;
/// it is halved until neither class loss increases.
pub fn probe_dynamics(p: &ModelParams, ds: &Dataset, lr: f64, epoch: usize) -> Result<DynamicsProbe> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("probe lr must be positive, got {lr}")));
    }
    let (x_in, x_out) = class_rows(ds)?;
    let grad_in = summed_gradient(p, &x_in)?;
    let grad_out = summed_gradient(p, &x_out)?;
    let norm_in = norm(&grad_in)?;
    let norm_out = norm(&grad_out)?;
    let r_t = if norm_out > 0.0 { norm_in / norm_out } else { f64::INFINITY };
    // an undefined angle is treated as aligned, the hardest case for the condition
    let theta_t = angle_between(&grad_in, &grad_out).unwrap_or(0.0);
    let (n_in, n_out) = (x_in.rows(), x_out.rows());
    let big_r = n_in as f64 / n_out as f64;

    let full: Vec<f64> = grad_in.iter().zip(grad_out.iter()).map(|(a, b)| a + b).collect();
    let before_in = losses(p, &x_in)?;
    let before_out = losses(p, &x_out)?;
    let mut step = lr;
    for halvings in 0..=MAX_HALVINGS {
        let next = p.gd_step(&full, step)?;
        let drop_in = summed_drop(&before_in, &next, &x_in)?;
        let drop_out = summed_drop(&before_out, &next, &x_out)?;
        if drop_in >= 0.0 && drop_out >= 0.0 {
            return Ok(DynamicsProbe {
                epoch,
                grad_in,
                grad_out,
                norm_in,
                norm_out,
                r_t,
                theta_t,
                big_r,
                n_in,
                n_out,
                delta_sum: drop_in - drop_out,
                delta_mean: drop_in / n_in as f64 - drop_out / n_out as f64,
                drop_in,
                drop_out,
                lr_used: step,
                halvings,
            });
        }
        step *= 0.5;
    }
    Err(Error::LearningRateUnderflow { halvings: MAX_HALVINGS })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub probes: Vec<DynamicsProbe>,
    pub n_condition_met: usize,
    pub n_gap_positive_given_condition: usize,
    /// Indices into `probes` where the condition held but the gap did not.
    pub violations: Vec<usize>,
}

pub fn verify_theorem(probes: Vec<DynamicsProbe>) -> TheoremReport {
    let mut n_condition_met = 0;
    let mut violations = Vec::new();
    for (i, p) in probes.iter().enumerate() {
        if p.condition_met() {
            n_condition_met += 1;
            if p.delta_mean <= 0.0 {
                violations.push(i);
            }
        }
    }
    TheoremReport {
        n_gap_positive_given_condition: n_condition_met - violations.len(),
        n_condition_met,
        violations,
        probes,
    }
}

/// Cohesions and total norms of two gradient sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohesionBridge {
    pub c_in: f64,
    pub c_out: f64,
    pub sum_norm_in: f64,
    pub sum_norm_out: f64,
}

impl CohesionBridge {
    /// `log C_in − log C_out + log(Σ‖g‖_in / Σ‖g‖_out)`, which equals the log
    /// of the ratio of the summed-gradient norms.
    pub fn log_ratio(&self) -> f64 {
        self.c_in.ln() - self.c_out.ln() + (self.sum_norm_in / self.sum_norm_out).ln()
    }
}

pub fn cohesion_bridge(grad_in: &GradientSet, grad_out: &GradientSet) -> Result<CohesionBridge> {
    let bridge = CohesionBridge {
        c_in: cohesion(grad_in),
        c_out: cohesion(grad_out),
        sum_norm_in: grad_in.total_norm(),
        sum_norm_out: grad_out.total_norm(),
    };
    if bridge.sum_norm_in == 0.0 || bridge.sum_norm_out == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if bridge.c_out == 0.0 {
        // summed outlier gradient cancels: the ratio has a pole
        return Err(Error::ZeroNorm);
    }
    Ok(bridge)
}

/// Probes collected along one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSweep {
    pub probes: Vec<DynamicsProbe>,
    /// Epochs where no step size decreased both class losses.
    pub skipped: Vec<usize>,
}

/// Trains with full-batch descent for `hp.epochs` and probes every
/// `interval` epochs (epoch 0 included). `probe_lr` is the step on the summed
/// gradient.
pub fn probe_trajectory(
    ds: &Dataset,
    hp: &Hyperparameters,
    arch: &Architecture,
    rng: &Rng,
    interval: usize,
    probe_lr: f64,
) -> Result<ProbeSweep> {
    if interval == 0 {
        return Err(Error::InvalidArgument("probe interval must be positive".into()));
    }
    let view = ds.training_view();
    let mut params = ModelParams::init(arch, ds.d(), &mut rng.fork(1), Some(&view))?;
    let mut sweep = ProbeSweep::default();
    let probe_at = |params: &ModelParams, epoch: usize, sweep: &mut ProbeSweep| -> Result<()> {
        match probe_dynamics(params, ds, probe_lr, epoch) {
            Ok(p) => sweep.probes.push(p),
            Err(Error::LearningRateUnderflow { .. }) => sweep.skipped.push(epoch),
            Err(e) => return Err(e),
        }
        Ok(())
    };
    probe_at(&params, 0, &mut sweep)?;
    for epoch in 1..=hp.epochs {
        let (_, grad) = params.batch_loss_and_gradient(&view)?;
        params = params.gd_step(&grad, hp.lr)?;
        if epoch % interval == 0 {
            probe_at(&params, epoch, &mut sweep)?;
        }
    }
    Ok(sweep)
}
