//! The early-stopping controller and the training loop it observes.
//!
//! Every `resample_interval` epochs the loop draws the top-k / last-k gradient
//! sets from the fixed evaluation batch, turns them into `C_Δ` and `D`, and hands
//! them to [`Stopper::observe`]. The stopper keeps the most recent beneficial
//! checkpoint and asks to stop once `window` consecutive observations pass
//! without one. At the end, [`Stopper::finalize`] falls back to the initial
//! parameters when the early divergence was large.

use serde::{Deserialize, Serialize};

use crate::data::{sample_eval_batch, Dataset};
use crate::dynamics::{auc, class_loss_means, cohesion, divergence, grad_sample, EpochRecord, TieMode};
use crate::error::{Error, Result};
use crate::hyper::Hyperparameters;
use crate::linalg::Vec64;
use crate::model::{Architecture, Checkpoint, ModelParams};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WindowExhausted,
    EpochsExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::WindowExhausted => "window_exhausted",
            StopReason::EpochsExhausted => "epochs_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Ratio of the drop below the window maximum to the accumulated change `H`.
/// A flat history (`|H| < 1e-12`) yields 0, so the ratio clause cannot fire.
pub fn downtrend_ratio(h: f64, drop: f64) -> f64 {
    if h.abs() < 1e-12 {
        0.0
    } else {
        drop / h
    }
}

/// Sliding-window state of one run.
#[derive(Debug, Clone)]
pub struct Stopper {
    config: Hyperparameters,
    epochs: Vec<usize>,
    c_delta: Vec<f64>,
    d: Vec<f64>,
    h: f64,
    best: Checkpoint,
    // observation slot of `best`; slot 0 is the initial checkpoint
    best_slot: usize,
    stopped: Option<StopReason>,
}

/// Outcome of [`Stopper::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct FinalChoice {
    pub checkpoint: Checkpoint,
    /// True when the early-divergence rule replaced the best checkpoint by the
    /// initial one.
    pub by_divergence: bool,
    /// Mean `D` over the first `window` observations (0 when none).
    pub early_divergence: f64,
}

impl Stopper {
    pub fn new(config: Hyperparameters, initial: Checkpoint) -> Self {
        Self {
            config,
            epochs: Vec::new(),
            c_delta: Vec::new(),
            d: Vec::new(),
            h: 0.0,
            best: initial,
            best_slot: 0,
            stopped: None,
        }
    }

    pub fn config(&self) -> &Hyperparameters {
        &self.config
    }

    pub fn c_delta_series(&self) -> &[f64] {
        &self.c_delta
    }

    pub fn d_series(&self) -> &[f64] {
        &self.d
    }

    pub fn observed_epochs(&self) -> &[usize] {
        &self.epochs
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn best_epoch(&self) -> usize {
        self.best.epoch
    }

    pub fn best_checkpoint(&self) -> &Checkpoint {
        &self.best
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    /// Records the loop running out of epochs without a window stop.
    pub fn mark_epochs_exhausted(&mut self) {
        self.stopped.get_or_insert(StopReason::EpochsExhausted);
    }

    /// Whether the newest observation counts as beneficial training.
    fn beneficial(&self) -> bool {
        let cfg = &self.config;
        let t = self.c_delta.len() - 1;
        let current = self.c_delta[t];
        let lo = (t + 1).saturating_sub(cfg.window);
        let window_max = self.c_delta[lo..=t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        downtrend_ratio(self.h, current - window_max) > cfg.r_down
            || current > cfg.t_cb
            || current.abs() < cfg.t_cs
    }

    /// Feeds one metric epoch. `params` is copied only if the epoch becomes the
    /// new best.
    pub fn observe(&mut self, epoch: usize, c_delta: f64, d: f64, params: &ModelParams) -> Result<StopDecision> {
        if let Some(reason) = self.stopped {
            return Ok(StopDecision::Stop(reason));
        }
        let previous = self.epochs.last().copied().unwrap_or(self.best.epoch);
        if epoch <= previous {
            return Err(Error::NonMonotoneEpoch { previous, got: epoch });
        }
        let prev_c = self.c_delta.last().copied().unwrap_or(0.0);
        self.epochs.push(epoch);
        self.c_delta.push(c_delta);
        self.d.push(d);
        self.h += c_delta - prev_c;

        let slot = self.c_delta.len();
        if self.beneficial() {
            self.best = Checkpoint::new(epoch, params.clone());
            self.best_slot = slot;
            self.h = 0.0;
            Ok(StopDecision::Continue)
        } else if slot - self.best_slot >= self.config.window {
            self.stopped = Some(StopReason::WindowExhausted);
            Ok(StopDecision::Stop(StopReason::WindowExhausted))
        } else {
            Ok(StopDecision::Continue)
        }
    }

    /// Mean `D` over the first `window` observations.
    pub fn early_divergence(&self) -> f64 {
        mean_head(&self.d, self.config.window)
    }

    /// Best checkpoint, or `initial` when the early divergence exceeds `t_d`.
    pub fn finalize(&self, initial: &Checkpoint) -> FinalChoice {
        let early = self.early_divergence();
        let fallback = !self.d.is_empty() && early > self.config.t_d;
        FinalChoice {
            checkpoint: if fallback {
                initial.clone()
            } else {
                self.best.clone()
            },
            by_divergence: fallback,
            early_divergence: early,
        }
    }
}

fn mean_head(values: &[f64], n: usize) -> f64 {
    let head = &values[..values.len().min(n)];
    if head.is_empty() {
        0.0
    } else {
        head.iter().sum::<f64>() / head.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Gradstop,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Gradstop => "gradstop",
        }
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mode: Mode,
    /// Scores of the returned parameters, in dataset row order.
    pub scores: Vec64,
    pub telemetry: Vec<EpochRecord>,
    /// Epoch of the returned parameters (0 = initial).
    pub best_epoch: usize,
    /// Last epoch trained.
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    pub by_divergence: bool,
    pub early_divergence: f64,
    pub initial: Checkpoint,
    pub returned: Checkpoint,
    /// Parameters at `stop_epoch`.
    pub last: Checkpoint,
    /// AUC of `scores`, when labels exist.
    pub auc_returned: Option<f64>,
    /// AUC of the parameters at `stop_epoch`, when labels exist.
    pub auc_last: Option<f64>,
}

/// Full-batch training with metric epochs every `resample_interval` epochs.
///
/// `Vanilla` trains all epochs and returns the final parameters. `Gradstop`
/// follows the identical trajectory, feeds each metric epoch to a [`Stopper`]
/// and returns its final choice. Labels, when present, only feed telemetry.
pub fn train(
    ds: &Dataset,
    hp: &Hyperparameters,
    arch: &Architecture,
    mode: Mode,
    ties: TieMode,
    rng: &Rng,
) -> Result<RunOutcome> {
    hp.validate()?;
    let view = ds.training_view();
    let mut params = ModelParams::init(arch, ds.d(), &mut rng.fork(1), Some(&view))?;
    let initial = Checkpoint::new(0, params.clone());
    let n_eval = hp.n_eval.min(ds.n());
    let batch = sample_eval_batch(view, n_eval, &mut rng.fork(2))?;
    let mut stopper = Stopper::new(*hp, initial.clone());
    let labels = ds.labels();
    let auc_of = |p: &ModelParams| -> Result<Option<f64>> {
        match labels {
            Some(l) => Ok(Some(auc(&p.score(view)?, l, ties)?)),
            None => Ok(None),
        }
    };

    let mut telemetry = Vec::new();
    let mut stop_epoch = 0;
    for epoch in 1..=hp.epochs {
        let (loss, grad) = params.batch_loss_and_gradient(&view)?;
        params = params.gd_step(&grad, hp.lr)?;
        stop_epoch = epoch;
        if epoch % hp.resample_interval != 0 {
            continue;
        }
        let (top, last) = grad_sample(&params, &batch, hp.k)?;
        let c_top = cohesion(&top);
        let c_last = cohesion(&last);
        let c_delta = c_last - c_top;
        // a vanishing summed gradient carries no directional evidence
        let d = divergence(&top, &last).unwrap_or(0.0);
        let (mean_in, mean_out) = match labels {
            Some(_) => {
                let (a, b) = class_loss_means(&params, ds)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        telemetry.push(EpochRecord {
            epoch,
            batch_loss: loss,
            c_top,
            c_last,
            c_delta,
            d,
            auc: auc_of(&params)?,
            mean_inlier_loss: mean_in,
            mean_outlier_loss: mean_out,
        });
        if mode == Mode::Gradstop {
            if let StopDecision::Stop(_) = stopper.observe(epoch, c_delta, d, &params)? {
                break;
            }
        }
    }
    stopper.mark_epochs_exhausted();
    let last = Checkpoint::new(stop_epoch, params);
    let (returned, by_divergence, early_divergence) = match mode {
        Mode::Vanilla => {
            let d: Vec<f64> = telemetry.iter().map(|r| r.d).collect();
            (last.clone(), false, mean_head(&d, hp.window))
        }
        Mode::Gradstop => {
            let choice = stopper.finalize(&initial);
            (choice.checkpoint, choice.by_divergence, choice.early_divergence)
        }
    };
    let scores = returned.params.score(view)?;
    let auc_returned = labels.map(|l| auc(&scores, l, ties)).transpose()?;
    let auc_last = if returned.epoch == last.epoch {
        auc_returned
    } else {
        auc_of(&last.params)?
    };
    Ok(RunOutcome {
        mode,
        scores,
        telemetry,
        best_epoch: returned.epoch,
        stop_epoch,
        stop_reason: stopper.stopped().unwrap_or(StopReason::EpochsExhausted),
        by_divergence,
        early_divergence,
        initial,
        returned,
        last,
        auc_returned,
        auc_last,
    })
}

/// Training with the stopper in charge.
pub fn run_with_gradstop(
    ds: &Dataset,
    hp: &Hyperparameters,
    arch: &Architecture,
    ties: TieMode,
    rng: &Rng,
) -> Result<RunOutcome> {
    train(ds, hp, arch, Mode::Gradstop, ties, rng)
}
