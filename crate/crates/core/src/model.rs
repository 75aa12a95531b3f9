//! One-hidden-layer scorers with hand-written per-sample backpropagation.
//!
//! Two model kinds share the encoder `a = act(W1·x + b1)`:
//!
//! * `Ae` decodes linearly, `x̂ = W2·a + b2`, and scores a sample by its mean
//!   squared reconstruction error over the `d` coordinates.
//! * `Dsvdd` scores a sample by `‖a − c‖²` for a centre `c` fixed at
//!   initialization.
//!
//! Trainable parameters live in one flat vector in the canonical order
//! `W1` (row-major, `h × d`), `b1`, then for `Ae` only `W2` (row-major, `d × h`)
//! and `b2`. Gradients use the same order, so a [`GradientVector`] is directly
//! comparable across checkpoints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TrainingView;
use crate::error::{Error, Result};
use crate::linalg::{GradientVector, Mat64, Vec64};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ae,
    Dsvdd,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Dsvdd => "dsvdd",
        }
    }

    pub fn default_activation(self) -> Activation {
        match self {
            ModelKind::Ae => Activation::Tanh,
            ModelKind::Dsvdd => Activation::Relu,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(ModelKind::Ae),
            "dsvdd" => Ok(ModelKind::Dsvdd),
            _ => Err(Error::InvalidArgument(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        }
    }
}

/// Network shape and nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub hidden: usize,
    pub activation: Activation,
}

impl Architecture {
    /// Default topology: 64 hidden units, tanh for the autoencoder, relu for the
    /// hypersphere scorer.
    pub fn default_for(kind: ModelKind) -> Self {
        Self {
            kind,
            hidden: 64,
            activation: kind.default_activation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    kind: ModelKind,
    activation: Activation,
    d: usize,
    h: usize,
    theta: Vec<f64>,
    /// Hypersphere centre; empty for the autoencoder. Never trained.
    center: Vec<f64>,
}

pub fn trainable_count(kind: ModelKind, d: usize, h: usize) -> usize {
    match kind {
        ModelKind::Ae => 2 * d * h + h + d,
        ModelKind::Dsvdd => d * h + h,
    }
}

/// Snaps small centre coordinates away from zero, keeping their sign.
fn guard_center(c: f64) -> f64 {
    const EPS: f64 = 0.1;
    if c.abs() < EPS {
        if c < 0.0 {
            -EPS
        } else {
            EPS
        }
    } else {
        c
    }
}

impl ModelParams {
    /// Fresh parameters: weights uniform in `±1/√fan_in`, zero biases. The
    /// hypersphere scorer additionally needs a warm-up batch for its centre.
    pub fn init(arch: &Architecture, d: usize, rng: &mut Rng, warmup: Option<&Mat64>) -> Result<Self> {
        if d == 0 || arch.hidden == 0 {
            return Err(Error::InvalidArgument("d and hidden size must be >= 1".into()));
        }
        let h = arch.hidden;
        let mut theta = Vec::with_capacity(trainable_count(arch.kind, d, h));
        let b_in = 1.0 / (d as f64).sqrt();
        theta.extend((0..h * d).map(|_| rng.uniform(-b_in, b_in)));
        theta.extend(std::iter::repeat_n(0.0, h));
        if arch.kind == ModelKind::Ae {
            let b_hid = 1.0 / (h as f64).sqrt();
            theta.extend((0..d * h).map(|_| rng.uniform(-b_hid, b_hid)));
            theta.extend(std::iter::repeat_n(0.0, d));
        }
        let mut params = Self {
            kind: arch.kind,
            activation: arch.activation,
            d,
            h,
            theta,
            center: Vec::new(),
        };
        if arch.kind == ModelKind::Dsvdd {
            let batch = warmup.ok_or_else(|| {
                Error::InvalidArgument("hypersphere scorer needs a warm-up batch".into())
            })?;
            params.center = params.mean_embedding(batch)?.into_iter().map(guard_center).collect();
        }
        Ok(params)
    }

    /// Parameters from explicit values, in canonical order.
    pub fn from_parts(
        kind: ModelKind,
        activation: Activation,
        d: usize,
        h: usize,
        theta: Vec<f64>,
        center: Vec<f64>,
    ) -> Result<Self> {
        let expected = trainable_count(kind, d, h);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: theta.len(),
            });
        }
        let expected_center = if kind == ModelKind::Dsvdd { h } else { 0 };
        if center.len() != expected_center {
            return Err(Error::DimensionMismatch {
                expected: expected_center,
                got: center.len(),
            });
        }
        if !theta.iter().chain(&center).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ModelParams::from_parts"));
        }
        Ok(Self {
            kind,
            activation,
            d,
            h,
            theta,
            center,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            kind: self.kind,
            hidden: self.h,
            activation: self.activation,
        }
    }

    pub fn trainable(&self) -> &[f64] {
        &self.theta
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn trainable_count(&self) -> usize {
        self.theta.len()
    }

    /// Copy with the trainable vector replaced; the centre is kept.
    pub fn with_trainable(&self, theta: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.kind, self.activation, self.d, self.h, theta, self.center.clone())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    // Slices of theta in canonical order.
    fn w1(&self) -> &[f64] {
        &self.theta[..self.h * self.d]
    }

    fn b1(&self) -> &[f64] {
        &self.theta[self.h * self.d..self.h * self.d + self.h]
    }

    fn w2(&self) -> &[f64] {
        let off = self.h * self.d + self.h;
        &self.theta[off..off + self.d * self.h]
    }

    fn b2(&self) -> &[f64] {
        let off = 2 * self.h * self.d + self.h;
        &self.theta[off..off + self.d]
    }

    /// Encoder pre-activations and activations.
    fn encode(&self, x: &[f64], z: &mut [f64], a: &mut [f64]) {
        let (w1, b1) = (self.w1(), self.b1());
        for i in 0..self.h {
            let row = &w1[i * self.d..(i + 1) * self.d];
            z[i] = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[i];
            a[i] = self.activation.apply(z[i]);
        }
    }

    /// Decoder output for the autoencoder.
    fn decode(&self, a: &[f64], out: &mut [f64]) {
        let (w2, b2) = (self.w2(), self.b2());
        for j in 0..self.d {
            let row = &w2[j * self.h..(j + 1) * self.h];
            out[j] = row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>() + b2[j];
        }
    }

    fn mean_embedding(&self, batch: &Mat64) -> Result<Vec<f64>> {
        if batch.rows() == 0 {
            return Err(Error::Empty("warm-up batch"));
        }
        let mut z = vec![0.0; self.h];
        let mut a = vec![0.0; self.h];
        let mut mean = vec![0.0; self.h];
        for x in batch.row_iter() {
            self.check_dim(x)?;
            self.encode(x, &mut z, &mut a);
            for (m, v) in mean.iter_mut().zip(&a) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= batch.rows() as f64);
        Ok(mean)
    }

    /// Unsupervised loss of one sample, which doubles as its outlier score.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut z = vec![0.0; self.h];
        let mut a = vec![0.0; self.h];
        self.encode(x, &mut z, &mut a);
        Ok(self.loss_from_code(x, &a))
    }

    fn loss_from_code(&self, x: &[f64], a: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Ae => {
                let mut out = vec![0.0; self.d];
                self.decode(a, &mut out);
                out.iter().zip(x).map(|(y, v)| (y - v).powi(2)).sum::<f64>() / self.d as f64
            }
            ModelKind::Dsvdd => a.iter().zip(&self.center).map(|(v, c)| (v - c).powi(2)).sum(),
        }
    }

    /// Adds `scale · ∇loss(x)` into `grad` and returns the loss.
    fn accumulate_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (d, h) = (self.d, self.h);
        let mut z = vec![0.0; h];
        let mut a = vec![0.0; h];
        self.encode(x, &mut z, &mut a);
        let mut da = vec![0.0; h];
        let loss = match self.kind {
            ModelKind::Ae => {
                let mut out = vec![0.0; d];
                self.decode(&a, &mut out);
                let w2 = self.w2();
                let mut loss = 0.0;
                let off_w2 = h * d + h;
                let off_b2 = off_w2 + d * h;
                for j in 0..d {
                    let r = out[j] - x[j];
                    loss += r * r;
                    let dy = 2.0 * r / d as f64;
                    let gw = &mut grad[off_w2 + j * h..off_w2 + (j + 1) * h];
                    for i in 0..h {
                        gw[i] += scale * dy * a[i];
                        da[i] += w2[j * h + i] * dy;
                    }
                    grad[off_b2 + j] += scale * dy;
                }
                loss / d as f64
            }
            ModelKind::Dsvdd => {
                let mut loss = 0.0;
                for i in 0..h {
                    let diff = a[i] - self.center[i];
                    loss += diff * diff;
                    da[i] = 2.0 * diff;
                }
                loss
            }
        };
        for i in 0..h {
            let dz = da[i] * self.activation.derivative(z[i], a[i]);
            if dz == 0.0 {
                continue;
            }
            let gw = &mut grad[i * d..(i + 1) * d];
            for (g, v) in gw.iter_mut().zip(x) {
                *g += scale * dz * v;
            }
            grad[h * d + i] += scale * dz;
        }
        loss
    }

    /// Gradient of [`ModelParams::loss`] with respect to every trainable parameter.
    pub fn gradient(&self, x: &[f64]) -> Result<GradientVector> {
        self.check_dim(x)?;
        let mut grad = vec![0.0; self.theta.len()];
        self.accumulate_gradient(x, 1.0, &mut grad);
        Vec64::new(grad)
    }

    /// Per-sample gradients for every row, in row order.
    pub fn gradients(&self, x: &Mat64) -> Result<Vec<GradientVector>> {
        x.row_iter().map(|row| self.gradient(row)).collect()
    }

    /// Mean loss over the batch and its exact gradient.
    pub fn batch_loss_and_gradient(&self, x: &Mat64) -> Result<(f64, GradientVector)> {
        if x.rows() == 0 {
            return Err(Error::Empty("batch"));
        }
        if x.cols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.cols(),
            });
        }
        let scale = 1.0 / x.rows() as f64;
        let mut grad = vec![0.0; self.theta.len()];
        let mut loss = 0.0;
        for row in x.row_iter() {
            loss += self.accumulate_gradient(row, scale, &mut grad);
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("batch loss"));
        }
        Ok((loss, Vec64::new(grad)?))
    }

    /// One plain gradient-descent update `θ − lr·g`. The centre is untouched.
    pub fn gd_step(&self, grad: &[f64], lr: f64) -> Result<Self> {
        if grad.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: grad.len(),
            });
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be >= 0")));
        }
        let theta: Vec<f64> = self.theta.iter().zip(grad).map(|(t, g)| t - lr * g).collect();
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gradient step"));
        }
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Outlier scores (per-sample losses) for every row, in row order.
    pub fn score(&self, view: TrainingView<'_>) -> Result<Vec64> {
        self.score_rows(&view)
    }

    pub fn score_rows(&self, x: &Mat64) -> Result<Vec64> {
        if x.cols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.cols(),
            });
        }
        let scores = x.row_iter().map(|r| self.loss(r)).collect::<Result<Vec<_>>>()?;
        Vec64::new(scores).map_err(|_| Error::NonFinite("scores"))
    }
}

/// Epoch-stamped copy of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: ModelParams,
}

const CHECKPOINT_MAGIC: &str = "gradstop-checkpoint 1";

impl Checkpoint {
    pub fn new(epoch: usize, params: ModelParams) -> Self {
        Self { epoch, params }
    }

    /// Line-oriented text encoding: a fixed header, then one value per line
    /// in shortest round-trip form. Trainable values come first in canonical
    /// order, then the centre.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = format!(
            "{CHECKPOINT_MAGIC}\nkind {}\nd {}\nhidden {}\nactivation {}\nepoch {}\ntrainable {}\ncenter {}\n",
            p.kind.as_str(),
            p.d,
            p.h,
            p.activation.as_str(),
            self.epoch,
            p.theta.len(),
            p.center.len()
        );
        for v in p.theta.iter().chain(&p.center) {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(Error::Checkpoint(format!("expected field {key:?}, got {line:?}"))),
            }
        };
        let kind: ModelKind = field("kind")?.parse()?;
        let count = |v: String| v.parse::<usize>().map_err(|_| bad("bad integer"));
        let d = count(field("d")?)?;
        let h = count(field("hidden")?)?;
        let activation: Activation = field("activation")?.parse()?;
        let epoch = count(field("epoch")?)?;
        let n_theta = count(field("trainable")?)?;
        let n_center = count(field("center")?)?;
        let values = lines
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != n_theta + n_center {
            return Err(bad("value count does not match header"));
        }
        let center = values[n_theta..].to_vec();
        let mut theta = values;
        theta.truncate(n_theta);
        Ok(Self {
            epoch,
            params: ModelParams::from_parts(kind, activation, d, h, theta, center)?,
        })
    }
}
