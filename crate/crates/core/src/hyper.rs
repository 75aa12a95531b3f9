use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;

/// Training and stopping knobs.
///
/// `window` counts stopper *observations*, which happen once every
/// `resample_interval` epochs, not raw epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub lr: f64,
    pub k: usize,
    /// Significance threshold on `|C_Δ|`.
    pub t_cs: f64,
    /// Benefit threshold on `C_Δ`.
    pub t_cb: f64,
    /// Divergence threshold in radians; `f64::INFINITY` disables the rule.
    pub t_d: f64,
    pub window: usize,
    pub r_down: f64,
    pub n_eval: usize,
    pub resample_interval: usize,
}

/// Named default profiles. Only `Ae` and `Dsvdd` have models behind them; the
/// other two exist so that their stopper settings (notably `t_d = ∞`) can be
/// exercised with either model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Ae,
    Dsvdd,
    RdpLike,
    VaeLike,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ae, Preset::Dsvdd, Preset::RdpLike, Preset::VaeLike];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ae => "ae",
            Preset::Dsvdd => "dsvdd",
            Preset::RdpLike => "rdp-like",
            Preset::VaeLike => "vae-like",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn hyperparameters(self) -> Hyperparameters {
        let base = Hyperparameters {
            epochs: 100,
            lr: 0.005,
            k: 20,
            t_cs: 0.01,
            t_cb: 0.05,
            t_d: 1.57,
            window: 20,
            r_down: 0.001,
            n_eval: 400,
            resample_interval: 10,
        };
        match self {
            Preset::Ae => base,
            Preset::Dsvdd => Hyperparameters {
                lr: 0.001,
                t_cs: 0.0,
                t_cb: 0.1,
                window: 10,
                ..base
            },
            Preset::RdpLike => Hyperparameters {
                lr: 0.5,
                t_cs: 0.0,
                t_cb: 0.5,
                t_d: f64::INFINITY,
                window: 50,
                ..base
            },
            Preset::VaeLike => Hyperparameters {
                lr: 0.01,
                k: 10,
                t_cs: 0.01,
                t_cb: 0.5,
                t_d: f64::INFINITY,
                ..base
            },
        }
    }
}

impl From<ModelKind> for Preset {
    fn from(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Ae => Preset::Ae,
            ModelKind::Dsvdd => Preset::Dsvdd,
        }
    }
}

impl Hyperparameters {
    pub fn preset(kind: ModelKind) -> Self {
        Preset::from(kind).hyperparameters()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.k == 0 || self.window == 0 || self.n_eval == 0 || self.resample_interval == 0 {
            return fail("k, window, n_eval and resample_interval must be >= 1".into());
        }
        if 2 * self.k > self.n_eval {
            return fail(format!("k ({}) must be at most n_eval/2 ({})", self.k, self.n_eval / 2));
        }
        if self.t_cs.is_nan() || self.t_cb.is_nan() || self.t_cs >= self.t_cb {
            return fail(format!("need t_cs < t_cb, got {} and {}", self.t_cs, self.t_cb));
        }
        if self.t_d.is_nan() || self.r_down.is_nan() {
            return fail("t_d and r_down must be numbers".into());
        }
        Ok(())
    }

    /// Settings under which every metric epoch is marked beneficial and the
    /// divergence fallback never fires, so the stopper only observes.
    pub fn observe_only(self) -> Self {
        Self {
            t_cs: f64::MAX,
            t_cb: f64::INFINITY,
            t_d: f64::INFINITY,
            ..self
        }
    }
}
