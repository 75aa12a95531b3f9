//! Run configuration: a TOML file with top-level run settings and one table
//! per concern (`[data]`, `[model]`, `[hyper]`, `[verify]`).
//!
//! ```toml
//! profile = "ae"
//! seeds = [0, 1, 2]
//! modes = ["vanilla", "gradstop"]
//! auc_ties = "strict"
//!
//! [data]
//! source = "synthetic"
//! n_inlier = 990
//! n_outlier = 10
//! d = 10
//! scenario = "blob_uniform"
//! half_width = 6.0
//!
//! [hyper]
//! lr = 0.01
//! ```

use std::path::{Path, PathBuf};

use gradstop_core::{
    Activation, Architecture, Hyperparameters, Mode, ModelKind, Preset, Scenario, SyntheticConfig, TieMode,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv {
        path: PathBuf,
        /// Column holding 0/1 labels; without it the run is unsupervised and
        /// reports no AUC.
        label_column: Option<String>,
        #[serde(default)]
        standardize: bool,
        /// Random subsample of at most this many rows (per seed).
        max_n: Option<usize>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: Option<ModelKind>,
    hidden: Option<usize>,
    activation: Option<Activation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperOverrides {
    epochs: Option<usize>,
    lr: Option<f64>,
    k: Option<usize>,
    t_cs: Option<f64>,
    t_cb: Option<f64>,
    t_d: Option<f64>,
    window: Option<usize>,
    r_down: Option<f64>,
    n_eval: Option<usize>,
    resample_interval: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    interval: Option<usize>,
    probe_lr: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    profile: Option<String>,
    seeds: Option<Vec<u64>>,
    modes: Option<Vec<Mode>>,
    out: Option<PathBuf>,
    auc_ties: Option<TieMode>,
    data: DataSource,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    hyper: HyperOverrides,
    #[serde(default)]
    verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub arch: Architecture,
    pub profile: Preset,
    pub hp: Hyperparameters,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub out: Option<PathBuf>,
    pub ties: TieMode,
    /// Probe every this many epochs; defaults to the metric cadence.
    pub probe_interval: usize,
    /// Step on the class-summed gradient; `None` means `lr / n`, one training step.
    pub probe_lr: Option<f64>,
}

impl RunConfig {
    /// Used when no config file is given.
    pub fn default_synthetic() -> Self {
        let hp = Hyperparameters::preset(ModelKind::Ae);
        Self {
            data: DataSource::Synthetic(SyntheticConfig::new(990, 10, 10, Scenario::blob_uniform())),
            arch: Architecture::default_for(ModelKind::Ae),
            profile: Preset::Ae,
            hp,
            seeds: vec![0],
            modes: vec![Mode::Vanilla, Mode::Gradstop],
            out: None,
            ties: TieMode::Strict,
            probe_interval: hp.resample_interval,
            probe_lr: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let kind = file.model.kind.unwrap_or(ModelKind::Ae);
        let profile = match &file.profile {
            Some(name) => Preset::from_name(name).ok_or_else(|| {
                let known: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                CliError::Config(format!("unknown profile {name:?}; known: {}", known.join(", ")))
            })?,
            None => Preset::from(kind),
        };
        let hp = apply(profile.hyperparameters(), &file.hyper);
        let mut arch = Architecture::default_for(kind);
        if let Some(h) = file.model.hidden {
            arch.hidden = h;
        }
        if let Some(a) = file.model.activation {
            arch.activation = a;
        }
        let data = match file.data {
            DataSource::Csv {
                path,
                label_column,
                standardize,
                max_n,
            } => DataSource::Csv {
                path: base.join(path),
                label_column,
                standardize,
                max_n,
            },
            synthetic => synthetic,
        };
        let cfg = Self {
            data,
            arch,
            profile,
            hp,
            seeds: file.seeds.unwrap_or_else(|| vec![0]),
            modes: file.modes.unwrap_or_else(|| vec![Mode::Vanilla, Mode::Gradstop]),
            out: file.out.map(|o| base.join(o)),
            ties: file.auc_ties.unwrap_or_default(),
            probe_interval: file.verify.interval.unwrap_or(hp.resample_interval),
            probe_lr: file.verify.probe_lr,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.modes.is_empty() {
            return Err(CliError::Config("at least one mode is required".into()));
        }
        if self.arch.hidden == 0 {
            return Err(CliError::Config("model.hidden must be >= 1".into()));
        }
        if self.probe_interval == 0 {
            return Err(CliError::Config("verify.interval must be >= 1".into()));
        }
        if let Some(lr) = self.probe_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(CliError::Config(format!("verify.probe_lr must be positive, got {lr}")));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| CliError::Config(format!("data: {e}")))?;
        }
        self.hp
            .validate()
            .map_err(|e| CliError::Config(format!("hyper: {e}")))
    }
}

fn apply(mut hp: Hyperparameters, o: &HyperOverrides) -> Hyperparameters {
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { hp.$f = v; } )* };
    }
    set!(epochs, lr, k, t_cs, t_cb, t_d, window, r_down, n_eval, resample_interval);
    hp
}

/// Parses `--seed 1,2,3`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let seeds = s
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|_| format!("invalid seed {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(seeds)
}
