//! Label-free early stopping for deep unsupervised outlier detection.
//!
//! The crate trains small autoencoder and hypersphere scorers with full-batch
//! gradient descent, watches per-sample gradient dynamics on a fixed
//! evaluation batch, and selects the checkpoint to score with, without ever
//! looking at labels. Labels, when available, are used only for telemetry and
//! for the empirical inlier-priority checks in [`theory`].

pub mod data;
pub mod dynamics;
pub mod error;
pub mod hyper;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod stopper;
pub mod theory;

pub use data::{Dataset, EvalBatch, Scenario, SyntheticConfig, TrainingView};
pub use dynamics::{EpochRecord, GradientSet, TieMode};
pub use error::{Error, Result};
pub use hyper::{Hyperparameters, Preset};
pub use linalg::{GradientVector, Mat64, Vec64};
pub use model::{Activation, Architecture, Checkpoint, ModelKind, ModelParams};
pub use rng::Rng;
pub use stopper::{Mode, RunOutcome, StopDecision, StopReason, Stopper};
pub use theory::{DynamicsProbe, TheoremReport};
