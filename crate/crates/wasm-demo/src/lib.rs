//! Browser bindings: a vanilla-vs-GradStop training run on synthetic data, the
//! sufficient-condition threshold curves, and a gradient-dynamics probe sweep.
//!
//! Every entry point takes and returns JSON text. The `*_json` functions are
//! the same operations without the JS error type, for native use and tests.

use gradstop_core::data::gen_synthetic;
use gradstop_core::stopper::train;
use gradstop_core::theory::{probe_trajectory, threshold_mean_gap, threshold_sum_gap, verify_theorem};
use gradstop_core::{
    Architecture, EpochRecord, Hyperparameters, Mode, ModelKind, Rng, RunOutcome, SyntheticConfig, TieMode,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperOverrides {
    epochs: Option<usize>,
    lr: Option<f64>,
    k: Option<usize>,
    t_cs: Option<f64>,
    t_cb: Option<f64>,
    /// `null` disables the divergence rule.
    #[serde(default, deserialize_with = "nullable_threshold")]
    t_d: Option<f64>,
    window: Option<usize>,
}

// JSON has no infinity, so an explicit null turns the rule off.
fn nullable_threshold<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Ok(Some(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRequest {
    data: SyntheticConfig,
    #[serde(default = "default_model")]
    model: ModelKind,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    hyper: HyperOverrides,
}

fn default_model() -> ModelKind {
    ModelKind::Ae
}

impl DemoRequest {
    fn parse(input: &str) -> Result<Self, String> {
        serde_json::from_str(input).map_err(|e| format!("bad request: {e}"))
    }

    fn hyperparameters(&self) -> Hyperparameters {
        let mut hp = Hyperparameters::preset(self.model);
        let o = &self.hyper;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { hp.$f = v; } )* };
        }
        set!(epochs, lr, k, t_cs, t_cb, t_d, window);
        hp
    }
}

#[derive(Serialize)]
struct Curve {
    epoch: Vec<usize>,
    auc: Vec<Option<f64>>,
    c_top: Vec<f64>,
    c_last: Vec<f64>,
    c_delta: Vec<f64>,
    d: Vec<f64>,
    mean_inlier_loss: Vec<Option<f64>>,
    mean_outlier_loss: Vec<Option<f64>>,
}

impl Curve {
    fn of(records: &[EpochRecord]) -> Self {
        Self {
            epoch: records.iter().map(|r| r.epoch).collect(),
            auc: records.iter().map(|r| r.auc).collect(),
            c_top: records.iter().map(|r| r.c_top).collect(),
            c_last: records.iter().map(|r| r.c_last).collect(),
            c_delta: records.iter().map(|r| r.c_delta).collect(),
            d: records.iter().map(|r| r.d).collect(),
            mean_inlier_loss: records.iter().map(|r| r.mean_inlier_loss).collect(),
            mean_outlier_loss: records.iter().map(|r| r.mean_outlier_loss).collect(),
        }
    }
}

#[derive(Serialize)]
struct DemoRun {
    /// Full-length vanilla telemetry; GradStop follows the same trajectory.
    curve: Curve,
    best_epoch: usize,
    stop_epoch: usize,
    stop_reason: &'static str,
    by_divergence: bool,
    early_divergence: f64,
    auc_gradstop: Option<f64>,
    auc_vanilla: Option<f64>,
    auc_initial: Option<f64>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

pub fn run_demo_json(input: &str) -> Result<String, String> {
    let req = DemoRequest::parse(input)?;
    let hp = req.hyperparameters();
    let rng = Rng::new(req.seed);
    let ds = gen_synthetic(&req.data, &mut rng.fork(100)).map_err(|e| e.to_string())?;
    let arch = Architecture::default_for(req.model);
    let go = |mode| -> Result<RunOutcome, String> {
        train(&ds, &hp, &arch, mode, TieMode::Strict, &rng).map_err(|e| e.to_string())
    };
    let vanilla = go(Mode::Vanilla)?;
    let gs = go(Mode::Gradstop)?;
    let labels = ds.labels().expect("synthetic data is labelled");
    let initial_scores = gs.initial.params.score(ds.training_view()).map_err(|e| e.to_string())?;
    let auc_initial = gradstop_core::dynamics::auc(&initial_scores, labels, TieMode::Strict).ok();
    Ok(to_json(&DemoRun {
        curve: Curve::of(&vanilla.telemetry),
        best_epoch: gs.best_epoch,
        stop_epoch: gs.stop_epoch,
        stop_reason: gs.stop_reason.as_str(),
        by_divergence: gs.by_divergence,
        early_divergence: gs.early_divergence,
        auc_gradstop: gs.auc_returned,
        auc_vanilla: vanilla.auc_returned,
        auc_initial,
    }))
}

#[derive(Serialize)]
struct Thresholds {
    cos_theta: Vec<f64>,
    sum_gap: Vec<f64>,
    /// One curve per requested `R`.
    mean_gap: Vec<Vec<f64>>,
    big_r: Vec<f64>,
}

/// `input`: `{"big_r": [1, 10, 99], "points": 201}`.
pub fn threshold_curves_json(input: &str) -> Result<String, String> {
    #[derive(Deserialize)]
    struct Req {
        big_r: Vec<f64>,
        #[serde(default = "default_points")]
        points: usize,
    }
    fn default_points() -> usize {
        201
    }
    let req: Req = serde_json::from_str(input).map_err(|e| format!("bad request: {e}"))?;
    if req.points < 2 || req.big_r.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
        return Err("need points >= 2 and every R >= 1".into());
    }
    let cos_theta: Vec<f64> = (0..req.points)
        .map(|i| -1.0 + 2.0 * i as f64 / (req.points - 1) as f64)
        .collect();
    Ok(to_json(&Thresholds {
        sum_gap: cos_theta.iter().map(|&c| threshold_sum_gap(c)).collect(),
        mean_gap: req
            .big_r
            .iter()
            .map(|&r| cos_theta.iter().map(|&c| threshold_mean_gap(c, r)).collect())
            .collect(),
        cos_theta,
        big_r: req.big_r,
    }))
}

#[derive(Serialize)]
struct ScatterPoint {
    epoch: usize,
    r_t: Option<f64>,
    threshold: f64,
    theta_t: f64,
    delta_mean: f64,
    condition_met: bool,
}

#[derive(Serialize)]
struct Scatter {
    points: Vec<ScatterPoint>,
    skipped: Vec<usize>,
    n_condition_met: usize,
    violations: usize,
}

/// Same request as [`run_demo_json`]; probes every metric epoch of one run.
pub fn probe_scatter_json(input: &str) -> Result<String, String> {
    let req = DemoRequest::parse(input)?;
    let hp = req.hyperparameters();
    let rng = Rng::new(req.seed);
    let ds = gen_synthetic(&req.data, &mut rng.fork(100)).map_err(|e| e.to_string())?;
    let arch = Architecture::default_for(req.model);
    let sweep = probe_trajectory(&ds, &hp, &arch, &rng, hp.resample_interval, hp.lr / ds.n() as f64)
        .map_err(|e| e.to_string())?;
    let report = verify_theorem(sweep.probes);
    Ok(to_json(&Scatter {
        points: report
            .probes
            .iter()
            .map(|p| ScatterPoint {
                epoch: p.epoch,
                r_t: p.r_t.is_finite().then_some(p.r_t),
                threshold: p.threshold(),
                theta_t: p.theta_t,
                delta_mean: p.delta_mean,
                condition_met: p.condition_met(),
            })
            .collect(),
        skipped: sweep.skipped,
        n_condition_met: report.n_condition_met,
        violations: report.violations.len(),
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_demo(input: &str) -> Result<String, JsValue> {
    js(run_demo_json(input))
}

#[wasm_bindgen]
pub fn threshold_curves(input: &str) -> Result<String, JsValue> {
    js(threshold_curves_json(input))
}

#[wasm_bindgen]
pub fn probe_scatter(input: &str) -> Result<String, JsValue> {
    js(probe_scatter_json(input))
}
