//! Seed × mode orchestration and the files each run leaves behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gradstop_core::data::{downsample, gen_synthetic, load_csv, standardize};
use gradstop_core::dynamics::write_telemetry_csv;
use gradstop_core::stopper::train;
use gradstop_core::theory::{probe_trajectory, verify_theorem, write_scatter_csv};
use gradstop_core::{
    Dataset, DynamicsProbe, Hyperparameters, Mode, ModelKind, Preset, Rng, RunOutcome, StopReason, TheoremReport,
};
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::CliError;

/// Stream of the seed's generator used for synthetic data.
const DATA_STREAM: u64 = 100;
/// Stream used to subsample CSV rows.
const SUBSAMPLE_STREAM: u64 = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub dataset: String,
    pub model: ModelKind,
    pub mode: Mode,
    pub seed: u64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    pub by_divergence: bool,
    pub early_divergence: f64,
    /// AUC of the returned parameters.
    pub auc_best: Option<f64>,
    /// AUC of the parameters at the last epoch trained.
    pub auc_final: Option<f64>,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeAggregate {
    pub mode: Mode,
    pub runs: usize,
    pub auc_best: Option<Stat>,
    pub auc_final: Option<Stat>,
    pub best_epoch: Option<Stat>,
    pub stop_epoch: Option<Stat>,
}

impl ModeAggregate {
    pub fn from_rows(mode: Mode, rows: &[RunRow]) -> Self {
        let rows: Vec<&RunRow> = rows.iter().filter(|r| r.mode == mode).collect();
        let collect = |f: &dyn Fn(&RunRow) -> Option<f64>| -> Option<Stat> {
            let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
            if v.len() == rows.len() {
                Stat::of(&v)
            } else {
                None
            }
        };
        Self {
            mode,
            runs: rows.len(),
            auc_best: collect(&|r| r.auc_best),
            auc_final: collect(&|r| r.auc_final),
            best_epoch: collect(&|r| Some(r.best_epoch as f64)),
            stop_epoch: collect(&|r| Some(r.stop_epoch as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub dataset: String,
    pub model: ModelKind,
    pub profile: &'static str,
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<ModeAggregate>,
}

#[derive(Debug, Serialize)]
struct Timing {
    mode: Mode,
    seed: u64,
    wall_time_seconds: f64,
}

fn load_base(cfg: &RunConfig) -> Result<Option<Dataset>, CliError> {
    match &cfg.data {
        DataSource::Synthetic(_) => Ok(None),
        DataSource::Csv { path, label_column, .. } => Ok(Some(load_csv(path, label_column.as_deref())?)),
    }
}

/// The dataset a given seed trains on.
fn dataset_for(cfg: &RunConfig, base: Option<&Dataset>, seed: u64) -> Result<Dataset, CliError> {
    let rng = Rng::new(seed);
    match (&cfg.data, base) {
        (DataSource::Synthetic(s), _) => Ok(gen_synthetic(s, &mut rng.fork(DATA_STREAM))?),
        (DataSource::Csv { standardize: z, max_n, .. }, Some(ds)) => {
            let ds = match max_n {
                Some(m) if *m < ds.n() => downsample(ds, *m, &mut rng.fork(SUBSAMPLE_STREAM))?,
                _ => ds.clone(),
            };
            Ok(if *z { standardize(&ds) } else { ds })
        }
        (DataSource::Csv { .. }, None) => unreachable!("csv data is loaded before the seed loop"),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// One score per line, dataset row order, 17 significant digits.
pub fn write_scores<W: Write>(mut out: W, scores: &[f64]) -> std::io::Result<()> {
    for s in scores {
        writeln!(out, "{s:.16e}")?;
    }
    out.flush()
}

fn row_of(cfg: &RunConfig, ds: &Dataset, seed: u64, out: &RunOutcome) -> RunRow {
    RunRow {
        dataset: ds.name().to_string(),
        model: cfg.arch.kind,
        mode: out.mode,
        seed,
        best_epoch: out.best_epoch,
        stop_epoch: out.stop_epoch,
        stop_reason: out.stop_reason,
        by_divergence: out.by_divergence,
        early_divergence: out.early_divergence,
        auc_best: out.auc_returned,
        auc_final: out.auc_last,
        hyperparameters: cfg.hp,
    }
}

fn write_run_files(dir: &Path, stem: &str, row: &RunRow, out: &RunOutcome) -> Result<(), CliError> {
    let path = dir.join(format!("{stem}.telemetry.csv"));
    let mut w = create(&path)?;
    write_telemetry_csv(&mut w, &out.telemetry).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(format!("{stem}.scores.txt"));
    write_scores(create(&path)?, out.scores.as_slice()).map_err(io_err(&path))?;

    let path = dir.join(format!("{stem}.checkpoint.txt"));
    fs::write(&path, out.returned.to_text()).map_err(io_err(&path))?;

    write_json(&dir.join(format!("{stem}.summary.json")), row)
}

fn describe(row: &RunRow) -> String {
    let auc = |a: Option<f64>| a.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{} seed {}: returned epoch {}, stopped at {} ({}), AUC {} (last epoch {})",
        row.mode.as_str(),
        row.seed,
        row.best_epoch,
        row.stop_epoch,
        row.stop_reason.as_str(),
        auc(row.auc_best),
        auc(row.auc_final)
    );
    if row.by_divergence {
        s.push_str(&format!(", initial parameters kept (early D {:.3})", row.early_divergence));
    }
    s
}

pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let base = load_base(cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut dataset = String::new();
    for &seed in &cfg.seeds {
        let ds = dataset_for(cfg, base.as_ref(), seed)?;
        dataset = ds.name().to_string();
        for &mode in &cfg.modes {
            let start = Instant::now();
            let out = train(&ds, &cfg.hp, &cfg.arch, mode, cfg.ties, &Rng::new(seed))?;
            timings.push(Timing {
                mode,
                seed,
                wall_time_seconds: start.elapsed().as_secs_f64(),
            });
            let row = row_of(cfg, &ds, seed, &out);
            write_run_files(out_dir, &format!("{}-seed{seed}", mode.as_str()), &row, &out)?;
            println!("{}", describe(&row));
            rows.push(row);
        }
    }
    let aggregates = cfg.modes.iter().map(|&m| ModeAggregate::from_rows(m, &rows)).collect();
    let summary = RunSummary {
        dataset,
        model: cfg.arch.kind,
        profile: cfg.profile.name(),
        runs: rows,
        aggregates,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    write_json(&out_dir.join("timing.json"), &timings)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub dataset: String,
    pub model: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub probe_interval: usize,
    /// Seed of each entry in `probes`.
    pub probe_seeds: Vec<u64>,
    /// `(seed, epoch)` pairs where no step size decreased both class losses.
    pub skipped: Vec<(u64, usize)>,
    #[serde(flatten)]
    pub report: TheoremReport,
}

pub fn verify(cfg: &RunConfig, out_dir: &Path) -> Result<VerifyReport, CliError> {
    let base = load_base(cfg)?;
    if base.as_ref().is_some_and(|ds| ds.labels().is_none()) {
        return Err(CliError::Data(
            "theory probes compare inlier and outlier gradients, so the dataset needs a label column".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut probes: Vec<DynamicsProbe> = Vec::new();
    let mut probe_seeds = Vec::new();
    let mut skipped = Vec::new();
    let mut dataset = String::new();
    for &seed in &cfg.seeds {
        let ds = dataset_for(cfg, base.as_ref(), seed)?;
        dataset = ds.name().to_string();
        let probe_lr = cfg.probe_lr.unwrap_or(cfg.hp.lr / ds.n() as f64);
        let sweep = probe_trajectory(&ds, &cfg.hp, &cfg.arch, &Rng::new(seed), cfg.probe_interval, probe_lr)?;
        probe_seeds.extend(std::iter::repeat_n(seed, sweep.probes.len()));
        skipped.extend(sweep.skipped.iter().map(|&e| (seed, e)));
        probes.extend(sweep.probes);
    }
    let report = verify_theorem(probes);
    println!(
        "{} probes, {} skipped, {} meet the sufficient condition, {} with a positive gap, {} violations",
        report.probes.len(),
        skipped.len(),
        report.n_condition_met,
        report.n_gap_positive_given_condition,
        report.violations.len()
    );
    let path = out_dir.join("theorem_scatter.csv");
    let mut w = create(&path)?;
    write_scatter_csv(&mut w, &report.probes).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    let full = VerifyReport {
        dataset,
        model: cfg.arch.kind,
        hyperparameters: cfg.hp,
        probe_interval: cfg.probe_interval,
        probe_seeds,
        skipped,
        report,
    };
    write_json(&out_dir.join("theorem_report.json"), &full)?;
    Ok(full)
}

/// All named profiles as TOML tables.
pub fn presets_toml(only: Option<Preset>) -> String {
    let mut s = String::new();
    for p in Preset::ALL.into_iter().filter(|p| only.is_none_or(|o| o == *p)) {
        let body = toml::to_string(&p.hyperparameters()).expect("flat table serializes");
        s.push_str(&format!("[{}]\n{body}\n", p.name()));
    }
    s
}

pub fn default_out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(crate::OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("gradstop-out"))
}
