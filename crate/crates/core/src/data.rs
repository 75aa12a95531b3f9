//! Tabular datasets: CSV ingestion, preprocessing, evaluation-batch sampling and
//! labeled synthetic generators.
//!
//! Labels are evaluation metadata. Training code receives a [`TrainingView`],
//! which exposes features only.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat64;
use crate::rng::Rng;

pub const INLIER: u8 = 0;
pub const OUTLIER: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Mat64,
    labels: Option<Vec<u8>>,
    name: String,
}

/// Features-only access to a dataset, handed to models and the stopper.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    x: &'a Mat64,
}

impl Deref for TrainingView<'_> {
    type Target = Mat64;

    fn deref(&self) -> &Mat64 {
        self.x
    }
}

impl Dataset {
    pub fn new(x: Mat64, labels: Option<Vec<u8>>, name: impl Into<String>) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs at least 2 rows, got {}",
                x.rows()
            )));
        }
        if x.cols() < 1 {
            return Err(Error::InvalidArgument("dataset needs at least 1 feature".into()));
        }
        if let Some(pos) = x.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at row {}, column {}",
                pos / x.cols(),
                pos % x.cols()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != x.rows() {
                return Err(Error::DimensionMismatch {
                    expected: x.rows(),
                    got: labels.len(),
                });
            }
            if labels.iter().any(|&l| l > OUTLIER) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            x,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView { x: &self.x }
    }

    /// Evaluation view: ground-truth labels, if the source had any.
    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Features with labels dropped, for unlabeled experiments.
    pub fn without_labels(&self) -> Self {
        Self {
            x: self.x.clone(),
            labels: None,
            name: self.name.clone(),
        }
    }

    pub fn contamination(&self) -> Option<f64> {
        self.labels.as_ref().map(|l| {
            l.iter().filter(|&&v| v == OUTLIER).count() as f64 / l.len() as f64
        })
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.x.select_rows(indices),
            self.labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            self.name.clone(),
        )
    }
}

/// Reads a headed, comma-separated numeric table. When `label_column` names a
/// column, it is split off as 0/1 labels; every other column is a feature.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.to_string()))?,
        ),
        None => None,
    };
    let d = headers.len() - usize::from(label_idx.is_some());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_idx {
                let label = match cell {
                    "0" | "0.0" => INLIER,
                    "1" | "1.0" => OUTLIER,
                    _ => {
                        return Err(Error::BadLabel {
                            row,
                            column: headers[c].to_string(),
                            value: cell.to_string(),
                        })
                    }
                };
                labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::ParseCell {
                    row,
                    column: headers[c].to_string(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::ParseCell {
                        row,
                        column: headers[c].to_string(),
                        value: cell.to_string(),
                    });
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        Mat64::new(rows, d, values)?,
        label_idx.map(|_| labels),
        name,
    )
}

/// Per-feature z-scoring with the population standard deviation. Constant
/// features become all zeros.
pub fn standardize(ds: &Dataset) -> Dataset {
    let (n, d) = (ds.n(), ds.d());
    let mut x = ds.x.clone();
    for c in 0..d {
        let mean = (0..n).map(|r| x[(r, c)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (x[(r, c)] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        // relative cutoff: rounding leaves a residual spread on constant columns
        let constant = std <= 1e-12 * mean.abs().max(1e-300) || std == 0.0;
        for r in 0..n {
            let v = if constant { 0.0 } else { (x[(r, c)] - mean) / std };
            x.set(r, c, v);
        }
    }
    Dataset {
        x,
        labels: ds.labels.clone(),
        name: ds.name.clone(),
    }
}

/// Uniform row subsample without replacement when `n > max_n`; identity otherwise.
/// Selected rows keep their original relative order.
pub fn downsample(ds: &Dataset, max_n: usize, rng: &mut Rng) -> Result<Dataset> {
    if max_n < 2 {
        return Err(Error::InvalidArgument(format!("max_n must be >= 2, got {max_n}")));
    }
    if ds.n() <= max_n {
        return Ok(ds.clone());
    }
    let mut idx = rng.sample_indices(ds.n(), max_n);
    idx.sort_unstable();
    ds.select(&idx)
}

/// Fixed evaluation batch drawn once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch {
    indices: Vec<usize>,
    x: Mat64,
}

impl EvalBatch {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn x(&self) -> &Mat64 {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Batch over explicit rows of `x`; indices must be distinct.
    pub fn from_indices(x: &Mat64, indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; x.rows()];
        for &i in &indices {
            if i >= x.rows() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "evaluation index {i} out of range or repeated"
                )));
            }
        }
        Ok(Self {
            x: x.select_rows(&indices),
            indices,
        })
    }
}

pub fn sample_eval_batch(view: TrainingView<'_>, n_eval: usize, rng: &mut Rng) -> Result<EvalBatch> {
    let n = view.rows();
    if n_eval == 0 || n_eval > n {
        return Err(Error::InvalidArgument(format!(
            "evaluation batch size {n_eval} must be in 1..={n}"
        )));
    }
    let indices = rng.sample_indices(n, n_eval);
    Ok(EvalBatch {
        x: view.select_rows(&indices),
        indices,
    })
}

/// Where the synthetic outliers come from, relative to the inlier blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    /// Outliers uniform in `[-half_width, half_width]^d`.
    BlobUniform { half_width: f64 },
    /// Outliers from a tight Gaussian centred `distance` away along a random
    /// unit direction orthogonal to the inlier principal subspace.
    BlobFarGaussian { distance: f64, outlier_std: f64 },
    /// A very tight outlier cluster `offset` away from the inlier centre along
    /// the same kind of direction as `BlobFarGaussian`. Paired with a low-rank,
    /// dispersed inlier blob, the cluster is the easy-to-fit group and
    /// training erodes the separation a random network already has.
    ToxicInverted { outlier_std: f64, offset: f64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BlobUniform { .. } => "blob_uniform",
            Scenario::BlobFarGaussian { .. } => "blob_far_gaussian",
            Scenario::ToxicInverted { .. } => "toxic_inverted",
        }
    }

    pub fn blob_uniform() -> Self {
        Scenario::BlobUniform { half_width: 6.0 }
    }

    pub fn blob_far_gaussian() -> Self {
        Scenario::BlobFarGaussian {
            distance: 3.0,
            outlier_std: 0.1,
        }
    }

    pub fn toxic_inverted() -> Self {
        Scenario::ToxicInverted {
            outlier_std: 0.05,
            offset: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_inlier: usize,
    pub n_outlier: usize,
    pub d: usize,
    /// Standard deviation of the inlier blob along its principal axes.
    #[serde(default = "one")]
    pub inlier_std: f64,
    /// Number of principal inlier axes; the remaining axes carry `noise_std`.
    /// `None` means isotropic.
    #[serde(default)]
    pub inlier_rank: Option<usize>,
    #[serde(default = "one")]
    pub noise_std: f64,
    #[serde(flatten)]
    pub scenario: Scenario,
}

fn one() -> f64 {
    1.0
}

impl SyntheticConfig {
    pub fn new(n_inlier: usize, n_outlier: usize, d: usize, scenario: Scenario) -> Self {
        Self {
            n_inlier,
            n_outlier,
            d,
            inlier_std: 1.0,
            inlier_rank: None,
            noise_std: 1.0,
            scenario,
        }
    }

    pub fn contamination(&self) -> f64 {
        self.n_outlier as f64 / (self.n_inlier + self.n_outlier) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_outlier == 0 {
            return bad("synthetic data needs at least one outlier".into());
        }
        if self.n_outlier > self.n_inlier {
            return bad(format!(
                "n_outlier ({}) must not exceed n_inlier ({})",
                self.n_outlier, self.n_inlier
            ));
        }
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if let Some(rank) = self.inlier_rank {
            if rank == 0 || rank > self.d {
                return bad(format!("inlier_rank must be in 1..={}", self.d));
            }
        }
        let spreads = match self.scenario {
            Scenario::BlobUniform { half_width } => vec![half_width],
            Scenario::BlobFarGaussian {
                distance,
                outlier_std,
            } => vec![distance, outlier_std],
            Scenario::ToxicInverted {
                outlier_std,
                offset,
            } => {
                if !(offset >= 0.0 && offset.is_finite()) {
                    return bad("offset must be finite and non-negative".into());
                }
                vec![outlier_std]
            }
        };
        if [self.inlier_std, self.noise_std]
            .iter()
            .chain(&spreads)
            .any(|v| !v.is_finite() || *v <= 0.0)
        {
            return bad("spread parameters must be positive and finite".into());
        }
        Ok(())
    }
}

/// Labeled synthetic dataset: inliers first, then outliers.
pub fn gen_synthetic(cfg: &SyntheticConfig, rng: &mut Rng) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.d;
    let rank = cfg.inlier_rank.unwrap_or(d);
    let n = cfg.n_inlier + cfg.n_outlier;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..cfg.n_inlier {
        rows.push(
            (0..d)
                .map(|j| {
                    let s = if j < rank { cfg.inlier_std } else { cfg.noise_std };
                    s * rng.normal()
                })
                .collect::<Vec<_>>(),
        );
    }
    // unit direction outside the principal inlier axes (any axis when isotropic)
    let direction = {
        let lo = if rank < d { rank } else { 0 };
        let mut v = vec![0.0; d];
        for x in v.iter_mut().skip(lo) {
            *x = rng.normal();
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= len);
        v
    };
    for _ in 0..cfg.n_outlier {
        let row: Vec<f64> = match cfg.scenario {
            Scenario::BlobUniform { half_width } => {
                (0..d).map(|_| rng.uniform(-half_width, half_width)).collect()
            }
            Scenario::BlobFarGaussian {
                distance,
                outlier_std,
            } => direction
                .iter()
                .map(|u| distance * u + outlier_std * rng.normal())
                .collect(),
            Scenario::ToxicInverted {
                outlier_std,
                offset,
            } => direction
                .iter()
                .map(|u| offset * u + outlier_std * rng.normal())
                .collect(),
        };
        rows.push(row);
    }
    let labels = std::iter::repeat_n(INLIER, cfg.n_inlier)
        .chain(std::iter::repeat_n(OUTLIER, cfg.n_outlier))
        .collect();
    Dataset::new(Mat64::from_rows(&rows)?, Some(labels), cfg.scenario.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_with_and_without_labels() {
        let f = write_csv("a,b,label\n1,2,0\n3,4,0\n9,9,1\n");
        let ds = load_csv(f.path(), Some("label")).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.labels().unwrap(), &[0, 0, 1]);
        assert_eq!(ds.training_view().row(2), &[9.0, 9.0]);

        let ds = load_csv(f.path(), None).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 3));
        assert!(ds.labels().is_none());
    }

    #[test]
    fn load_csv_error_variants() {
        let f = write_csv("a,b\n1,2\nx,4\n");
        match load_csv(f.path(), None) {
            Err(Error::ParseCell { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "a", "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_csv("a,label\n1,0\n2,2\n");
        assert!(matches!(load_csv(f.path(), Some("label")), Err(Error::BadLabel { .. })));
        assert!(matches!(load_csv(f.path(), Some("nope")), Err(Error::MissingLabelColumn(_))));
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv"), None),
            Err(Error::Io { .. })
        ));
    }

    fn column(ds: &Dataset, c: usize) -> Vec<f64> {
        ds.training_view().row_iter().map(|r| r[c]).collect()
    }

    #[test]
    fn standardize_examples() {
        let x = Mat64::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let ds = standardize(&Dataset::new(x, None, "t").unwrap());
        assert_eq!(column(&ds, 0), vec![-1.0, 1.0]);
        assert_eq!(column(&ds, 1), vec![0.0, 0.0]);

        let x = Mat64::from_rows(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(column(&standardize(&Dataset::new(x, None, "t").unwrap()), 0), vec![0.0; 3]);
    }

    #[test]
    fn standardize_moments_and_idempotence() {
        let mut rng = Rng::new(11);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![3.0 + 2.0 * rng.normal(), -7.0 + 0.5 * rng.normal()])
            .collect();
        let ds = Dataset::new(Mat64::from_rows(&rows).unwrap(), None, "t").unwrap();
        let once = standardize(&ds);
        for c in 0..2 {
            let col = column(&once, c);
            let mean = col.iter().sum::<f64>() / 100.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((std - 1.0).abs() < 1e-12);
        }
        let twice = standardize(&once);
        for (a, b) in once.training_view().values().iter().zip(twice.training_view().values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn labeled(n: usize, every: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| u8::from(i % every == 0)).collect();
        Dataset::new(Mat64::from_rows(&rows).unwrap(), Some(labels), "t").unwrap()
    }

    #[test]
    fn downsample_identity_and_size() {
        let ds = labeled(500, 10);
        assert_eq!(downsample(&ds, 10_000, &mut Rng::new(0)).unwrap(), ds);

        let big = labeled(20_000, 10);
        let a = downsample(&big, 10_000, &mut Rng::new(4)).unwrap();
        assert_eq!(a.n(), 10_000);
        let rows: Vec<f64> = a.training_view().row_iter().map(|r| r[0]).collect();
        let mut dedup = rows.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), rows.len(), "rows are distinct and sorted");
        assert_eq!(a, downsample(&big, 10_000, &mut Rng::new(4)).unwrap());
        assert!(downsample(&big, 1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn downsample_preserves_contamination_on_average() {
        let ds = labeled(2_000, 10);
        let mean: f64 = (0..100)
            .map(|s| downsample(&ds, 200, &mut Rng::new(s)).unwrap().contamination().unwrap())
            .sum::<f64>()
            / 100.0;
        assert!((mean - 0.1).abs() <= 0.02, "mean contamination {mean}");
    }

    #[test]
    fn eval_batch_sampling() {
        let ds = labeled(1000, 10);
        let b = sample_eval_batch(ds.training_view(), 400, &mut Rng::new(1)).unwrap();
        let mut idx = b.indices().to_vec();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 400);
        assert_eq!(b.x().rows(), 400);

        let full = sample_eval_batch(ds.training_view(), 1000, &mut Rng::new(1)).unwrap();
        let mut idx = full.indices().to_vec();
        idx.sort_unstable();
        assert_eq!(idx, (0..1000).collect::<Vec<_>>());
        assert!(sample_eval_batch(ds.training_view(), 1001, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn synthetic_generation() {
        let cfg = SyntheticConfig::new(990, 10, 10, Scenario::blob_uniform());
        assert!((cfg.contamination() - 0.01).abs() < 1e-15);
        let a = gen_synthetic(&cfg, &mut Rng::new(0)).unwrap();
        let b = gen_synthetic(&cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 1000);
        assert_eq!(a.contamination(), Some(0.01));

        let mut bad = cfg;
        bad.n_outlier = 0;
        assert!(gen_synthetic(&bad, &mut Rng::new(0)).is_err());
        bad.n_outlier = 991;
        assert!(gen_synthetic(&bad, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn labels_do_not_leak_into_training_view() {
        let ds = labeled(10, 2);
        let view = ds.training_view();
        assert_eq!(view.cols(), 1);
        assert_eq!(ds.without_labels().labels(), None);
    }
}
