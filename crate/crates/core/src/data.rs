//! Datasets, CSV persistence and the synthetic Gaussian-blob generator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::logreg::{check_threshold, predict_proba, ModelParams};
use crate::rng::RngState;

/// Spread used by [`SyntheticSpec::default`]. With centers at `∓(1, 1)` the
/// Bayes accuracy is Φ(√2 / 2.2) ≈ 0.740, and non-private gradient descent
/// lands between 70% and 80% training accuracy on 400 rows.
pub const DEFAULT_SPREAD: f64 = 2.2;

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<u8>,
    name: String,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut features = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            check_dim(dim, row.len())?;
            features.extend_from_slice(row);
        }
        Self::from_flat(features, dim, labels, name)
    }

    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<u8>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        check_dim(labels.len() * dim, features.len())?;
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite feature value {bad}"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidConfig(format!("label {bad} is not binary")));
        }
        Ok(Self {
            features,
            dim,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u8)> + '_ {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(features, self.dim, labels, name)
    }

    /// Number of rows labelled 0 and 1.
    pub fn label_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - ones, ones)
    }

    /// `(min, max)` of every feature column.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|j| {
                self.iter()
                    .map(|(x, _)| x[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    /// Z-scores every column. Constant columns are only centered. Returns the
    /// per-column `(mean, std)` that was applied.
    pub fn standardize(&self) -> (Dataset, Vec<(f64, f64)>) {
        let m = self.len() as f64;
        let stats: Vec<(f64, f64)> = (0..self.dim)
            .map(|j| {
                let mean = self.iter().map(|(x, _)| x[j]).sum::<f64>() / m;
                let var = self.iter().map(|(x, _)| (x[j] - mean).powi(2)).sum::<f64>() / m;
                let sd = var.sqrt();
                (mean, if sd > 0.0 { sd } else { 1.0 })
            })
            .collect();
        let features = self
            .features
            .chunks_exact(self.dim)
            .flat_map(|row| row.iter().zip(&stats).map(|(v, (mu, sd))| (v - mu) / sd))
            .collect();
        let out = Dataset {
            features,
            dim: self.dim,
            labels: self.labels.clone(),
            name: self.name.clone(),
        };
        (out, stats)
    }
}

/// Two isotropic Gaussian blobs, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub dim: usize,
    /// Fraction of rows drawn from class 0.
    pub class_balance: f64,
    pub centers: [Vec<f64>; 2],
    pub spread: f64,
    /// Offset added to both centers for the public copy.
    pub shift: Vec<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::with_dim(400, 2)
    }
}

impl SyntheticSpec {
    /// Centers at `−1` and `+1` in every coordinate, default spread.
    pub fn with_dim(n_samples: usize, dim: usize) -> Self {
        Self {
            n_samples,
            dim,
            class_balance: 0.5,
            centers: [vec![-1.0; dim], vec![1.0; dim]],
            spread: DEFAULT_SPREAD,
            shift: vec![0.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.dim == 0 {
            return Err(Error::EmptyDimension);
        }
        check_dim(self.dim, self.centers[0].len())?;
        check_dim(self.dim, self.centers[1].len())?;
        check_dim(self.dim, self.shift.len())?;
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "class_balance must lie in (0, 1), got {}",
                self.class_balance
            )));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "spread must be finite and >= 0, got {}",
                self.spread
            )));
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&self.centers[0]) && finite(&self.centers[1]) && finite(&self.shift)) {
            return Err(Error::InvalidConfig(
                "centers and shift must be finite".into(),
            ));
        }
        Ok(())
    }

    /// The spec of the public copy: centers moved by `shift`.
    pub fn shifted(&self) -> Self {
        let mv = |c: &Vec<f64>| c.iter().zip(&self.shift).map(|(a, b)| a + b).collect();
        Self {
            centers: [mv(&self.centers[0]), mv(&self.centers[1])],
            shift: vec![0.0; self.dim],
            ..self.clone()
        }
    }

    /// Rows drawn from class 0: `⌊balance · n⌋`.
    pub fn class0_count(&self) -> usize {
        (self.class_balance * self.n_samples as f64).floor() as usize
    }
}

/// Draws class-0 rows, then class-1 rows, then shuffles row order.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut RngState) -> Result<Dataset> {
    spec.validate()?;
    let n0 = spec.class0_count();
    let mut rows = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let class = usize::from(i >= n0);
        let row: Vec<f64> = spec.centers[class]
            .iter()
            .map(|c| c + spec.spread * rng.standard_normal())
            .collect();
        rows.push((row, class as u8));
    }
    rng.shuffle(&mut rows);
    let (rows, labels) = rows.into_iter().unzip();
    Dataset::new(rows, labels, "synthetic")
}

/// Fraction of rows whose thresholded prediction equals the label.
pub fn accuracy(params: &ModelParams, data: &Dataset, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    check_dim(data.dim(), params.dim())?;
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        if u8::from(predict_proba(params, x)? >= threshold) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Shuffled partition into `⌈(1 − f) m⌉` training rows and the remainder.
pub fn train_test_split(
    data: &Dataset,
    test_fraction: f64,
    rng: &mut RngState,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let m = data.len();
    let n_train = ((1.0 - test_fraction) * m as f64).ceil() as usize;
    if n_train == 0 || n_train >= m {
        return Err(Error::InvalidConfig(format!(
            "test_fraction {test_fraction} leaves an empty part of {m} rows"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut idx);
    let train = data.subset(&idx[..n_train], format!("{}-train", data.name()))?;
    let test = data.subset(&idx[n_train..], format!("{}-test", data.name()))?;
    Ok((train, test))
}

/// 17 significant digits; parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `f1,…,fd,label` then one row per sample, `\n`-terminated.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(data.dim() + 1);
    for (x, y) in data.iter() {
        record.clear();
        record.extend(x.iter().map(|&v| format_f64(v)));
        record.push(y.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `data` to `path`, creating missing parent directories.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(data, BufWriter::new(File::create(path)?))
}

/// Parses the layout produced by [`write_csv`]. The last column is the label.
pub fn read_csv<R: Read>(input: R, name: impl Into<String>) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header row".into(),
            })
        }
    };
    let width = header.len();
    if width < 2 || header.get(width - 1).map(str::trim) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            message: "header must be f1,...,fd,label".into(),
        });
    }
    let dim = width - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for field in rec.iter().take(dim) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            features.push(v);
        }
        let raw = rec.get(dim).unwrap_or_default().trim();
        let label = match raw.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("label {raw:?} is not 0 or 1"),
                })
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_flat(features, dim, labels, name)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string();
    read_csv(BufReader::new(File::open(path)?), name)
}
