//! Experiment harness: ε sweeps with and without pre-training, σ sweeps,
//! loss-trace and decision-boundary exports.
//!
//! Every trial is keyed by a 64-bit seed. The seed drives four independent
//! ChaCha streams (see the `STREAM_*` constants): private data, public data,
//! training noise and the optional train/test split. Both arms of a trial and
//! every point of a grid reuse the same noise stream, so arm differences and
//! grid trends are paired comparisons.
//!
//! Every CSV written here gets a JSON sidecar with the same stem that records
//! the configuration, seeds, accounting, derived σ values and crate version.
//! Nothing time- or host-dependent is recorded, so reruns are byte-identical.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    accuracy, generate_synthetic, load_csv, train_test_split, Dataset, SyntheticSpec,
};
use crate::dp_train::{
    noisy_gradient_descent, Accounting, ClipThreshold, DpTrainConfig, PrivacyBudget,
};
use crate::error::{Error, Result};
use crate::logreg::{gradient_descent, predict_proba, Init, ModelParams, TrainConfig, TrainTrace};
use crate::noise::{ClippingMode, PrivacyPair};
use crate::rng::RngState;
use crate::stats::{mean, std_error};
use crate::VERSION;

pub const STREAM_PRIVATE: u64 = 0;
pub const STREAM_PUBLIC: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_SPLIT: u64 = 3;

/// A point on the privacy axis: a finite run-level ε, or no privacy at all.
///
/// Serialized as a JSON number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EpsilonRepr", into = "EpsilonRepr")]
pub enum Epsilon {
    Finite(f64),
    NoPrivacy,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EpsilonRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<EpsilonRepr> for Epsilon {
    type Error = String;

    fn try_from(r: EpsilonRepr) -> std::result::Result<Self, String> {
        match r {
            EpsilonRepr::Number(e) => Epsilon::finite(e).map_err(|e| e.to_string()),
            EpsilonRepr::Word(w) => w.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<Epsilon> for EpsilonRepr {
    fn from(e: Epsilon) -> Self {
        match e {
            Epsilon::Finite(v) => EpsilonRepr::Number(v),
            Epsilon::NoPrivacy => EpsilonRepr::Word("inf".into()),
        }
    }
}

impl Epsilon {
    pub fn finite(e: f64) -> Result<Self> {
        if e.is_finite() && e > 0.0 {
            Ok(Epsilon::Finite(e))
        } else {
            Err(Error::InvalidBudget(format!(
                "epsilon must be positive, got {e}"
            )))
        }
    }

    fn rank(self) -> f64 {
        match self {
            Epsilon::Finite(e) => e,
            Epsilon::NoPrivacy => f64::INFINITY,
        }
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Finite(e) => write!(f, "{e}"),
            Epsilon::NoPrivacy => f.write_str("inf"),
        }
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "none" | "no-privacy" => Ok(Epsilon::NoPrivacy),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidBudget(format!("bad epsilon {other:?}")))
                .and_then(Epsilon::finite),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        private: PathBuf,
        public: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Everything a sweep needs. All fields have defaults, so `{}` is a valid
/// configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Z-score file-based datasets column by column (uses each file's own
    /// statistics, which is not itself a private computation).
    pub standardize: bool,
    pub epsilon_grid: Vec<Epsilon>,
    pub sigma_grid: Vec<f64>,
    pub delta: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub clip: ClipThreshold,
    pub clipping_mode: ClippingMode,
    pub accounting: Accounting,
    pub threshold: f64,
    pub seeds: Vec<u64>,
    /// Whether single runs and σ sweeps start from a public-data fit.
    pub pretrain: bool,
    pub pretrain_iterations: usize,
    pub pretrain_alpha: f64,
    /// Report accuracy on a held-out split instead of the training rows.
    pub test_fraction: Option<f64>,
    pub output_dir: PathBuf,
    pub grid_resolution: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 15.0];
        let mut epsilon_grid: Vec<Epsilon> = grid.iter().map(|&e| Epsilon::Finite(e)).collect();
        epsilon_grid.push(Epsilon::NoPrivacy);
        Self {
            data: DataSource::default(),
            standardize: false,
            epsilon_grid,
            sigma_grid: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
            delta: 1e-5,
            iterations: 100,
            alpha: 0.5,
            clip: ClipThreshold::Finite(1.0),
            clipping_mode: ClippingMode::PerExampleMean,
            accounting: Accounting::Basic,
            threshold: 0.5,
            seeds: (1..=20).collect(),
            pretrain: true,
            pretrain_iterations: 100,
            pretrain_alpha: 0.5,
            test_fraction: None,
            output_dir: PathBuf::from("results"),
            grid_resolution: 50,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid is empty".into());
        }
        if self
            .epsilon_grid
            .windows(2)
            .any(|w| w[1].rank() <= w[0].rank())
        {
            return bad("epsilon_grid must be strictly increasing".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds is empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidBudget(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        TrainConfig::new(self.alpha, self.iterations).validate()?;
        if self.pretrain {
            TrainConfig::new(self.pretrain_alpha, self.pretrain_iterations).validate()?;
        }
        crate::logreg::check_threshold(self.threshold)?;
        if let Some(f) = self.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("test_fraction must lie in (0, 1), got {f}"));
            }
        }
        if self.grid_resolution == 0 {
            return bad("grid_resolution must be positive".into());
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    fn validate_sigma_grid(&self) -> Result<()> {
        if self.sigma_grid.is_empty() {
            return Err(Error::InvalidConfig("sigma_grid is empty".into()));
        }
        if self
            .sigma_grid
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::InvalidConfig(
                "sigma_grid values must be finite and >= 0".into(),
            ));
        }
        if self.sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "sigma_grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    fn sorted_seeds(&self) -> Vec<u64> {
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s
    }

    fn dp_config(&self, init: Init) -> DpTrainConfig {
        DpTrainConfig::new(
            TrainConfig::new(self.alpha, self.iterations).with_init(init),
            self.clip,
            self.clipping_mode,
        )
    }

    /// Noise budget for a point on the ε axis over `n` private rows.
    pub fn budget_for(&self, epsilon: Epsilon, n: usize) -> Result<PrivacyBudget> {
        match epsilon {
            Epsilon::Finite(e) => PrivacyBudget::calibrated(
                PrivacyPair::new(e, self.delta)?,
                self.iterations,
                self.accounting,
                self.clip,
                n,
            ),
            Epsilon::NoPrivacy => Ok(PrivacyBudget::no_privacy(self.iterations)),
        }
    }

    fn accuracy_on(&self) -> &'static str {
        if self.test_fraction.is_some() {
            "test"
        } else {
            "train"
        }
    }
}

/// Datasets loaded once for file-backed configurations.
#[derive(Debug, Clone)]
pub struct LoadedData {
    private: Dataset,
    public: Option<Dataset>,
}

/// Loads file-backed datasets; `None` for synthetic configurations.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Option<LoadedData>> {
    let DataSource::Files { private, public } = &cfg.data else {
        return Ok(None);
    };
    let prep = |d: Dataset| {
        if cfg.standardize {
            d.standardize().0
        } else {
            d
        }
    };
    let private = prep(load_csv(private)?);
    let public = public.as_ref().map(load_csv).transpose()?.map(prep);
    if let Some(p) = &public {
        crate::error::check_dim(private.dim(), p.dim())?;
    }
    Ok(Some(LoadedData { private, public }))
}

/// Data and pre-trained parameters for one seed.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    /// Rows the private phase trains on.
    pub train: Dataset,
    /// Rows accuracy is reported on: `train` unless a split is configured.
    pub eval: Dataset,
    pub public: Option<Dataset>,
    pub pretrained: Option<(ModelParams, TrainTrace)>,
}

impl Trial {
    pub fn noise_rng(&self) -> RngState {
        RngState::stream(self.seed, STREAM_NOISE)
    }
}

/// Builds the trial for `seed`, pre-training on public data when
/// `with_pretrain` is set.
pub fn prepare_trial(
    cfg: &ExperimentConfig,
    loaded: Option<&LoadedData>,
    seed: u64,
    with_pretrain: bool,
) -> Result<Trial> {
    let (private, public) = match (&cfg.data, loaded) {
        (DataSource::Synthetic(spec), _) => {
            let private = generate_synthetic(spec, &mut RngState::stream(seed, STREAM_PRIVATE))?
                .with_name("private");
            let public =
                generate_synthetic(&spec.shifted(), &mut RngState::stream(seed, STREAM_PUBLIC))?
                    .with_name("public");
            (private, Some(public))
        }
        (DataSource::Files { .. }, Some(l)) => (l.private.clone(), l.public.clone()),
        (DataSource::Files { .. }, None) => {
            return Err(Error::InvalidConfig(
                "file-backed configuration used without loaded data".into(),
            ))
        }
    };
    let (train, eval) = match cfg.test_fraction {
        Some(f) => train_test_split(&private, f, &mut RngState::stream(seed, STREAM_SPLIT))?,
        None => (private.clone(), private),
    };
    let pretrained = if with_pretrain {
        let public = public
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("pre-training needs a public dataset".into()))?;
        crate::error::check_dim(train.dim(), public.dim())?;
        Some(gradient_descent(
            public,
            &TrainConfig::new(cfg.pretrain_alpha, cfg.pretrain_iterations),
        )?)
    } else {
        None
    };
    Ok(Trial {
        seed,
        train,
        eval,
        public,
        pretrained,
    })
}

/// One noisy run on a prepared trial; the noise stream restarts from the
/// trial seed on every call.
///
/// A noiseless budget also skips clipping, so the zero-noise end of either
/// sweep is exactly the non-private baseline.
pub fn train_arm(
    cfg: &ExperimentConfig,
    trial: &Trial,
    budget: &PrivacyBudget,
    use_pretrain: bool,
) -> Result<(ModelParams, TrainTrace)> {
    let init = match (&trial.pretrained, use_pretrain) {
        (Some((p, _)), true) => Init::Given(p.clone()),
        (None, true) => {
            return Err(Error::InvalidConfig(
                "trial was prepared without pre-training".into(),
            ))
        }
        (_, false) => Init::Zeros,
    };
    let mut dp = cfg.dp_config(init);
    if budget.sigma() == 0.0 {
        dp.clip = ClipThreshold::Disabled;
    }
    noisy_gradient_descent(&trial.train, &dp, budget, &mut trial.noise_rng())
}

/// Paired accuracies of one seed at one ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub plain: f64,
    pub pretrained: f64,
}

impl SeedOutcome {
    pub fn enhancement(&self) -> f64 {
        self.pretrained - self.plain
    }
}

/// One row of the ε sweep. Accuracies are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: Epsilon,
    pub sigma: f64,
    pub per_iter: Option<PrivacyPair>,
    pub guarantee: Option<PrivacyPair>,
    pub mean_accuracy_no_pretrain: f64,
    pub se_no_pretrain: f64,
    pub mean_accuracy_pretrain: f64,
    pub se_pretrain: f64,
    /// `mean_accuracy_pretrain − mean_accuracy_no_pretrain`.
    pub enhancement: f64,
    /// Standard error of the paired per-seed differences.
    pub se_enhancement: f64,
    pub n_seeds: usize,
    /// Seeds dropped because either arm diverged.
    pub n_failed: usize,
    pub outcomes: Vec<SeedOutcome>,
}

fn diverged_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Diverged { iteration }) => {
            log::warn!("training diverged at iteration {iteration}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Trains both arms for every (ε, seed) and aggregates in ascending seed
/// order.
pub fn compute_epsilon_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let loaded = load_data(cfg)?;
    let trials = cfg
        .sorted_seeds()
        .into_iter()
        .map(|s| prepare_trial(cfg, loaded.as_ref(), s, true))
        .collect::<Result<Vec<_>>>()?;
    let n = trials[0].train.len();

    cfg.epsilon_grid
        .iter()
        .map(|&epsilon| {
            let budget = cfg.budget_for(epsilon, n)?;
            let mut outcomes = Vec::with_capacity(trials.len());
            let mut n_failed = 0;
            for trial in &trials {
                let plain = diverged_as_none(train_arm(cfg, trial, &budget, false))?;
                let pre = diverged_as_none(train_arm(cfg, trial, &budget, true))?;
                match (plain, pre) {
                    (Some((p, _)), Some((q, _))) => outcomes.push(SeedOutcome {
                        seed: trial.seed,
                        plain: accuracy(&p, &trial.eval, cfg.threshold)?,
                        pretrained: accuracy(&q, &trial.eval, cfg.threshold)?,
                    }),
                    _ => n_failed += 1,
                }
            }
            let plain: Vec<f64> = outcomes.iter().map(|o| o.plain).collect();
            let pre: Vec<f64> = outcomes.iter().map(|o| o.pretrained).collect();
            let diff: Vec<f64> = outcomes.iter().map(SeedOutcome::enhancement).collect();
            let (mp, mq) = (mean(&plain), mean(&pre));
            Ok(SweepRow {
                epsilon,
                sigma: budget.sigma(),
                per_iter: budget.per_iter(),
                guarantee: budget.guarantee(cfg.clipping_mode),
                mean_accuracy_no_pretrain: mp,
                se_no_pretrain: std_error(&plain),
                mean_accuracy_pretrain: mq,
                se_pretrain: std_error(&pre),
                enhancement: mq - mp,
                se_enhancement: std_error(&diff),
                n_seeds: outcomes.len(),
                n_failed,
                outcomes,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    artifact: &'a str,
    accuracy_on: Option<&'a str>,
    /// The configuration minus `output_dir`, so sidecars do not depend on
    /// where they were written.
    config: Option<serde_json::Value>,
    seeds: Option<Vec<u64>>,
    details: T,
}

fn write_sidecar<T: Serialize>(
    csv_path: &Path,
    cfg: Option<&ExperimentConfig>,
    details: T,
) -> Result<()> {
    let artifact = csv_path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let sidecar = Sidecar {
        tool: "dplr",
        version: VERSION,
        artifact,
        accuracy_on: cfg.map(ExperimentConfig::accuracy_on),
        config: cfg.map(config_without_location).transpose()?,
        seeds: cfg.map(ExperimentConfig::sorted_seeds),
        details,
    };
    let mut w = BufWriter::new(File::create(csv_path.with_extension("json"))?);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn config_without_location(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(v)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Serialize)]
struct SweepRowMeta {
    epsilon: Epsilon,
    sigma: f64,
    per_iter: Option<PrivacyPair>,
    guarantee: Option<PrivacyPair>,
    se_enhancement: f64,
    n_failed: usize,
}

/// Writes `sweep.csv` and `sweep.json` into `dir`.
pub fn write_epsilon_sweep(
    rows: &[SweepRow],
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<PathBuf> {
    let path = dir.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "epsilon",
        "acc_plain_mean",
        "acc_plain_se",
        "acc_pre_mean",
        "acc_pre_se",
        "enhancement",
        "n_seeds",
    ])?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.mean_accuracy_no_pretrain.to_string(),
            r.se_no_pretrain.to_string(),
            r.mean_accuracy_pretrain.to_string(),
            r.se_pretrain.to_string(),
            r.enhancement.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    let meta: Vec<SweepRowMeta> = rows
        .iter()
        .map(|r| SweepRowMeta {
            epsilon: r.epsilon,
            sigma: r.sigma,
            per_iter: r.per_iter,
            guarantee: r.guarantee,
            se_enhancement: r.se_enhancement,
            n_failed: r.n_failed,
        })
        .collect();
    write_sidecar(&path, Some(cfg), meta)?;
    Ok(path)
}

/// Computes the ε sweep and writes it under `cfg.output_dir`.
pub fn run_epsilon_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rows = compute_epsilon_sweep(cfg)?;
    write_epsilon_sweep(&rows, cfg, &cfg.output_dir)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub mean_accuracy: f64,
    pub se: f64,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub accuracies: Vec<f64>,
}

/// Trains at each explicit σ (no calibration). Starts from the public fit
/// when `cfg.pretrain` is set.
pub fn compute_sigma_sweep(cfg: &ExperimentConfig) -> Result<Vec<SigmaRow>> {
    cfg.validate()?;
    cfg.validate_sigma_grid()?;
    let loaded = load_data(cfg)?;
    let trials = cfg
        .sorted_seeds()
        .into_iter()
        .map(|s| prepare_trial(cfg, loaded.as_ref(), s, cfg.pretrain))
        .collect::<Result<Vec<_>>>()?;
    cfg.sigma_grid
        .iter()
        .map(|&sigma| {
            let budget = PrivacyBudget::explicit_sigma(sigma, cfg.iterations)?;
            let mut accuracies = Vec::with_capacity(trials.len());
            let mut n_failed = 0;
            for trial in &trials {
                match diverged_as_none(train_arm(cfg, trial, &budget, cfg.pretrain))? {
                    Some((p, _)) => accuracies.push(accuracy(&p, &trial.eval, cfg.threshold)?),
                    None => n_failed += 1,
                }
            }
            Ok(SigmaRow {
                sigma,
                mean_accuracy: mean(&accuracies),
                se: std_error(&accuracies),
                n_seeds: accuracies.len(),
                n_failed,
                accuracies,
            })
        })
        .collect()
}

/// Writes `sigma_sweep.csv` and `sigma_sweep.json` into `dir`.
pub fn write_sigma_sweep(rows: &[SigmaRow], cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("sigma_sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["sigma", "mean_accuracy", "se", "n_seeds"])?;
    for r in rows {
        w.write_record([
            r.sigma.to_string(),
            r.mean_accuracy.to_string(),
            r.se.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    let failed: Vec<(f64, usize)> = rows.iter().map(|r| (r.sigma, r.n_failed)).collect();
    write_sidecar(
        &path,
        Some(cfg),
        serde_json::json!({ "pretrain": cfg.pretrain, "failed_per_sigma": failed }),
    )?;
    Ok(path)
}

pub fn run_sigma_sweep(cfg: &ExperimentConfig) -> Result<Vec<SigmaRow>> {
    let rows = compute_sigma_sweep(cfg)?;
    write_sigma_sweep(&rows, cfg, &cfg.output_dir)?;
    Ok(rows)
}

/// What a single `train` invocation produces; the input of the trace and
/// boundary exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub seed: u64,
    pub epsilon: Option<Epsilon>,
    pub budget: PrivacyBudget,
    pub guarantee: Option<PrivacyPair>,
    pub pretrained: bool,
    pub params: ModelParams,
    pub accuracy: f64,
    pub accuracy_on: String,
    pub pretrain_trace: Option<TrainTrace>,
    pub trace: TrainTrace,
    pub config: ExperimentConfig,
}

impl RunRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// Noise level of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Epsilon(Epsilon),
    Sigma(f64),
}

/// One training run for `seed`, pre-trained when `cfg.pretrain` is set.
pub fn train_single(
    cfg: &ExperimentConfig,
    seed: u64,
    level: NoiseLevel,
) -> Result<(RunRecord, Trial)> {
    cfg.validate()?;
    let loaded = load_data(cfg)?;
    let trial = prepare_trial(cfg, loaded.as_ref(), seed, cfg.pretrain)?;
    let (epsilon, budget) = match level {
        NoiseLevel::Epsilon(e) => (Some(e), cfg.budget_for(e, trial.train.len())?),
        NoiseLevel::Sigma(s) => (None, PrivacyBudget::explicit_sigma(s, cfg.iterations)?),
    };
    let (params, trace) = train_arm(cfg, &trial, &budget, cfg.pretrain)?;
    let record = RunRecord {
        version: VERSION.to_string(),
        seed,
        epsilon,
        guarantee: budget.guarantee(cfg.clipping_mode),
        budget,
        pretrained: cfg.pretrain,
        accuracy: accuracy(&params, &trial.eval, cfg.threshold)?,
        accuracy_on: cfg.accuracy_on().to_string(),
        params,
        pretrain_trace: trial.pretrained.as_ref().map(|(_, t)| t.clone()),
        trace,
        config: cfg.clone(),
    };
    Ok((record, trial))
}

/// Writes `trace_<tag>.csv` (`iteration,loss`, row 0 is the initial loss)
/// and its sidecar.
pub fn export_loss_trace(
    trace: &TrainTrace,
    tag: &str,
    dir: &Path,
    provenance: &serde_json::Value,
) -> Result<PathBuf> {
    if trace.losses.is_empty() {
        return Err(Error::MissingTrace);
    }
    let path = dir.join(format!("trace_{tag}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["iteration", "loss"])?;
    for (i, l) in trace.losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    write_sidecar(&path, None, provenance)?;
    Ok(path)
}

/// The line `w·x + β = 0` clipped to the data bounding box, plus a labelled
/// probability grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryExport {
    /// `None` when `w = 0` and the boundary is empty or the whole plane.
    pub endpoints: Option<[[f64; 2]; 2]>,
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: [f64; 2],
    pub proba: f64,
    pub label: u8,
}

/// Boundary endpoints and a `resolution × resolution` grid over the data
/// bounding box padded by 10% on each side.
///
/// The endpoints solve the line equation along whichever axis has the larger
/// weight magnitude, evaluated at the two extremes of the other axis; this
/// keeps the division well conditioned and always yields two points.
pub fn decision_boundary(
    params: &ModelParams,
    data: &Dataset,
    resolution: usize,
    threshold: f64,
) -> Result<BoundaryExport> {
    if data.dim() != 2 {
        return Err(Error::UnsupportedDimension(data.dim()));
    }
    crate::error::check_dim(2, params.dim())?;
    crate::logreg::check_threshold(threshold)?;
    if resolution == 0 {
        return Err(Error::InvalidConfig(
            "grid resolution must be positive".into(),
        ));
    }
    let bounds = data.bounds();
    let (w1, w2, b) = (params.weights[0], params.weights[1], params.intercept);

    let endpoints = if w1 == 0.0 && w2 == 0.0 {
        None
    } else if w2.abs() >= w1.abs() {
        let (lo, hi) = bounds[0];
        Some([[lo, -(b + w1 * lo) / w2], [hi, -(b + w1 * hi) / w2]])
    } else {
        let (lo, hi) = bounds[1];
        Some([[-(b + w2 * lo) / w1, lo], [-(b + w2 * hi) / w1, hi]])
    };

    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let pad = if hi > lo { 0.1 * (hi - lo) } else { 0.5 };
        let (lo, hi) = (lo - pad, hi + pad);
        if resolution == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..resolution)
                .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
                .collect()
        }
    };
    let (xs, ys) = (axis(bounds[0]), axis(bounds[1]));
    let mut grid = Vec::with_capacity(resolution * resolution);
    for &y in &ys {
        for &x in &xs {
            let proba = predict_proba(params, &[x, y])?;
            grid.push(GridPoint {
                x: [x, y],
                proba,
                label: u8::from(proba >= threshold),
            });
        }
    }
    Ok(BoundaryExport { endpoints, grid })
}

/// Writes `boundary.csv` (`point,x1,x2`; rows `start`/`end`, or a single
/// `degenerate,nan,nan` row when `w = 0`) and `grid.csv`
/// (`x1,x2,proba,label`), each with a sidecar.
pub fn export_decision_boundary(
    params: &ModelParams,
    data: &Dataset,
    resolution: usize,
    threshold: f64,
    dir: &Path,
    provenance: &serde_json::Value,
) -> Result<BoundaryExport> {
    let export = decision_boundary(params, data, resolution, threshold)?;

    let bpath = dir.join("boundary.csv");
    let mut w = csv_writer(&bpath)?;
    w.write_record(["point", "x1", "x2"])?;
    match export.endpoints {
        Some([a, b]) => {
            w.write_record(["start".to_string(), a[0].to_string(), a[1].to_string()])?;
            w.write_record(["end".to_string(), b[0].to_string(), b[1].to_string()])?;
        }
        None => w.write_record(["degenerate", "nan", "nan"])?,
    }
    w.flush()?;
    let meta = serde_json::json!({ "params": params, "degenerate": export.endpoints.is_none(), "run": provenance });
    write_sidecar(&bpath, None, &meta)?;

    let gpath = dir.join("grid.csv");
    let mut w = csv_writer(&gpath)?;
    w.write_record(["x1", "x2", "proba", "label"])?;
    for p in &export.grid {
        w.write_record([
            p.x[0].to_string(),
            p.x[1].to_string(),
            p.proba.to_string(),
            p.label.to_string(),
        ])?;
    }
    w.flush()?;
    let meta = serde_json::json!({ "params": params, "resolution": resolution, "threshold": threshold, "run": provenance });
    write_sidecar(&gpath, None, &meta)?;
    Ok(export)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            epsilon_grid: vec![Epsilon::Finite(1.0), Epsilon::NoPrivacy],
            seeds: vec![3, 1, 2],
            iterations: 20,
            pretrain_iterations: 20,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn epsilon_parsing() {
        assert_eq!("inf".parse::<Epsilon>().unwrap(), Epsilon::NoPrivacy);
        assert_eq!("0.5".parse::<Epsilon>().unwrap(), Epsilon::Finite(0.5));
        assert!("0".parse::<Epsilon>().is_err());
        assert!("-1".parse::<Epsilon>().is_err());
        let v: Vec<Epsilon> = serde_json::from_str("[0.1, \"inf\"]").unwrap();
        assert_eq!(v, vec![Epsilon::Finite(0.1), Epsilon::NoPrivacy]);
        assert_eq!(serde_json::to_string(&v).unwrap(), "[0.1,\"inf\"]");
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut c = ExperimentConfig {
            epsilon_grid: vec![Epsilon::Finite(1.0), Epsilon::Finite(0.5)],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.epsilon_grid = vec![Epsilon::NoPrivacy, Epsilon::Finite(0.5)];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig {
            seeds: vec![1, 1],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.seeds = vec![];
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_json_is_default() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(serde_json::from_str::<ExperimentConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn sweep_rows_are_consistent() {
        let rows = compute_epsilon_sweep(&small_cfg()).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.n_seeds, 3);
            assert_eq!(
                r.enhancement,
                r.mean_accuracy_pretrain - r.mean_accuracy_no_pretrain
            );
            assert_eq!(
                r.outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(),
                vec![1, 2, 3]
            );
        }
        assert_eq!(rows[1].sigma, 0.0);
        assert!(rows[0].sigma > 0.0);
        assert!(rows[0].guarantee.is_some());
    }

    #[test]
    fn seed_order_does_not_matter() {
        let a = compute_epsilon_sweep(&small_cfg()).unwrap();
        let mut cfg = small_cfg();
        cfg.seeds = vec![2, 3, 1];
        assert_eq!(a, compute_epsilon_sweep(&cfg).unwrap());
    }

    #[test]
    fn boundary_of_vertical_line() {
        let data = Dataset::new(vec![vec![-1.0, -2.0], vec![1.0, 3.0]], vec![0, 1], "x").unwrap();
        let e = decision_boundary(&ModelParams::new(vec![1.0, 0.0], 0.0), &data, 5, 0.5).unwrap();
        let [a, b] = e.endpoints.unwrap();
        assert_eq!(a, [0.0, -2.0]);
        assert_eq!(b, [0.0, 3.0]);
        assert_eq!(e.grid.len(), 25);
    }

    #[test]
    fn boundary_degenerate_and_dimension() {
        let data = Dataset::new(vec![vec![-1.0, -2.0], vec![1.0, 3.0]], vec![0, 1], "x").unwrap();
        let e = decision_boundary(&ModelParams::new(vec![0.0, 0.0], 1.0), &data, 3, 0.5).unwrap();
        assert!(e.endpoints.is_none());
        let d3 = Dataset::new(vec![vec![0.0, 0.0, 0.0]], vec![0], "x").unwrap();
        assert!(matches!(
            decision_boundary(&ModelParams::zeros(3), &d3, 3, 0.5),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn empty_trace_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = export_loss_trace(
            &TrainTrace::default(),
            "x",
            dir.path(),
            &serde_json::Value::Null,
        );
        assert!(matches!(r, Err(Error::MissingTrace)));
    }
}
