//! Differentially private training.
//!
//! [`noisy_gradient_descent`] runs full-batch gradient descent where every
//! iteration clips the gradient to norm `C`, adds `N(0, σ²)` to each of the
//! `d + 1` augmented coordinates (the intercept included) and steps by `−α`.
//! [`pretrain_finetune`] first fits the model on public data without noise
//! and starts the private phase from those parameters.
//!
//! Privacy guarantees only cover the released parameters. The loss traces are
//! computed on the private data without noise and are a debugging artifact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::logreg::{
    descend, loss_augmented, mean_gradient, Init, ModelParams, TrainConfig, TrainTrace,
};
use crate::noise::{calibrate_sigma, ClippingMode, PrivacyPair};
use crate::rng::RngState;

/// How a run-level budget maps onto iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    /// Basic composition: every iteration spends `(ε/T, δ/T)`.
    #[default]
    Basic,
    /// Every iteration spends the full `(ε, δ)`; the run as a whole is
    /// `(Tε, Tδ)`-DP.
    PerIteration,
}

impl fmt::Display for Accounting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Accounting::Basic => "basic",
            Accounting::PerIteration => "per-iteration",
        })
    }
}

/// Per-iteration budget under `accounting`.
pub fn split_budget(
    total: PrivacyPair,
    iterations: usize,
    accounting: Accounting,
) -> Result<PrivacyPair> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be at least 1".into()));
    }
    let total = PrivacyPair::new(total.epsilon, total.delta)?;
    Ok(match accounting {
        Accounting::Basic => {
            let t = iterations as f64;
            PrivacyPair {
                epsilon: total.epsilon / t,
                delta: total.delta / t,
            }
        }
        Accounting::PerIteration => total,
    })
}

/// Clip threshold `C`, or the sentinel that turns clipping off.
///
/// In JSON this is either a positive number or the string `"disabled"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClipRepr", into = "ClipRepr")]
pub enum ClipThreshold {
    Finite(f64),
    Disabled,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClipRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<ClipRepr> for ClipThreshold {
    type Error = String;

    fn try_from(r: ClipRepr) -> std::result::Result<Self, String> {
        match r {
            ClipRepr::Number(c) if c.is_finite() && c > 0.0 => Ok(ClipThreshold::Finite(c)),
            ClipRepr::Number(c) => Err(format!("clip threshold must be positive, got {c}")),
            ClipRepr::Word(w) if w == "disabled" => Ok(ClipThreshold::Disabled),
            ClipRepr::Word(w) => Err(format!("expected a number or \"disabled\", got {w:?}")),
        }
    }
}

impl From<ClipThreshold> for ClipRepr {
    fn from(c: ClipThreshold) -> Self {
        match c {
            ClipThreshold::Finite(v) => ClipRepr::Number(v),
            ClipThreshold::Disabled => ClipRepr::Word("disabled".into()),
        }
    }
}

impl std::str::FromStr for ClipThreshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "disabled" {
            return Ok(ClipThreshold::Disabled);
        }
        match s.parse::<f64>() {
            Ok(c) if c.is_finite() && c > 0.0 => Ok(ClipThreshold::Finite(c)),
            _ => Err(Error::InvalidConfig(format!(
                "clip threshold must be positive or \"disabled\", got {s:?}"
            ))),
        }
    }
}

impl ClipThreshold {
    pub fn value(self) -> Option<f64> {
        match self {
            ClipThreshold::Finite(c) => Some(c),
            ClipThreshold::Disabled => None,
        }
    }

    fn apply(self, g: &mut [f64]) {
        if let ClipThreshold::Finite(c) = self {
            clip_in_place(g, c);
        }
    }
}

/// `g / max(1, ‖g‖₂ / C)`. Vectors inside the ball come back bit-identical;
/// the result always satisfies `‖·‖₂ ≤ C` as computed in `f64`.
pub fn clip_gradient(g: &[f64], clip: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, clip);
    out
}

fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn clip_in_place(g: &mut [f64], clip: f64) {
    debug_assert!(clip > 0.0);
    let norm = l2_norm(g);
    if norm <= clip {
        return;
    }
    let original = g.to_vec();
    let mut divisor = norm / clip;
    loop {
        for (o, v) in g.iter_mut().zip(&original) {
            *o = v / divisor;
        }
        // rounding can leave the rescaled norm one ulp above C
        if l2_norm(g) <= clip {
            break;
        }
        divisor *= 1.0 + f64::EPSILON;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpTrainConfig {
    pub base: TrainConfig,
    pub clip: ClipThreshold,
    #[serde(default)]
    pub clipping_mode: ClippingMode,
}

impl DpTrainConfig {
    pub fn new(base: TrainConfig, clip: ClipThreshold, clipping_mode: ClippingMode) -> Self {
        Self {
            base,
            clip,
            clipping_mode,
        }
    }
}

/// Where the noise scale of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum BudgetSource {
    /// σ derived from a run-level `(ε, δ)` for a specific `C` and `n`.
    Calibrated {
        total: PrivacyPair,
        accounting: Accounting,
        per_iter: PrivacyPair,
        clip: f64,
        n: usize,
    },
    /// σ given directly; no (ε, δ) claim is made.
    ExplicitSigma,
    /// σ = 0; no privacy.
    NoPrivacy,
}

/// Noise scale for a training run together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    iterations: usize,
    sigma: f64,
    source: BudgetSource,
}

impl PrivacyBudget {
    /// Splits `total` over `iterations` and calibrates σ for clip `clip` on
    /// `n` private records.
    pub fn calibrated(
        total: PrivacyPair,
        iterations: usize,
        accounting: Accounting,
        clip: ClipThreshold,
        n: usize,
    ) -> Result<Self> {
        let clip = clip.value().ok_or_else(|| {
            Error::InvalidConfig("a calibrated budget needs a finite clip threshold".into())
        })?;
        let per_iter = split_budget(total, iterations, accounting)?;
        let sigma = calibrate_sigma(clip, n, per_iter.epsilon, per_iter.delta)?;
        if n > 0 && total.delta >= 1.0 / n as f64 {
            log::warn!(
                "delta {} is not below 1/n = {}",
                total.delta,
                1.0 / n as f64
            );
        }
        Ok(Self {
            iterations,
            sigma,
            source: BudgetSource::Calibrated {
                total,
                accounting,
                per_iter,
                clip,
                n,
            },
        })
    }

    pub fn explicit_sigma(sigma: f64, iterations: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            iterations,
            sigma,
            source: BudgetSource::ExplicitSigma,
        })
    }

    pub fn no_privacy(iterations: usize) -> Self {
        Self {
            iterations,
            sigma: 0.0,
            source: BudgetSource::NoPrivacy,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn source(&self) -> &BudgetSource {
        &self.source
    }

    pub fn per_iter(&self) -> Option<PrivacyPair> {
        match &self.source {
            BudgetSource::Calibrated { per_iter, .. } => Some(*per_iter),
            _ => None,
        }
    }

    /// Run-level `(ε, δ)` by basic composition, when one can be claimed.
    ///
    /// Only per-example-mean clipping has sensitivity `2C/n`, which is what σ
    /// is calibrated for; aggregate clipping returns `None`.
    pub fn guarantee(&self, mode: ClippingMode) -> Option<PrivacyPair> {
        match (&self.source, mode) {
            (BudgetSource::Calibrated { per_iter, .. }, ClippingMode::PerExampleMean) => {
                let t = self.iterations as f64;
                Some(PrivacyPair {
                    epsilon: per_iter.epsilon * t,
                    delta: (per_iter.delta * t).min(1.0),
                })
            }
            _ => None,
        }
    }

    fn check_against(&self, cfg: &DpTrainConfig, n: usize) -> Result<()> {
        if self.iterations != cfg.base.iterations {
            return Err(Error::InvalidBudget(format!(
                "budget is split over {} iterations but the run has {}",
                self.iterations, cfg.base.iterations
            )));
        }
        if let BudgetSource::Calibrated {
            clip, n: budget_n, ..
        } = &self.source
        {
            if cfg.clip != ClipThreshold::Finite(*clip) || *budget_n != n {
                return Err(Error::InvalidBudget(format!(
                    "budget calibrated for C={clip}, n={budget_n}; run has clip {:?}, n={n}",
                    cfg.clip
                )));
            }
        }
        Ok(())
    }
}

/// Noisy full-batch gradient descent.
///
/// Per iteration: gradient at the current parameters, clipped per
/// `cfg.clipping_mode`, plus `σ·z` with `z ~ N(0, I_{d+1})` drawn in
/// coordinate order (nothing is drawn when σ = 0), then `θ ← θ − α g′`.
pub fn noisy_gradient_descent(
    data: &Dataset,
    cfg: &DpTrainConfig,
    budget: &PrivacyBudget,
    rng: &mut RngState,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.base.validate()?;
    budget.check_against(cfg, data.len())?;
    let init = cfg.base.init.materialize(data.dim())?;
    let mut theta = init.to_augmented();
    let mut trace = TrainTrace::start(
        loss_augmented(&theta, data),
        &init,
        cfg.base.record_snapshots,
    );
    let sigma = budget.sigma();

    for t in 1..=cfg.base.iterations {
        let mut g = match cfg.clipping_mode {
            ClippingMode::PerExampleMean => mean_gradient(&theta, data, |gi| cfg.clip.apply(gi)),
            ClippingMode::Aggregate => {
                let mut g = mean_gradient(&theta, data, |_| {});
                cfg.clip.apply(&mut g);
                g
            }
        };
        if sigma > 0.0 {
            for gi in g.iter_mut() {
                *gi += sigma * rng.standard_normal();
            }
        }
        descend(&mut theta, &g, cfg.base.alpha, t)?;
        let loss = loss_augmented(&theta, data);
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        trace.push(loss, &theta);
    }
    Ok((ModelParams::from_augmented(&theta), trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub params: ModelParams,
    pub pretrain: TrainTrace,
    pub finetune: TrainTrace,
}

/// Plain gradient descent on `public`, then noisy gradient descent on
/// `private` starting from the public fit. Only the private phase spends
/// privacy budget.
pub fn pretrain_finetune(
    public: &Dataset,
    private: &Dataset,
    pre_cfg: &TrainConfig,
    fine_cfg: &DpTrainConfig,
    budget: &PrivacyBudget,
    rng: &mut RngState,
) -> Result<PipelineOutput> {
    check_dim(private.dim(), public.dim())?;
    let (pre_params, pretrain) = crate::logreg::gradient_descent(public, pre_cfg)?;
    let fine = DpTrainConfig {
        base: fine_cfg.base.clone().with_init(Init::Given(pre_params)),
        ..fine_cfg.clone()
    };
    let (params, finetune) = noisy_gradient_descent(private, &fine, budget, rng)?;
    Ok(PipelineOutput {
        params,
        pretrain,
        finetune,
    })
}
