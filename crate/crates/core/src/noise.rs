//! Gaussian mechanism, noise calibration and sensitivity bounds.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngState;

/// An (ε, δ) pair with ε > 0 and δ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyPair {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyPair {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidBudget(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidBudget(format!(
                "delta must lie in [0, 1], got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Standard deviation and dimension of an additive Gaussian noise vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianNoiseSpec {
    pub sigma: f64,
    pub dim: usize,
}

impl GaussianNoiseSpec {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        Ok(Self { sigma, dim })
    }
}

/// Where the clip is applied when computing a training gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClippingMode {
    /// Clip the full mean gradient once per iteration.
    Aggregate,
    /// Clip every per-example gradient, then average.
    #[default]
    PerExampleMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighboringModel {
    /// Neighbors differ by replacing one record.
    #[default]
    ReplaceOne,
}

/// An upper bound on the ℓ₂ global sensitivity of a clipped gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    pub value: f64,
    pub neighboring_model: NeighboringModel,
    pub clipping_mode: ClippingMode,
}

/// Draws `k` independent N(0, 1) values.
pub fn sample_standard_normal(rng: &mut RngState, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::EmptyDimension);
    }
    Ok((0..k).map(|_| rng.standard_normal()).collect())
}

/// Per-iteration noise scale for clipped-gradient descent over `n` records:
/// `σ = 2C / (n ε′) · √(2 ln(1.25 / δ′))`.
///
/// This is the Gaussian-mechanism scale for sensitivity `2C / n`, i.e. the
/// per-example-mean clipping bound.
pub fn calibrate_sigma(clip: f64, n: usize, eps_iter: f64, delta_iter: f64) -> Result<f64> {
    if !(clip.is_finite() && clip > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "clip threshold must be positive, got {clip}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_calibration_budget(eps_iter, delta_iter)?;
    Ok(2.0 * clip / (n as f64 * eps_iter) * (2.0 * (1.25 / delta_iter).ln()).sqrt())
}

/// Noise scale of the classical Gaussian mechanism for an ℓ₂ sensitivity:
/// `σ² = 2 ln(1.25/δ) Δ² / ε²`.
pub fn gaussian_sigma(sensitivity: f64, budget: PrivacyPair) -> Result<f64> {
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sensitivity must be >= 0, got {sensitivity}"
        )));
    }
    check_calibration_budget(budget.epsilon, budget.delta)?;
    Ok(sensitivity * (2.0 * (1.25 / budget.delta).ln()).sqrt() / budget.epsilon)
}

fn check_calibration_budget(eps: f64, delta: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidBudget(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidBudget(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// `value + σ·z` with `z ~ N(0, I_k)`. With σ = 0 the input is returned
/// unchanged and the generator is not advanced.
pub fn gaussian_mechanism(
    value: &[f64],
    spec: GaussianNoiseSpec,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    check_dim(spec.dim, value.len())?;
    if spec.sigma == 0.0 {
        return Ok(value.to_vec());
    }
    Ok(value
        .iter()
        .map(|v| v + spec.sigma * rng.standard_normal())
        .collect())
}

/// ℓ₂ sensitivity of the clipped training gradient under replace-one
/// neighbors. Aggregate clipping bounds each full gradient by `C`, so two
/// neighbors differ by at most `2C`. Per-example clipping changes one of `n`
/// averaged terms, so the mean moves by at most `2C / n`.
pub fn clipped_gradient_sensitivity(
    clip: f64,
    n: usize,
    mode: ClippingMode,
) -> Result<SensitivityBound> {
    if !(clip.is_finite() && clip > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "clip threshold must be positive, got {clip}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let value = match mode {
        ClippingMode::Aggregate => 2.0 * clip,
        ClippingMode::PerExampleMean => 2.0 * clip / n as f64,
    };
    Ok(SensitivityBound {
        value,
        neighboring_model: NeighboringModel::ReplaceOne,
        clipping_mode: mode,
    })
}

/// Outcome of [`empirical_dp_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpCheckReport {
    /// Largest observed `P̂(S | x) − e^ε P̂(S | x′) − δ` over the tested
    /// events and both orderings.
    pub max_violation: f64,
    /// Threshold at which `max_violation` was attained.
    pub worst_threshold: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Monte Carlo check of `Pr[M(x) ∈ S] ≤ e^ε Pr[M(x′) ∈ S] + δ` for scalar
/// mechanism outputs.
///
/// The events are the half-lines `(−∞, t]` and `(t, ∞)` for
/// `num_thresholds` evenly spaced `t` over the pooled sample range, tested in
/// both dataset orderings. The run passes when the worst violation is at most
/// `3 √(ln K / min(n₁, n₂))`. That slack is a heuristic union-bound allowance
/// for sampling error across `K` events, not a certified test: a pass is
/// evidence, never a proof.
pub fn empirical_dp_check(
    samples_x: &[f64],
    samples_x_prime: &[f64],
    budget: PrivacyPair,
    num_thresholds: usize,
) -> Result<DpCheckReport> {
    if samples_x.is_empty() || samples_x_prime.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if num_thresholds == 0 {
        return Err(Error::InvalidConfig(
            "num_thresholds must be positive".into(),
        ));
    }
    let sorted = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let a = sorted(samples_x);
    let b = sorted(samples_x_prime);
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);

    let cdf = |s: &[f64], t: f64| s.partition_point(|&v| v <= t) as f64 / s.len() as f64;
    let e_eps = budget.epsilon.exp();

    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_threshold = lo;
    for k in 0..num_thresholds {
        let t = if num_thresholds == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (num_thresholds - 1) as f64
        };
        let (pa, pb) = (cdf(&a, t), cdf(&b, t));
        for (p1, p2) in [
            (pa, pb),
            (pb, pa),
            (1.0 - pa, 1.0 - pb),
            (1.0 - pb, 1.0 - pa),
        ] {
            let v = p1 - e_eps * p2 - budget.delta;
            if v > max_violation {
                max_violation = v;
                worst_threshold = t;
            }
        }
    }
    let slack = 3.0 * ((num_thresholds as f64).ln() / a.len().min(b.len()) as f64).sqrt();
    Ok(DpCheckReport {
        max_violation,
        worst_threshold,
        slack,
        passed: max_violation <= slack,
    })
}
