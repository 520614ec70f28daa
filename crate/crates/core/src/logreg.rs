//! Binary logistic regression trained by full-batch gradient descent.
//!
//! Training works on the augmented parameter vector `θ = (w₁, …, w_d, β)`;
//! the intercept is coordinate `d` so clipping and noise treat it like any
//! other weight.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};

/// Lower/upper clamp applied to probabilities inside [`log_loss`].
pub const PROBA_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl ModelParams {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        Self { weights, intercept }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            intercept: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `(w₁, …, w_d, β)`.
    pub fn to_augmented(&self) -> Vec<f64> {
        let mut theta = self.weights.clone();
        theta.push(self.intercept);
        theta
    }

    pub fn from_augmented(theta: &[f64]) -> Self {
        let (w, b) = theta.split_at(theta.len() - 1);
        Self {
            weights: w.to_vec(),
            intercept: b[0],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// `w·x + β`.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(dot(&self.weights, x) + self.intercept)
    }
}

/// Starting point of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    Zeros,
    Given(ModelParams),
}

impl Init {
    pub(crate) fn materialize(&self, dim: usize) -> Result<ModelParams> {
        match self {
            Init::Zeros => Ok(ModelParams::zeros(dim)),
            Init::Given(p) => {
                check_dim(dim, p.dim())?;
                if !p.is_finite() {
                    return Err(Error::InvalidConfig(
                        "initial parameters must be finite".into(),
                    ));
                }
                Ok(p.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate.
    pub alpha: f64,
    pub iterations: usize,
    #[serde(default)]
    pub init: Init,
    /// Keep the parameters after every iteration in the trace.
    #[serde(default)]
    pub record_snapshots: bool,
}

impl TrainConfig {
    pub fn new(alpha: f64, iterations: usize) -> Self {
        Self {
            alpha,
            iterations,
            init: Init::Zeros,
            record_snapshots: false,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.record_snapshots = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss curve of a run: `losses[0]` is the loss at the initial parameters,
/// `losses[t]` the loss after update `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    /// `snapshots[t]` pairs with `losses[t]` when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<ModelParams>>,
}

impl TrainTrace {
    pub(crate) fn start(initial_loss: f64, initial: &ModelParams, record: bool) -> Self {
        Self {
            losses: vec![initial_loss],
            snapshots: record.then(|| vec![initial.clone()]),
        }
    }

    pub(crate) fn push(&mut self, loss: f64, theta: &[f64]) {
        self.losses.push(loss);
        if let Some(s) = self.snapshots.as_mut() {
            s.push(ModelParams::from_augmented(theta));
        }
    }

    pub fn iterations(&self) -> usize {
        self.losses.len().saturating_sub(1)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 / (1 + e^{−z})`, evaluated without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_proba(params: &ModelParams, x: &[f64]) -> Result<f64> {
    params.logit(x).map(sigmoid)
}

/// Label 1 when the predicted probability is at least `threshold`; an exact
/// tie goes to class 1.
pub fn classify(params: &ModelParams, x: &[f64], threshold: f64) -> Result<u8> {
    check_threshold(threshold)?;
    Ok(u8::from(predict_proba(params, x)? >= threshold))
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn log_loss(params: &ModelParams, data: &Dataset) -> Result<f64> {
    check_dim(data.dim(), params.dim())?;
    Ok(loss_augmented(&params.to_augmented(), data))
}

pub(crate) fn loss_augmented(theta: &[f64], data: &Dataset) -> f64 {
    let d = data.dim();
    // −ln σ(±z) as softplus(∓z), bounded to the same range the probability
    // clamp gives. Going through p directly would lose every digit of
    // ln(1 − p) once p rounds close to 1.
    let (lo, hi) = (-(-PROBA_CLAMP).ln_1p(), -PROBA_CLAMP.ln());
    let total: f64 = data
        .iter()
        .map(|(x, y)| {
            let z = dot(&theta[..d], x) + theta[d];
            let term = if y == 1 { softplus(-z) } else { softplus(z) };
            term.clamp(lo, hi)
        })
        .sum();
    total / data.len() as f64
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Gradient of one cross-entropy term: `((p − y)·x, p − y)`.
pub fn per_example_gradient(params: &ModelParams, x: &[f64], y: u8) -> Result<Vec<f64>> {
    check_dim(params.dim(), x.len())?;
    let mut out = vec![0.0; x.len() + 1];
    example_gradient_into(&params.to_augmented(), x, y, &mut out);
    Ok(out)
}

pub(crate) fn example_gradient_into(theta: &[f64], x: &[f64], y: u8, out: &mut [f64]) {
    let d = x.len();
    let residual = sigmoid(dot(&theta[..d], x) + theta[d]) - f64::from(y);
    for (o, xi) in out[..d].iter_mut().zip(x) {
        *o = residual * xi;
    }
    out[d] = residual;
}

/// Mean of the per-example gradients over the dataset.
pub fn loss_gradient(params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dim(data.dim(), params.dim())?;
    Ok(mean_gradient(&params.to_augmented(), data, |_| {}))
}

/// Averages per-example gradients after passing each through `per_example`.
/// Summation runs in row order, so every caller with an identity hook
/// produces bit-identical results.
pub(crate) fn mean_gradient(
    theta: &[f64],
    data: &Dataset,
    mut per_example: impl FnMut(&mut [f64]),
) -> Vec<f64> {
    let mut sum = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    for (x, y) in data.iter() {
        example_gradient_into(theta, x, y, &mut g);
        per_example(&mut g);
        for (s, gi) in sum.iter_mut().zip(&g) {
            *s += gi;
        }
    }
    let m = data.len() as f64;
    sum.iter_mut().for_each(|s| *s /= m);
    sum
}

/// `θ ← θ − α·g`, then the finiteness check shared by both trainers.
pub(crate) fn descend(theta: &mut [f64], step: &[f64], alpha: f64, iteration: usize) -> Result<()> {
    for (t, g) in theta.iter_mut().zip(step) {
        *t -= alpha * g;
    }
    if theta.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

/// Plain full-batch gradient descent for exactly `config.iterations` steps.
pub fn gradient_descent(data: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    config.validate()?;
    let init = config.init.materialize(data.dim())?;
    let mut theta = init.to_augmented();
    let mut trace = TrainTrace::start(loss_augmented(&theta, data), &init, config.record_snapshots);
    for t in 1..=config.iterations {
        let g = mean_gradient(&theta, data, |_| {});
        descend(&mut theta, &g, config.alpha, t)?;
        let loss = loss_augmented(&theta, data);
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        trace.push(loss, &theta);
    }
    Ok((ModelParams::from_augmented(&theta), trace))
}
