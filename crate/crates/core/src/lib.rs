//! Differentially private binary logistic regression.
//!
//! The crate trains a logistic regression model with full-batch noisy
//! gradient descent: every iteration clips the gradient to an ℓ₂ ball of
//! radius `C`, perturbs it with Gaussian noise calibrated to a per-iteration
//! `(ε′, δ′)` budget and steps the parameters. An optional pre-training phase
//! runs plain gradient descent on public data and hands its parameters to
//! the private phase as the starting point.
//!
//! Module map:
//!
//! - [`rng`]: seedable ChaCha8 streams and the Gaussian sampler.
//! - [`noise`]: Gaussian mechanism, σ calibration, sensitivity bounds and an
//!   empirical check of the (ε, δ) inequality.
//! - [`logreg`]: sigmoid model, log-loss, analytic gradients, plain GD.
//! - [`dp_train`]: budget splitting, clipping, noisy GD and pre-train/fine-tune.
//! - [`data`]: datasets, CSV persistence, synthetic blobs, accuracy.
//! - [`experiments`]: ε and σ sweeps plus trace/boundary exports.

pub mod data;
pub mod dp_train;
pub mod error;
pub mod experiments;
pub mod logreg;
pub mod noise;
pub mod rng;
pub mod stats;

pub use data::{accuracy, Dataset, SyntheticSpec};
pub use dp_train::{
    clip_gradient, noisy_gradient_descent, pretrain_finetune, split_budget, Accounting,
    ClipThreshold, DpTrainConfig, PrivacyBudget,
};
pub use error::{Error, Result};
pub use logreg::{gradient_descent, Init, ModelParams, TrainConfig, TrainTrace};
pub use noise::{ClippingMode, GaussianNoiseSpec, PrivacyPair, SensitivityBound};
pub use rng::RngState;

/// Version tag written into every metadata sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
