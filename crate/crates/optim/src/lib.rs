//! NoisySGD and NoisyAdam at desk scale: Poisson subsampling, per-example
//! clipping to norm R and Gaussian noise of scale σR on the clipped sum.
//!
//! Runs are deterministic for a fixed seed. Every step draws its subsample
//! and its noise from its own generator stream, and per-example gradients
//! are reduced in index order whatever the thread count.

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod train;

pub use config::{Algorithm, LearningRate, TrainConfig};
pub use data::Dataset;
pub use error::{OptimError, Result};
pub use loss::{Logistic, Loss, Quadratic};
pub use train::{
    adam_update, clip, noisy_adam_step, noisy_gradient, noisy_sgd_step, poisson_subsample, run,
    step_rngs, OptimizerState, TrainOutcome,
};
