use gdp_core::accountant::{clt_report, AccountantQuery, Duration, Sampling, Target};
use gdp_core::PrivacyReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, TrainConfig};
use crate::data::Dataset;
use crate::error::{OptimError, Result};
use crate::loss::Loss;

/// Weights and Adam moments. Both moments start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(theta: Vec<f64>) -> Self {
        let d = theta.len();
        Self {
            theta,
            m: vec![0.0; d],
            u: vec![0.0; d],
            step: 0,
        }
    }
}

/// Independent generators for the subsample and the noise of one step,
/// derived from the seed so that any step can be replayed on its own.
pub fn step_rngs(seed: u64, step: u64) -> (ChaCha20Rng, ChaCha20Rng) {
    let mut sampling = ChaCha20Rng::seed_from_u64(seed);
    sampling.set_stream(2 * step);
    let mut noise = ChaCha20Rng::seed_from_u64(seed);
    noise.set_stream(2 * step + 1);
    (sampling, noise)
}

/// Each index in 0..n independently with probability p, in increasing order.
pub fn poisson_subsample<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<usize> {
    if p >= 1.0 {
        return (0..n).collect();
    }
    (0..n).filter(|_| rng.gen::<f64>() < p).collect()
}

/// Euclidean norm, scaled to stay finite for extreme magnitudes.
pub fn l2_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// v / max{1, ‖v‖/R}; vectors inside the ball are returned untouched.
pub fn clip(v: &[f64], bound: f64) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm <= bound {
        return v.to_vec();
    }
    let mut factor = bound / norm;
    loop {
        let out: Vec<f64> = v.iter().map(|x| x * factor).collect();
        if l2_norm(&out) <= bound {
            return out;
        }
        factor *= 1.0 - f64::EPSILON;
    }
}

/// Σ of clipped per-example gradients over `batch`, summed in batch order.
/// The per-example work runs in parallel.
pub fn clipped_gradient_sum<L: Loss>(
    theta: &[f64],
    batch: &[usize],
    data: &Dataset,
    loss: &L,
    bound: f64,
) -> Vec<f64> {
    let clipped: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&i| clip(&loss.gradient(theta, &data.features[i], data.labels[i]), bound))
        .collect();
    let mut sum = vec![0.0; theta.len()];
    for g in &clipped {
        for (s, x) in sum.iter_mut().zip(g) {
            *s += x;
        }
    }
    sum
}

/// (Σ clipped gradients + σR·N(0, I)) / |batch|, or `None` for an empty
/// batch.
pub fn noisy_gradient<L: Loss, R: Rng + ?Sized>(
    theta: &[f64],
    batch: &[usize],
    data: &Dataset,
    loss: &L,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if batch.is_empty() {
        return None;
    }
    let mut sum = clipped_gradient_sum(theta, batch, data, loss, cfg.clip_norm);
    if cfg.sigma > 0.0 {
        let scale = cfg.sigma * cfg.clip_norm;
        for s in sum.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += scale * z;
        }
    }
    let size = batch.len() as f64;
    Some(sum.into_iter().map(|s| s / size).collect())
}

pub fn sgd_update(state: &OptimizerState, grad: &[f64], eta: f64) -> OptimizerState {
    OptimizerState {
        theta: state.theta.iter().zip(grad).map(|(t, g)| t - eta * g).collect(),
        m: state.m.clone(),
        u: state.u.clone(),
        step: state.step + 1,
    }
}

/// m ← β₁m + (1−β₁)g, u ← β₂u + (1−β₂)g⊙g, θ ← θ − η·m/(√u + ξ).
pub fn adam_update(state: &OptimizerState, grad: &[f64], eta: f64, cfg: &TrainConfig) -> OptimizerState {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let m: Vec<f64> = state.m.iter().zip(grad).map(|(m, g)| b1 * m + (1.0 - b1) * g).collect();
    let u: Vec<f64> = state.u.iter().zip(grad).map(|(u, g)| b2 * u + (1.0 - b2) * g * g).collect();
    let theta = state
        .theta
        .iter()
        .zip(m.iter().zip(&u))
        .map(|(t, (m, u))| t - eta * m / (u.sqrt() + cfg.xi))
        .collect();
    OptimizerState {
        theta,
        m,
        u,
        step: state.step + 1,
    }
}

fn skip(state: &OptimizerState) -> OptimizerState {
    OptimizerState {
        step: state.step + 1,
        ..state.clone()
    }
}

/// One NoisySGD step. An empty batch leaves the weights alone but still
/// counts as a step.
pub fn noisy_sgd_step<L: Loss, R: Rng + ?Sized>(
    state: &OptimizerState,
    batch: &[usize],
    data: &Dataset,
    loss: &L,
    cfg: &TrainConfig,
    rng: &mut R,
) -> OptimizerState {
    match noisy_gradient(&state.theta, batch, data, loss, cfg, rng) {
        Some(g) => sgd_update(state, &g, cfg.eta.at(state.step)),
        None => skip(state),
    }
}

/// One NoisyAdam step, with the same noisy gradient as NoisySGD.
pub fn noisy_adam_step<L: Loss, R: Rng + ?Sized>(
    state: &OptimizerState,
    batch: &[usize],
    data: &Dataset,
    loss: &L,
    cfg: &TrainConfig,
    rng: &mut R,
) -> OptimizerState {
    match noisy_gradient(&state.theta, batch, data, loss, cfg, rng) {
        Some(g) => adam_update(state, &g, cfg.eta.at(state.step), cfg),
        None => skip(state),
    }
}

pub fn mean_loss<L: Loss>(theta: &[f64], data: &Dataset, loss: &L) -> f64 {
    let total: f64 = data
        .features
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| loss.value(theta, x, y))
        .sum();
    total / data.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub state: OptimizerState,
    /// Mean training loss before the first step and after every step.
    pub losses: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub report: PrivacyReport,
}

/// Trains from zero weights for `cfg.steps` steps and attaches the CLT
/// privacy report at the given δ.
pub fn run<L: Loss>(data: &Dataset, loss: &L, cfg: &TrainConfig, delta: f64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let query = AccountantQuery::new(
        cfg.sigma,
        Sampling::Rate { p: cfg.p },
        Duration::Steps { steps: cfg.steps },
        Target::Delta { delta },
    )?;
    let report = clt_report(&query)?;
    let mut state = OptimizerState::new(vec![0.0; data.dim()]);
    let mut losses = vec![mean_loss(&state.theta, data, loss)];
    let mut batch_sizes = Vec::with_capacity(cfg.steps as usize);
    for t in 0..cfg.steps {
        let (mut sampling, mut noise) = step_rngs(cfg.seed, t);
        let batch = poisson_subsample(data.len(), cfg.p, &mut sampling);
        batch_sizes.push(batch.len());
        state = match cfg.algorithm {
            Algorithm::Sgd => noisy_sgd_step(&state, &batch, data, loss, cfg, &mut noise),
            Algorithm::Adam => noisy_adam_step(&state, &batch, data, loss, cfg, &mut noise),
        };
        losses.push(mean_loss(&state.theta, data, loss));
    }
    if state.theta.iter().any(|t| !t.is_finite()) {
        return Err(OptimError::Config {
            field: "eta",
            detail: "training diverged to non-finite weights".into(),
        });
    }
    Ok(TrainOutcome {
        state,
        losses,
        batch_sizes,
        report,
    })
}
