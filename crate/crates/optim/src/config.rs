use serde::{Deserialize, Serialize};

use crate::error::{OptimError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRate {
    Constant(f64),
    /// One rate per step; the last entry is reused past the end.
    Schedule(Vec<f64>),
}

impl LearningRate {
    pub fn at(&self, step: u64) -> f64 {
        match self {
            LearningRate::Constant(eta) => *eta,
            LearningRate::Schedule(rates) => {
                let i = (step as usize).min(rates.len() - 1);
                rates[i]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: LearningRate,
    /// Per-example gradient norm bound R.
    pub clip_norm: f64,
    /// Noise multiplier; the noise standard deviation is sigma·R.
    pub sigma: f64,
    pub p: f64,
    pub steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub xi: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: LearningRate::Constant(0.1),
            clip_norm: 1.0,
            sigma: 1.0,
            p: 0.05,
            steps: 100,
            beta1: 0.9,
            beta2: 0.999,
            xi: 1e-8,
            seed: 0,
            algorithm: Algorithm::Sgd,
        }
    }
}

fn invalid(field: &'static str, detail: impl Into<String>) -> OptimError {
    OptimError::Config {
        field,
        detail: detail.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(invalid("clip_norm", "must be positive"));
        }
        if !(self.sigma >= 0.0) || self.sigma.is_infinite() {
            return Err(invalid("sigma", "must be finite and non-negative"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid("p", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("beta", "momentum rates must lie in [0, 1)"));
        }
        if !(self.xi > 0.0) {
            return Err(invalid("xi", "must be positive"));
        }
        match &self.eta {
            LearningRate::Constant(eta) if !eta.is_finite() => Err(invalid("eta", "must be finite")),
            LearningRate::Schedule(rates) if rates.is_empty() || rates.iter().any(|r| !r.is_finite()) => {
                Err(invalid("eta", "schedule must be non-empty and finite"))
            }
            _ => Ok(()),
        }
    }
}
