//! Conversion between μ-GDP and (ε, δ)-DP, and noise calibration.
//!
//! μ-GDP holds iff (ε, δ(ε; μ))-DP holds for every ε ≥ 0, with
//! δ(ε; μ) = Φ(−ε/μ + μ/2) − e^ε Φ(−ε/μ − μ/2). Both terms become tiny
//! long before their difference loses meaning, so the evaluation switches to
//! a Mills-ratio form once the first argument is negative.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::functionals::SIGMA_FLOOR;
use crate::normal;

const MU_BRACKET: (f64, f64) = (1e-6, 100.0);
const MAX_BISECTIONS: usize = 400;

/// An (ε, δ) privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsDeltaPoint {
    pub eps: f64,
    pub delta: f64,
}

impl EpsDeltaPoint {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain {
                name: "eps",
                value: eps,
                domain: "[0, inf)",
            });
        }
        check_unit("delta", delta)?;
        Ok(Self { eps, delta })
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain {
            name: "mu",
            value: mu,
            domain: "(0, inf)",
        });
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || eps.is_nan() {
        return Err(Error::Domain {
            name: "eps",
            value: eps,
            domain: "[0, inf)",
        });
    }
    Ok(())
}

/// ln δ(ε; μ).
pub fn log_delta_from_eps(mu: f64, eps: f64) -> Result<f64> {
    check_mu(mu)?;
    check_eps(eps)?;
    if eps.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let a = -eps / mu + 0.5 * mu;
    let b = a - mu;
    if a >= 0.0 {
        let d = normal::cdf(a) - eps.exp() * normal::cdf(b);
        return Ok(d.max(0.0).ln());
    }
    // e^ε φ(b) = φ(a), so δ = φ(a)·(R(−a) − R(−b)).
    let gap = normal::mills_ratio(-a) - normal::mills_ratio(-b);
    Ok(normal::ln_pdf(a) + gap.max(0.0).ln())
}

/// δ(ε; μ), the smallest δ for which μ-GDP implies (ε, δ)-DP.
pub fn delta_from_eps(mu: f64, eps: f64) -> Result<f64> {
    Ok(log_delta_from_eps(mu, eps)?.exp().clamp(0.0, 1.0))
}

/// Bisects a decreasing function of ε down to the smallest ε with
/// `ln_delta_of(ε) ≤ ln_target`.
fn bisect_eps<F: Fn(f64) -> f64>(ln_delta_of: F, ln_target: f64) -> Result<f64> {
    if ln_delta_of(0.0) <= ln_target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while ln_delta_of(hi) > ln_target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket(format!(
                "no eps reaches ln(delta) = {ln_target}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_delta_of(mid) > ln_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// ε(δ; μ), the inverse of [`delta_from_eps`] in ε; zero when
/// δ ≥ δ(0; μ).
pub fn eps_from_delta(mu: f64, delta: f64) -> Result<f64> {
    check_unit("delta", delta)?;
    if delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    eps_from_log_delta(mu, delta.ln())
}

/// [`eps_from_delta`] for a target given as ln δ, for δ below the f64 range.
pub fn eps_from_log_delta(mu: f64, ln_delta: f64) -> Result<f64> {
    check_mu(mu)?;
    bisect_eps(|e| log_delta_from_eps(mu, e).unwrap_or(f64::NEG_INFINITY), ln_delta)
}

/// The μ whose duality curve passes through (ε, δ).
pub fn calibrate_mu(target: &EpsDeltaPoint) -> Result<f64> {
    bisect_mu(target).map(|(mu, _)| mu)
}

fn bisect_mu(target: &EpsDeltaPoint) -> Result<(f64, usize)> {
    check_eps(target.eps)?;
    if !(target.delta > 0.0 && target.delta < 1.0) {
        return Err(Error::Bracket(format!(
            "delta = {} must lie in (0, 1)",
            target.delta
        )));
    }
    let ln_target = target.delta.ln();
    let ln_delta = |mu: f64| log_delta_from_eps(mu, target.eps).unwrap_or(f64::NEG_INFINITY);
    let (mut lo, mut hi) = MU_BRACKET;
    if ln_delta(lo) > ln_target || ln_delta(hi) < ln_target {
        return Err(Error::Bracket(format!(
            "target ({}, {}) is outside the mu range [{lo}, {hi}]",
            target.eps, target.delta
        )));
    }
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if ln_delta(mid) < ln_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), iterations))
}

/// Noise calibrated so that the CLT accounting meets a target (ε, δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
    pub iterations: usize,
    /// δ(ε; μ̃) − target δ.
    pub residual: f64,
}

/// Smallest noise multiplier whose CLT parameter p√(T(e^{1/σ²} − 1)) meets
/// the target (ε, δ).
pub fn calibrate_sigma(target: &EpsDeltaPoint, p: f64, steps: u64) -> Result<CalibrationResult> {
    check_unit("p", p)?;
    if p == 0.0 || steps == 0 {
        return Err(Error::Infeasible(
            "no privacy loss accumulates with p = 0 or T = 0".into(),
        ));
    }
    let (mu_tilde, iterations) = bisect_mu(target)?;
    let ratio = mu_tilde * mu_tilde / (p * p * steps as f64);
    let sigma_tilde = 1.0 / ratio.ln_1p().sqrt();
    if !(sigma_tilde >= SIGMA_FLOOR) {
        return Err(Error::Infeasible(format!(
            "calibrated sigma {sigma_tilde} is below the floor {SIGMA_FLOOR}"
        )));
    }
    Ok(CalibrationResult {
        mu_tilde,
        sigma_tilde,
        iterations,
        residual: delta_from_eps(mu_tilde, target.eps)? - target.delta,
    })
}

/// Number of steps for `epochs` passes over `n` examples at expected batch
/// size `batch`: round(epochs·n/batch), halves rounded away from zero.
pub fn steps_from_epochs(epochs: f64, n: u64, batch: u64) -> Result<u64> {
    if n == 0 || batch == 0 || batch > n {
        return Err(Error::Domain {
            name: "batch",
            value: batch as f64,
            domain: "[1, n]",
        });
    }
    check_epochs(epochs)?;
    Ok((epochs * n as f64 / batch as f64).round() as u64)
}

fn check_epochs(epochs: f64) -> Result<()> {
    if !(epochs >= 0.0) || !epochs.is_finite() {
        return Err(Error::Domain {
            name: "epochs",
            value: epochs,
            domain: "[0, inf)",
        });
    }
    Ok(())
}

/// round(epochs/p) for a sampling rate given directly.
pub fn steps_from_epochs_rate(epochs: f64, p: f64) -> Result<u64> {
    check_epochs(epochs)?;
    check_unit("p", p)?;
    if p == 0.0 {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1]",
        });
    }
    Ok((epochs / p).round() as u64)
}
