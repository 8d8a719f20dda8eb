//! Privacy reports for a noisy training run under the three accountants.

use serde::{Deserialize, Serialize};

use crate::dual::{delta_from_eps, eps_from_delta, steps_from_epochs, steps_from_epochs_rate};
use crate::error::{check_unit, Error, Result};
use crate::functionals::{clt_mu_repeated, clt_mu_subsampled_gaussian, SIGMA_FLOOR};
use crate::moments::{LambdaMode, MomentsAccountant, MomentsAccountantConfig};
use crate::pld::{pld_from_subsampled_gaussian, pld_to_tradeoff, Direction};
use crate::tradeoff::{subsample, Tradeoff, TradeoffFunction};

/// How examples are drawn at each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Rate { p: f64 },
    Batch { n: u64, batch: u64 },
}

/// Length of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duration {
    Steps { steps: u64 },
    Epochs { epochs: f64 },
}

/// The quantity held fixed; the report solves for the other one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Delta { delta: f64 },
    Eps { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantQuery {
    pub sigma: f64,
    pub sampling: Sampling,
    pub duration: Duration,
    pub target: Target,
}

impl AccountantQuery {
    pub fn new(sigma: f64, sampling: Sampling, duration: Duration, target: Target) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::Domain {
                name: "sigma",
                value: sigma,
                domain: "[0, inf)",
            });
        }
        let query = Self {
            sigma,
            sampling,
            duration,
            target,
        };
        query.sampling_rate()?;
        query.steps()?;
        match target {
            Target::Delta { delta } if !(delta > 0.0 && delta < 1.0) => Err(Error::Domain {
                name: "delta",
                value: delta,
                domain: "(0, 1)",
            }),
            Target::Eps { eps } if !(eps >= 0.0) || eps.is_infinite() => Err(Error::Domain {
                name: "eps",
                value: eps,
                domain: "[0, inf)",
            }),
            _ => Ok(query),
        }
    }

    pub fn sampling_rate(&self) -> Result<f64> {
        sampling_rate(&self.sampling)
    }

    pub fn steps(&self) -> Result<u64> {
        steps(&self.sampling, &self.duration)
    }
}

pub fn sampling_rate(sampling: &Sampling) -> Result<f64> {
    let p = match *sampling {
        Sampling::Rate { p } => p,
        Sampling::Batch { n, batch } => {
            if n == 0 || batch == 0 || batch > n {
                return Err(Error::Domain {
                    name: "batch",
                    value: batch as f64,
                    domain: "[1, n]",
                });
            }
            batch as f64 / n as f64
        }
    };
    check_unit("p", p)?;
    if p == 0.0 {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1]",
        });
    }
    Ok(p)
}

/// Step count of a run; epochs are converted with the batch rule when the
/// sampling is given as a batch size.
pub fn steps(sampling: &Sampling, duration: &Duration) -> Result<u64> {
    match (*duration, *sampling) {
        (Duration::Steps { steps }, _) => Ok(steps),
        (Duration::Epochs { epochs }, Sampling::Batch { n, batch }) => steps_from_epochs(epochs, n, batch),
        (Duration::Epochs { epochs }, Sampling::Rate { p }) => steps_from_epochs_rate(epochs, p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Clt,
    Ma,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Clt => "clt",
            Method::Ma => "ma",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// T·κ₃ of one step; drives the finite-T error of the CLT.
    pub kappa3_sum: Option<f64>,
    pub grid_spacing: Option<f64>,
    pub tail_mass: Option<f64>,
}

/// Outcome of one accountant. `mu` is set only by the CLT accountant and is
/// +∞ when no noise is added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub method: Method,
    pub p: f64,
    pub steps: u64,
    pub sigma: f64,
    pub mu: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    pub diagnostics: Diagnostics,
}

/// Special cases shared by all accountants: no steps, or no noise.
fn trivial(query: &AccountantQuery, method: Method, p: f64, steps: u64) -> Option<PrivacyReport> {
    let (mu, eps, delta) = if steps == 0 {
        match query.target {
            Target::Delta { delta } => (0.0, 0.0, delta),
            Target::Eps { eps } => (0.0, eps, 0.0),
        }
    } else if query.sigma == 0.0 {
        match query.target {
            Target::Delta { delta } => (f64::INFINITY, f64::INFINITY, delta),
            Target::Eps { eps } => (f64::INFINITY, eps, 1.0),
        }
    } else {
        return None;
    };
    Some(PrivacyReport {
        method,
        p,
        steps,
        sigma: query.sigma,
        mu: (method == Method::Clt).then_some(mu),
        eps,
        delta,
        diagnostics: Diagnostics::default(),
    })
}

/// μ of the CLT accountant; exact √T/σ under full sampling.
pub fn clt_mu(p: f64, steps: u64, sigma: f64) -> Result<f64> {
    if steps == 0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p == 1.0 && sigma > 0.0 {
        return Ok((steps as f64).sqrt() / sigma);
    }
    clt_mu_subsampled_gaussian(p, steps, sigma)
}

pub fn clt_report(query: &AccountantQuery) -> Result<PrivacyReport> {
    let p = query.sampling_rate()?;
    let steps = query.steps()?;
    if let Some(report) = trivial(query, Method::Clt, p, steps) {
        return Ok(report);
    }
    let mu = clt_mu(p, steps, query.sigma)?;
    let (eps, delta) = match query.target {
        Target::Delta { delta } => (eps_from_delta(mu, delta)?, delta),
        Target::Eps { eps } => (eps, delta_from_eps(mu, eps)?),
    };
    let kappa3_sum = if p < 1.0 && query.sigma >= SIGMA_FLOOR {
        let step = subsample(&TradeoffFunction::Gaussian { mu: 1.0 / query.sigma }, p)?;
        clt_mu_repeated(&step, steps).ok().map(|s| s.kappa3_sum)
    } else {
        None
    };
    Ok(PrivacyReport {
        method: Method::Clt,
        p,
        steps,
        sigma: query.sigma,
        mu: Some(mu),
        eps,
        delta,
        diagnostics: Diagnostics {
            kappa3_sum,
            ..Diagnostics::default()
        },
    })
}

pub fn ma_report(query: &AccountantQuery, mode: LambdaMode) -> Result<PrivacyReport> {
    let p = query.sampling_rate()?;
    let steps = query.steps()?;
    if let Some(report) = trivial(query, Method::Ma, p, steps) {
        return Ok(report);
    }
    let ma = MomentsAccountant::new(MomentsAccountantConfig::new(query.sigma, p, steps)?)?;
    let (eps, delta) = match query.target {
        Target::Delta { delta } => (ma.eps(delta, mode)?, delta),
        Target::Eps { eps } => (eps, ma.delta(eps, mode)?),
    };
    Ok(PrivacyReport {
        method: Method::Ma,
        p,
        steps,
        sigma: query.sigma,
        mu: None,
        eps,
        delta,
        diagnostics: Diagnostics::default(),
    })
}

/// Composed trade-off curve of the query's run together with the largest
/// tail mass of the two loss distributions.
pub fn oracle_tradeoff(sigma: f64, p: f64, steps: u64, spacing: f64) -> Result<(TradeoffFunction, f64)> {
    let add = pld_from_subsampled_gaussian(sigma, p, spacing, Direction::Add)?.self_compose(steps)?;
    let remove = pld_from_subsampled_gaussian(sigma, p, spacing, Direction::Remove)?.self_compose(steps)?;
    let tail = add.tail_mass_high().max(remove.tail_mass_high());
    Ok((pld_to_tradeoff(&add, &remove)?, tail))
}

/// δ(ε) = 1 + f*(−e^ε) of a trade-off function.
pub fn tradeoff_delta(f: &TradeoffFunction, eps: f64) -> f64 {
    (1.0 + f.conjugate(-eps.exp())).clamp(0.0, 1.0)
}

/// Smallest ε with δ(ε) ≤ `delta`, by bisection.
pub fn tradeoff_eps(f: &TradeoffFunction, delta: f64) -> Result<f64> {
    if tradeoff_delta(f, 0.0) <= delta {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while tradeoff_delta(f, hi) > delta {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Bracket(format!("no eps reaches delta = {delta:e}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tradeoff_delta(f, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(hi)
}

pub fn oracle_report(query: &AccountantQuery, spacing: f64) -> Result<PrivacyReport> {
    let p = query.sampling_rate()?;
    let steps = query.steps()?;
    if let Some(report) = trivial(query, Method::Oracle, p, steps) {
        return Ok(report);
    }
    let (f, tail) = oracle_tradeoff(query.sigma, p, steps, spacing)?;
    let (eps, delta) = match query.target {
        Target::Delta { delta } => (tradeoff_eps(&f, delta)?, delta),
        Target::Eps { eps } => (eps, tradeoff_delta(&f, eps)),
    };
    Ok(PrivacyReport {
        method: Method::Oracle,
        p,
        steps,
        sigma: query.sigma,
        mu: None,
        eps,
        delta,
        diagnostics: Diagnostics {
            grid_spacing: Some(spacing),
            tail_mass: Some(tail),
            ..Diagnostics::default()
        },
    })
}
