//! Integral functionals of trade-off functions and the central-limit
//! accountant built on them.
//!
//! Every functional has the form ∫₀¹ h(|f'(α)|) dα. It is evaluated after
//! the substitution α = 1 − Φ(z), which turns it into ∫ h(s(z)) φ(z) dz on
//! the real line and moves the singular behaviour at α ∈ {0, 1} out to
//! Gaussian-weighted tails.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::normal;
use crate::quadrature::{integrate_line, ln_integrate_exp, QuadratureOptions};
use crate::tradeoff::{Tradeoff, TradeoffFunction};

/// Smallest noise scale accepted by the closed-form CLT formula.
pub const SIGMA_FLOOR: f64 = 0.2;

/// ∫ g⁴ above this value is treated as divergent.
pub const INTEGRABILITY_LIMIT: f64 = 1e200;

fn options() -> QuadratureOptions {
    QuadratureOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        ..QuadratureOptions::default()
    }
}

/// ∫ h(ln|f'|, ln φ) dz with α = 1 − Φ(z).
fn probit_integral<F, H>(f: &F, h: H) -> Result<f64>
where
    F: Tradeoff + ?Sized,
    H: Fn(f64, f64) -> f64,
{
    let est = integrate_line(
        |z| h(f.ln_slope_at_quantile(z), normal::ln_pdf(z)),
        &options(),
    )?;
    if est.error > 1e-6 * est.value.abs().max(1.0) {
        return Err(Error::Quadrature {
            achieved: est.error,
            detail: "functional integral".into(),
        });
    }
    Ok(est.value)
}

/// |f'|·φ with the product formed in log space.
#[inline]
fn weighted(l: f64, ln_phi: f64) -> f64 {
    (l + ln_phi).exp()
}

/// ∫ (|f'| − 1)⁴ dα, the integrability condition of the central limit.
fn check_integrable<F: Tradeoff + ?Sized>(f: &F) -> Result<()> {
    let estimate = match probit_integral(f, |l, ln_phi| {
        let g = l.exp_m1().abs();
        if g == 0.0 {
            0.0
        } else {
            (4.0 * g.ln() + ln_phi).exp()
        }
    }) {
        Ok(v) => v,
        Err(_) => f64::INFINITY,
    };
    if !estimate.is_finite() || estimate > INTEGRABILITY_LIMIT {
        return Err(Error::NotIntegrable { estimate });
    }
    Ok(())
}

/// The six log-slope moments of a trade-off function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlFunctionals {
    /// −∫ ln|f'|
    pub kl: f64,
    /// ∫ |f'| ln|f'|
    pub kl_tilde: f64,
    /// ∫ ln²|f'|
    pub kappa2: f64,
    /// ∫ |f'| ln²|f'|
    pub kappa2_tilde: f64,
    /// ∫ |ln|f'||³
    pub kappa3: f64,
    /// ∫ |f'| |ln|f'||³
    pub kappa3_tilde: f64,
}

pub fn kl_functionals<F: Tradeoff + ?Sized>(f: &F) -> Result<KlFunctionals> {
    check_integrable(f)?;
    let tilde = |l: f64, ln_phi: f64, k: i32| {
        let w = weighted(l, ln_phi);
        if w == 0.0 {
            0.0
        } else {
            w * l.abs().powi(k)
        }
    };
    Ok(KlFunctionals {
        kl: -probit_integral(f, |l, ln_phi| l * ln_phi.exp())?,
        kl_tilde: probit_integral(f, |l, ln_phi| {
            let w = weighted(l, ln_phi);
            if w == 0.0 {
                0.0
            } else {
                w * l
            }
        })?,
        kappa2: probit_integral(f, |l, ln_phi| l * l * ln_phi.exp())?,
        kappa2_tilde: probit_integral(f, |l, ln_phi| tilde(l, ln_phi, 2))?,
        kappa3: probit_integral(f, |l, ln_phi| l.abs().powi(3) * ln_phi.exp())?,
        kappa3_tilde: probit_integral(f, |l, ln_phi| tilde(l, ln_phi, 3))?,
    })
}

/// kl(f) + k̃l(f) = ∫ (|f'| − 1) ln|f'|, integrated as one non-negative
/// integrand so that no cancellation occurs when f is close to Id.
fn kl_sum<F: Tradeoff + ?Sized>(f: &F) -> Result<f64> {
    probit_integral(f, |l, ln_phi| {
        if l == 0.0 {
            0.0
        } else if l > 0.0 {
            (weighted(l, ln_phi) - ln_phi.exp()) * l
        } else {
            -l.exp_m1() * ln_phi.exp() * -l
        }
    })
}

/// χ²(f) = ∫ f'² − 1, evaluated by quadrature for every variant.
///
/// Computed as ∫ (|f'| − 1)² + 2(f(0) − f(1) − 1), which equals the
/// definition and stays accurate when f is close to Id.
pub fn chi_square_numeric<F: Tradeoff + ?Sized>(f: &F) -> Result<f64> {
    check_integrable(f)?;
    let squared = probit_integral(f, |l, ln_phi| {
        let g = l.exp_m1().abs();
        if g == 0.0 {
            0.0
        } else {
            (2.0 * g.ln() + ln_phi).exp()
        }
    })?;
    let drift = 2.0 * (f.value(0.0) - f.value(1.0) - 1.0);
    Ok((squared + drift).max(0.0))
}

/// χ²(f), in closed form e^{μ²} − 1 for Gaussian input.
pub fn chi_square(f: &TradeoffFunction) -> Result<f64> {
    match *f {
        TradeoffFunction::Gaussian { mu } => Ok((mu * mu).exp_m1()),
        TradeoffFunction::Identity => Ok(0.0),
        _ => chi_square_numeric(f),
    }
}

/// Rényi divergence D_order(Q‖P) of the pair behind f, from
/// (order − 1)·D_order = ln ∫ |f'|^order.
///
/// |f'| is the likelihood ratio dQ/dP at the rejection boundary and α
/// is distributed as P, so the integral is E_P[(dQ/dP)^order].
pub fn renyi_from_tradeoff<F: Tradeoff + ?Sized>(f: &F, order: f64) -> Result<f64> {
    if !(order > 1.0) || !order.is_finite() {
        return Err(Error::Domain {
            name: "order",
            value: order,
            domain: "(1, inf)",
        });
    }
    let lambda = order - 1.0;
    let (ln_value, _) = ln_integrate_exp(
        |z| order * f.ln_slope_at_quantile(z) + normal::ln_pdf(z),
        -40.0,
        40.0,
        &options(),
    )
    .map_err(|_| Error::Divergent { order })?;
    if !ln_value.is_finite() {
        return Err(Error::Divergent { order });
    }
    Ok((ln_value / lambda).max(0.0))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_nan() || sigma < SIGMA_FLOOR {
        return Err(Error::SigmaBelowFloor {
            sigma,
            floor: SIGMA_FLOOR,
        });
    }
    Ok(())
}

/// μ = p·√(T(e^{1/σ²} − 1)) for T steps of the subsampled Gaussian
/// mechanism with noise multiplier `sigma`.
pub fn clt_mu_subsampled_gaussian(p: f64, steps: u64, sigma: f64) -> Result<f64> {
    check_unit("p", p)?;
    check_sigma(sigma)?;
    let chi2 = (1.0 / (sigma * sigma)).exp_m1();
    Ok(p * (steps as f64 * chi2).sqrt())
}

/// Sampling rate and step count in the regime p√T → ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRegime {
    pub nu: f64,
    pub steps: u64,
    pub p: f64,
}

impl AsymptoticRegime {
    /// ν = p√T from finite parameters.
    pub fn from_finite(p: f64, steps: u64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(Self {
            nu: p * (steps as f64).sqrt(),
            steps,
            p,
        })
    }

    /// p = ν/√T for a target limit ν.
    pub fn from_nu(nu: f64, steps: u64) -> Result<Self> {
        let p = nu / (steps as f64).sqrt();
        if !(nu > 0.0) || steps == 0 || p > 1.0 {
            return Err(Error::Domain {
                name: "nu",
                value: nu,
                domain: "(0, sqrt(T)]",
            });
        }
        Ok(Self { nu, steps, p })
    }
}

/// Limit parameter ν·√χ²(f) of (p·f + (1 − p)·Id)^{⊗T}.
pub fn clt_mu_general(f: &TradeoffFunction, regime: &AsymptoticRegime) -> Result<f64> {
    Ok(regime.nu * chi_square(f)?.sqrt())
}

/// Sums entering the asymmetric central limit, and the resulting μ = K/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltFunctionalSums {
    /// Σ kl + k̃l
    pub k: f64,
    /// √Σ κ₂
    pub s: f64,
    /// √Σ κ̃₂; tends to `s` when the limit applies.
    pub s_tilde: f64,
    pub kappa3_sum: f64,
    pub kappa3_tilde_sum: f64,
    pub mu: f64,
}

impl CltFunctionalSums {
    fn from_sums(k: f64, kappa2: f64, kappa2_tilde: f64, kappa3: f64, kappa3_tilde: f64) -> Result<Self> {
        let s = kappa2.sqrt();
        if !(s > 0.0) {
            return Err(Error::Degenerate("sum of kappa2 is zero".into()));
        }
        Ok(Self {
            k,
            s,
            s_tilde: kappa2_tilde.sqrt(),
            kappa3_sum: kappa3,
            kappa3_tilde_sum: kappa3_tilde,
            mu: k / s,
        })
    }
}

/// Central-limit parameter K/s of the composition of `components`.
pub fn clt_mu_asymmetric<F: Tradeoff>(components: &[F]) -> Result<CltFunctionalSums> {
    let mut sums = [0.0; 5];
    for f in components {
        let fun = kl_functionals(f)?;
        sums[0] += kl_sum(f)?;
        sums[1] += fun.kappa2;
        sums[2] += fun.kappa2_tilde;
        sums[3] += fun.kappa3;
        sums[4] += fun.kappa3_tilde;
    }
    CltFunctionalSums::from_sums(sums[0], sums[1], sums[2], sums[3], sums[4])
}

/// [`clt_mu_asymmetric`] for `count` identical copies of `f`.
pub fn clt_mu_repeated<F: Tradeoff + ?Sized>(f: &F, count: u64) -> Result<CltFunctionalSums> {
    let fun = kl_functionals(f)?;
    let n = count as f64;
    CltFunctionalSums::from_sums(
        n * kl_sum(f)?,
        n * fun.kappa2,
        n * fun.kappa2_tilde,
        n * fun.kappa3,
        n * fun.kappa3_tilde,
    )
}
