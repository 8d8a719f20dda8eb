//! Standard normal distribution helpers.
//!
//! Everything in the accountant is expressed through Φ, its complement and
//! its quantile. The tails are evaluated through `erfc` so values down to
//! the subnormal range keep full relative precision.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// ln(√(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(q) for q in [0, 1].
pub fn ppf(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * q)
}

/// Φ⁻¹(1 − q), computed without forming 1 − q.
pub fn isf(q: f64) -> f64 {
    -ppf(q)
}

/// Mills ratio R(x) = (1 − Φ(x)) / φ(x) for x ≥ 0.
///
/// Uses the ratio of library functions below x = 8 and the Laplace
/// continued fraction above, where it converges in a handful of terms.
pub fn mills_ratio(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 8.0 {
        return sf(x) / pdf(x);
    }
    // Evaluate x + 1/(x + 2/(x + 3/(x + ...))) from the bottom.
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// ln Φ(x), finite for every finite x.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -8.0 {
        cdf(x).ln()
    } else {
        ln_pdf(x) + mills_ratio(-x).ln()
    }
}

/// ln(1 − Φ(x)).
pub fn ln_sf(x: f64) -> f64 {
    ln_cdf(-x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((sf(3.0) - 1.349_898_031_630_094_6e-3).abs() < 1e-17);
        assert!((ppf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((isf(1e-10) - 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn mills_ratio_is_continuous_at_switch() {
        let below = sf(8.0 - 1e-9) / pdf(8.0 - 1e-9);
        let above = mills_ratio(8.0);
        assert!((below - above).abs() / above < 1e-9);
    }

    #[test]
    fn ln_cdf_far_tail_matches_asymptotics() {
        // ln Φ(−40) ≈ −800 − ln(40√(2π)) − 1/40² ...
        let v = ln_cdf(-40.0);
        let approx = -800.0 - (40.0 * (2.0 * PI).sqrt()).ln() - 1.0 / 1600.0;
        assert!((v - approx).abs() < 1e-5, "{v} vs {approx}");
        assert!((ln_cdf(-5.0) - cdf(-5.0).ln()).abs() < 1e-12);
    }
}
