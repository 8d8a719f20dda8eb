//! Adaptive Simpson quadrature.
//!
//! Two entry points are used by the accountant: [`integrate_line`] for
//! integrands that decay in both directions, and [`ln_integrate_exp`] for
//! integrands known only through their logarithm, where the value itself
//! would overflow or underflow.

use crate::error::{Error, Result};

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Absolute error target per unit panel.
    pub abs_tol: f64,
    /// Relative error target, applied against the running panel estimate.
    pub rel_tol: f64,
    /// Maximum bisection depth inside one panel.
    pub max_depth: u32,
    /// Hard limit on |z| when marching outward.
    pub max_extent: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_depth: 40,
            max_extent: 60.0,
        }
    }
}

/// An integral estimate with its accumulated error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// False when some subinterval hit the depth limit.
    pub converged: bool,
}

impl Estimate {
    fn zero() -> Self {
        Self {
            value: 0.0,
            error: 0.0,
            converged: true,
        }
    }

    fn add(&mut self, other: Estimate) {
        self.value += other.value;
        self.error += other.error;
        self.converged &= other.converged;
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Estimate {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let resolved = b - a <= 1e-13 * (a.abs() + b.abs());
    if depth == 0 || resolved || delta.abs() <= 15.0 * tol || !delta.is_finite() {
        return Estimate {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
            converged: depth > 0 || delta.abs() <= 15.0 * tol,
        };
    }
    let mut out = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    out.add(simpson_recurse(
        f,
        m,
        b,
        fm,
        frm,
        fb,
        right,
        0.5 * tol,
        depth - 1,
    ));
    out
}

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
///
/// The interval is first split into eight pieces so that features narrower
/// than the whole interval are not missed by the first Simpson estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Estimate {
    let mut total = Estimate::zero();
    if b <= a {
        return total;
    }
    const PIECES: usize = 8;
    let h = (b - a) / PIECES as f64;
    let mut x0 = a;
    let mut f0 = f(a);
    for i in 0..PIECES {
        let x1 = if i + 1 == PIECES { b } else { a + h * (i + 1) as f64 };
        let xm = 0.5 * (x0 + x1);
        let fm = f(xm);
        let f1 = f(x1);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total.add(simpson_recurse(
            f,
            x0,
            x1,
            f0,
            fm,
            f1,
            whole,
            tol / PIECES as f64,
            max_depth,
        ));
        x0 = x1;
        f0 = f1;
    }
    total
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: &QuadratureOptions) -> Estimate {
    let coarse = adaptive_simpson(f, a, b, f64::INFINITY, 0);
    let tol = opts.abs_tol.max(opts.rel_tol * coarse.value.abs());
    adaptive_simpson(f, a, b, tol, opts.max_depth)
}

/// ∫ f(z) dz over the real line, marching outward from the origin in unit
/// panels until the contributions become negligible in both directions.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, opts: &QuadratureOptions) -> Result<Estimate> {
    const MIN_EXTENT: f64 = 10.0;
    let mut total = Estimate::zero();
    for direction in [1.0_f64, -1.0] {
        let mut z = 0.0_f64;
        let mut quiet = 0;
        let mut previous = f64::INFINITY;
        while z.abs() < opts.max_extent {
            let next = z + direction;
            let (a, b) = if direction > 0.0 { (z, next) } else { (next, z) };
            let piece = panel(&f, a, b, opts);
            if !piece.value.is_finite() {
                return Err(Error::Quadrature {
                    achieved: f64::INFINITY,
                    detail: format!("non-finite integrand on [{a}, {b}]"),
                });
            }
            total.add(piece);
            let magnitude = piece.value.abs();
            let negligible = magnitude <= 1e-17 * total.value.abs().max(1e-300)
                || magnitude < 1e-300;
            if negligible && magnitude <= previous && next.abs() >= MIN_EXTENT {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
            previous = magnitude;
            z = next;
        }
    }
    Ok(total)
}

/// ln ∫ exp(g(z)) dz over [lo, hi], evaluated by shifting with the maximum
/// of g. If the maximum sits on `hi` the window is extended upward, so the
/// caller only needs a lower bound on the location of the mass.
pub fn ln_integrate_exp<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    hi: f64,
    opts: &QuadratureOptions,
) -> Result<(f64, Estimate)> {
    const STEP: f64 = 0.25;
    const SKIP_BELOW: f64 = 90.0;
    let mut hi = hi;
    let (gmax, samples) = loop {
        let n = ((hi - lo) / STEP).ceil() as usize + 1;
        let samples: Vec<f64> = (0..n).map(|i| g((lo + STEP * i as f64).min(hi))).collect();
        let (imax, gmax) = samples
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if imax + 1 < n || hi - lo > 1e5 {
            break (gmax, samples);
        }
        hi += (hi - lo).max(60.0);
    };
    if !gmax.is_finite() {
        if gmax == f64::NEG_INFINITY {
            return Ok((f64::NEG_INFINITY, Estimate::zero()));
        }
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            detail: "log-integrand is +inf".into(),
        });
    }
    let shifted = |z: f64| (g(z) - gmax).exp();
    // Rounding in g is relative to its magnitude; no tolerance below that
    // noise floor can be met.
    let opts = &QuadratureOptions {
        abs_tol: opts.abs_tol.max(8.0 * f64::EPSILON * (gmax.abs() + 1.0)),
        ..*opts
    };
    let mut total = Estimate::zero();
    // Unit panels, each covering four scan samples.
    let per_panel = (1.0 / STEP) as usize;
    let mut start = 0;
    while start + 1 < samples.len() {
        let end = (start + per_panel).min(samples.len() - 1);
        let a = lo + STEP * start as f64;
        let b = (lo + STEP * end as f64).min(hi);
        let peak = samples[start..=end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak > gmax - SKIP_BELOW {
            total.add(panel(&shifted, a, b, opts));
        }
        start = end;
    }
    if !(total.value > 0.0) {
        return Err(Error::Quadrature {
            achieved: total.error,
            detail: "shifted integral is not positive".into(),
        });
    }
    Ok((gmax + total.value.ln(), total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;

    #[test]
    fn polynomial_is_exact() {
        let est = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 20);
        assert!((est.value - 0.0).abs() < 1e-12);
        assert!(est.converged);
    }

    #[test]
    fn gaussian_moments_on_line() {
        let opts = QuadratureOptions::default();
        let mass = integrate_line(normal::pdf, &opts).unwrap();
        assert!((mass.value - 1.0).abs() < 1e-12, "{}", mass.value);
        let second = integrate_line(|z| z * z * normal::pdf(z), &opts).unwrap();
        assert!((second.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_integral_of_far_peak() {
        // ∫ exp(30 z − z²/2) dz = √(2π) e^{450}
        let opts = QuadratureOptions::default();
        let (ln_val, _) = ln_integrate_exp(|z| 30.0 * z - 0.5 * z * z, -20.0, 20.0, &opts).unwrap();
        let exact = 450.0 + normal::LN_SQRT_2PI;
        assert!((ln_val - exact).abs() < 1e-12, "{ln_val} vs {exact}");
    }

    #[test]
    fn kink_converges() {
        let est = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12, 50);
        assert!((est.value - (0.045 + 0.245)).abs() < 1e-11);
    }
}
