//! Moments accountant for the subsampled Gaussian mechanism.
//!
//! The mechanism compares P = N(0, 1) with the mixture
//! GM = p·N(1/σ, 1) + (1 − p)·N(0, 1). The accountant bounds
//! δ(ε) ≤ exp(T·α(λ) − λε) for every λ > 0, where α(λ) is the larger of the
//! two scaled Rényi divergences of order λ + 1 between GM and P.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::normal;
use crate::quadrature::{ln_integrate_exp, QuadratureOptions};
use crate::tradeoff::{AlphaGrid, GridTradeoff, Tradeoff};

/// Rényi orders of the standard discretization; the accountant works with
/// λ = order − 1.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5];
    orders.extend((5..=64).map(f64::from));
    orders.extend([128.0, 256.0, 512.0]);
    orders
}

/// λ values for [`default_orders`].
pub fn default_lambda_grid() -> Vec<f64> {
    default_orders().into_iter().map(|o| o - 1.0).collect()
}

/// How the infimum over λ is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Minimum over the configured λ grid.
    Grid,
    /// Grid minimum refined by golden-section search between neighbours.
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsAccountantConfig {
    pub sigma: f64,
    pub p: f64,
    pub steps: u64,
    pub lambda_grid: Vec<f64>,
    pub quadrature: QuadratureOptions,
}

impl MomentsAccountantConfig {
    pub fn new(sigma: f64, p: f64, steps: u64) -> Result<Self> {
        Self::with_lambda_grid(sigma, p, steps, default_lambda_grid())
    }

    pub fn with_lambda_grid(sigma: f64, p: f64, steps: u64, lambda_grid: Vec<f64>) -> Result<Self> {
        check_sigma(sigma)?;
        check_unit("p", p)?;
        if lambda_grid.is_empty()
            || !(lambda_grid[0] > 0.0)
            || lambda_grid.windows(2).any(|w| !(w[1] > w[0]))
            || lambda_grid.iter().any(|l| !l.is_finite())
        {
            return Err(Error::Domain {
                name: "lambda_grid",
                value: lambda_grid.first().copied().unwrap_or(f64::NAN),
                domain: "non-empty, positive, strictly increasing",
            });
        }
        Ok(Self {
            sigma,
            p,
            steps,
            lambda_grid,
            quadrature: QuadratureOptions {
                abs_tol: 1e-14,
                ..QuadratureOptions::default()
            },
        })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain {
            name: "sigma",
            value: sigma,
            domain: "(0, inf)",
        });
    }
    Ok(())
}

/// ln(dGM/dP)(z) = ln(1 − p + p·e^{z/σ − 1/(2σ²)}).
fn ln_ratio(z: f64, sigma: f64, ln_p: f64, ln_q: f64) -> f64 {
    let shifted = ln_p + z / sigma - 0.5 / (sigma * sigma);
    let m = shifted.max(ln_q);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((shifted - m).exp() + (ln_q - m).exp()).ln()
}

fn ln_moment<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, opts: &QuadratureOptions) -> Result<f64> {
    let (value, est) = ln_integrate_exp(g, lo, hi, opts)?;
    // Error of the logarithm, relative to its own scale.
    if est.error / est.value > 1e-9 * value.abs().max(1.0) {
        return Err(Error::Quadrature {
            achieved: est.error,
            detail: "Rényi moment of the Gaussian mixture".into(),
        });
    }
    Ok(value)
}

/// Both scaled divergences (λ·D_{λ+1}(GM‖P), λ·D_{λ+1}(P‖GM)).
pub fn alpha_gm_components(lambda: f64, sigma: f64, p: f64, opts: &QuadratureOptions) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain {
            name: "lambda",
            value: lambda,
            domain: "(0, inf)",
        });
    }
    check_sigma(sigma)?;
    check_unit("p", p)?;
    if p == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    let order = lambda + 1.0;
    let shift = 1.0 / sigma;
    // E_P[(dGM/dP)^{λ+1}], mass near z = (λ + 1)/σ at most.
    let forward = ln_moment(
        |z| normal::ln_pdf(z) + order * ln_ratio(z, sigma, ln_p, ln_q),
        -30.0,
        order * shift + 30.0,
        opts,
    )?;
    // E_P[(dGM/dP)^{−λ}], mass near z = −λ/σ at most.
    let backward = ln_moment(
        |z| normal::ln_pdf(z) - lambda * ln_ratio(z, sigma, ln_p, ln_q),
        -lambda * shift - 30.0,
        30.0,
        opts,
    )?;
    Ok((forward.max(0.0), backward.max(0.0)))
}

/// α(λ; σ, p), the larger of the two scaled Rényi divergences.
pub fn alpha_gm(lambda: f64, sigma: f64, p: f64) -> Result<f64> {
    let opts = MomentsAccountantConfig::new(1.0, 0.5, 1)?.quadrature;
    let (a, b) = alpha_gm_components(lambda, sigma, p, &opts)?;
    Ok(a.max(b))
}

/// A configured accountant with α cached on the λ grid.
#[derive(Debug, Clone)]
pub struct MomentsAccountant {
    cfg: MomentsAccountantConfig,
    alphas: Vec<f64>,
}

impl MomentsAccountant {
    pub fn new(cfg: MomentsAccountantConfig) -> Result<Self> {
        let alphas = cfg
            .lambda_grid
            .iter()
            .map(|&l| alpha_at(&cfg, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, alphas })
    }

    pub fn config(&self) -> &MomentsAccountantConfig {
        &self.cfg
    }

    /// Cached α values, aligned with the λ grid.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    fn exponent(&self, i: usize, eps: f64) -> f64 {
        self.cfg.steps as f64 * self.alphas[i] - self.cfg.lambda_grid[i] * eps
    }

    fn grid_argmin<F: Fn(usize) -> f64>(&self, objective: F) -> (usize, f64) {
        (0..self.alphas.len())
            .map(|i| (i, objective(i)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    /// λ interval around grid index `i` for the continuous refinement.
    fn bracket(&self, i: usize) -> (f64, f64) {
        let grid = &self.cfg.lambda_grid;
        let lo = if i == 0 { 1e-6 } else { grid[i - 1] };
        let hi = if i + 1 == grid.len() { 4.0 * grid[i] } else { grid[i + 1] };
        (lo, hi)
    }

    /// ln δ_MA(ε), not clamped.
    pub fn log_delta(&self, eps: f64, mode: LambdaMode) -> Result<f64> {
        if !(eps >= 0.0) {
            return Err(Error::Domain {
                name: "eps",
                value: eps,
                domain: "[0, inf)",
            });
        }
        let (i, best) = self.grid_argmin(|i| self.exponent(i, eps));
        match mode {
            LambdaMode::Grid => Ok(best),
            LambdaMode::Continuous => {
                let (lo, hi) = self.bracket(i);
                let steps = self.cfg.steps as f64;
                let refined = golden_section(
                    |l| alpha_at(&self.cfg, l).map(|a| steps * a - l * eps),
                    lo,
                    hi,
                )?;
                Ok(best.min(refined))
            }
        }
    }

    /// δ_MA(ε), clamped to [0, 1].
    pub fn delta(&self, eps: f64, mode: LambdaMode) -> Result<f64> {
        Ok(self.log_delta(eps, mode)?.exp().clamp(0.0, 1.0))
    }

    /// ε_MA(δ), the smallest ε with δ_MA(ε) ≤ δ.
    ///
    /// On the grid this is min over λ of (T·α(λ) − ln δ)/λ exactly; the
    /// continuous mode bisects on [`Self::log_delta`].
    pub fn eps(&self, delta: f64, mode: LambdaMode) -> Result<f64> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain {
                name: "delta",
                value: delta,
                domain: "(0, 1)",
            });
        }
        let ln_delta = delta.ln();
        let (_, grid_eps) = self.grid_argmin(|i| {
            (self.cfg.steps as f64 * self.alphas[i] - ln_delta) / self.cfg.lambda_grid[i]
        });
        let grid_eps = grid_eps.max(0.0);
        match mode {
            LambdaMode::Grid => Ok(grid_eps),
            LambdaMode::Continuous => {
                if self.log_delta(0.0, mode)? <= ln_delta {
                    return Ok(0.0);
                }
                // The continuous infimum is below the grid one, so ε is too.
                let (mut lo, mut hi) = (0.0, grid_eps);
                while hi - lo > 1e-6 {
                    let mid = 0.5 * (lo + hi);
                    if self.log_delta(mid, mode)? > ln_delta {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(hi)
            }
        }
    }

    /// The (ε, δ_MA(ε)) envelope sampled on `count` ε values.
    pub fn envelope(&self, mode: LambdaMode, count: usize) -> Result<MaEnvelope> {
        let eps_max = (1.5 * self.eps(1e-12, LambdaMode::Grid)?).max(1.0);
        let count = count.max(2);
        let points = (0..count)
            .map(|j| {
                let eps = eps_max * j as f64 / (count - 1) as f64;
                self.delta(eps, mode).map(|delta| (eps, delta))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaEnvelope { points })
    }
}

fn alpha_at(cfg: &MomentsAccountantConfig, lambda: f64) -> Result<f64> {
    let (a, b) = alpha_gm_components(lambda, cfg.sigma, cfg.p, &cfg.quadrature)?;
    Ok(a.max(b))
}

/// Minimum of a unimodal function on [lo, hi].
fn golden_section<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if b - a <= 1e-10 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(fc.min(fd))
}

/// sup over ε of f_{ε, δ_MA(ε)}: the trade-off function implied by the
/// whole (ε, δ) curve of the moments accountant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaEnvelope {
    points: Vec<(f64, f64)>,
}

impl MaEnvelope {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn to_grid(&self, grid: &AlphaGrid) -> GridTradeoff {
        self.sample(grid)
    }
}

impl Tradeoff for MaEnvelope {
    fn value(&self, alpha: f64) -> f64 {
        self.points
            .iter()
            .map(|&(eps, delta)| {
                let steep = 1.0 - delta - eps.exp() * alpha;
                let shallow = (-eps).exp() * (1.0 - delta - alpha);
                steep.max(shallow)
            })
            .fold(0.0, f64::max)
    }

    fn ln_slope_at_quantile(&self, z: f64) -> f64 {
        // Slope of the active piece at α.
        let alpha = normal::sf(z);
        let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(eps, delta) in &self.points {
            for (v, ln_slope) in [
                (1.0 - delta - eps.exp() * alpha, eps),
                ((-eps).exp() * (1.0 - delta - alpha), -eps),
            ] {
                if v > best.0 {
                    best = (v, ln_slope);
                }
            }
        }
        if best.0 > 0.0 {
            best.1
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// δ_MA(ε) for a configuration, built and discarded in one call.
pub fn delta_ma(eps: f64, cfg: &MomentsAccountantConfig, mode: LambdaMode) -> Result<f64> {
    MomentsAccountant::new(cfg.clone())?.delta(eps, mode)
}

/// ε_MA(δ) on the λ grid.
pub fn eps_ma(delta: f64, cfg: &MomentsAccountantConfig) -> Result<f64> {
    MomentsAccountant::new(cfg.clone())?.eps(delta, LambdaMode::Grid)
}

/// The envelope trade-off function at a single α.
pub fn ma_tradeoff_envelope(cfg: &MomentsAccountantConfig, alpha: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    let envelope = MomentsAccountant::new(cfg.clone())?.envelope(LambdaMode::Grid, 2000)?;
    Ok(envelope.value(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{delta_from_eps, steps_from_epochs};
    use crate::functionals::clt_mu_subsampled_gaussian;
    use crate::tradeoff::TradeoffFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    const MNIST_P: f64 = 256.0 / 60000.0;

    #[test]
    fn default_grid_shape() {
        let orders = default_orders();
        assert_eq!(orders.len(), 10 + 60 + 3);
        assert_eq!(orders[0], 1.25);
        assert_eq!(*orders.last().unwrap(), 512.0);
        assert!(orders.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(default_lambda_grid()[0], 0.25);
    }

    #[test]
    fn full_sampling_is_gaussian_renyi() {
        for sigma in [0.5, 1.0, 2.0] {
            for lambda in [0.25, 1.0, 7.0, 63.0] {
                let got = alpha_gm(lambda, sigma, 1.0).unwrap();
                let want = lambda * (lambda + 1.0) / (2.0 * sigma * sigma);
                assert!((got - want).abs() <= 1e-8 * want, "{sigma} {lambda}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn vanishing_sampling_gives_zero() {
        assert_eq!(alpha_gm(3.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(alpha_gm(3.0, 1.0, 1e-9).unwrap() < 1e-15);
    }

    #[test]
    fn alpha_gm_matches_monte_carlo() {
        let (lambda, sigma, p) = (2.0_f64, 1.0_f64, 0.1_f64);
        let opts = MomentsAccountantConfig::new(sigma, p, 1).unwrap().quadrature;
        let (fwd, bwd) = alpha_gm_components(lambda, sigma, p, &opts).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 10_000_000usize;
        let (mut s1, mut s1sq, mut s2, mut s2sq) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let ratio = 1.0 - p + p * (z / sigma - 0.5 / (sigma * sigma)).exp();
            let a = ratio.powf(lambda + 1.0);
            let b = ratio.powf(-lambda);
            s1 += a;
            s1sq += a * a;
            s2 += b;
            s2sq += b * b;
        }
        let nf = n as f64;
        for (sum, sumsq, exact) in [(s1, s1sq, fwd), (s2, s2sq, bwd)] {
            let mean = sum / nf;
            let se = ((sumsq / nf - mean * mean) / nf).sqrt();
            assert!((mean - exact.exp()).abs() < 3.0 * se, "{mean} vs {} (se {se})", exact.exp());
        }
    }

    #[test]
    fn alpha_gm_increases_with_sampling_rate() {
        for sigma in [0.6, 1.0, 2.0] {
            for lambda in [0.5, 2.0, 10.0] {
                let values: Vec<f64> = [0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 1.0]
                    .iter()
                    .map(|&p| alpha_gm(lambda, sigma, p).unwrap())
                    .collect();
                assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
            }
        }
    }

    fn table_one(sigma: f64, epochs: f64) -> MomentsAccountant {
        let steps = steps_from_epochs(epochs, 60000, 256).unwrap();
        MomentsAccountant::new(MomentsAccountantConfig::new(sigma, MNIST_P, steps).unwrap()).unwrap()
    }

    #[test]
    fn table_one_row_one_delta() {
        let ma = table_one(1.3, 15.0);
        let d = ma.delta(1.19, LambdaMode::Grid).unwrap();
        assert!(d > 0.5e-5 && d < 2e-5, "{d}");
        assert_eq!(ma.delta(0.0, LambdaMode::Grid).unwrap(), 1.0);
    }

    #[test]
    fn table_one_row_three_eps() {
        let ma = table_one(0.7, 45.0);
        assert!((ma.eps(1e-5, LambdaMode::Grid).unwrap() - 7.10).abs() < 0.1);
    }

    #[test]
    fn delta_is_monotone_in_eps() {
        let ma = table_one(1.1, 60.0);
        let deltas: Vec<f64> = (0..50)
            .map(|i| ma.delta(0.1 * i as f64, LambdaMode::Grid).unwrap())
            .collect();
        assert!(deltas.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn eps_and_delta_are_inverse() {
        let ma = table_one(1.1, 60.0);
        for mode in [LambdaMode::Grid, LambdaMode::Continuous] {
            let eps = ma.eps(1e-5, mode).unwrap();
            let d = ma.delta(eps, mode).unwrap();
            assert!((d / 1e-5 - 1.0).abs() < 1e-3, "{mode:?}: {d}");
        }
    }

    #[test]
    fn gap_above_clt_at_scale() {
        for steps in [1_000u64, 10_000, 100_000] {
            let p = 1.0 / (steps as f64).sqrt();
            for sigma in [0.7, 1.1, 1.3] {
                let ma = MomentsAccountant::new(MomentsAccountantConfig::new(sigma, p, steps).unwrap()).unwrap();
                let mu = clt_mu_subsampled_gaussian(p, steps, sigma).unwrap();
                for eps in [0.5_f64, 1.0, 2.0] {
                    let dma = ma.delta(eps, LambdaMode::Continuous).unwrap();
                    let dclt = delta_from_eps(mu, eps).unwrap();
                    let bound = eps.exp() * normal::cdf(-eps / mu - mu / 2.0);
                    assert!(dma - dclt >= bound - 1e-4, "T {steps} sigma {sigma} eps {eps}");
                }
            }
        }
    }

    #[test]
    fn envelope_properties() {
        let ma = table_one(1.1, 60.0);
        let env = ma.envelope(LambdaMode::Grid, 2000).unwrap();
        let inf_delta = env.points().iter().map(|p| p.1).fold(1.0, f64::min);
        assert!((env.value(0.0) - (1.0 - inf_delta)).abs() < 1e-15);
        // At least as private as the single (ε_MA, 1e-5) point.
        let eps = ma.eps(1e-5, LambdaMode::Grid).unwrap();
        let point = TradeoffFunction::eps_delta(eps, 1e-5).unwrap();
        let grid = env.to_grid(&AlphaGrid::uniform(1001));
        let env_min = TradeoffFunction::Grid(grid.clone()).min_error_sum();
        assert!(env_min >= point.min_error_sum() - 1e-3);
        GridTradeoff::new(grid.alphas().to_vec(), grid.betas().to_vec()).unwrap();
    }

    #[test]
    fn envelope_below_gaussian_limit() {
        let steps = 100_000u64;
        let (sigma, p) = (1.0, 1.0 / (steps as f64).sqrt());
        let cfg = MomentsAccountantConfig::new(sigma, p, steps).unwrap();
        let env = MomentsAccountant::new(cfg).unwrap().envelope(LambdaMode::Grid, 2000).unwrap();
        let mu = clt_mu_subsampled_gaussian(p, steps, sigma).unwrap();
        let g = TradeoffFunction::Gaussian { mu };
        for i in 0..100 {
            let a = i as f64 / 99.0;
            assert!(env.value(a) <= g.value(a) + 0.01, "alpha {a}");
        }
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(MomentsAccountantConfig::with_lambda_grid(1.0, 0.1, 10, vec![]).is_err());
        assert!(MomentsAccountantConfig::with_lambda_grid(1.0, 0.1, 10, vec![2.0, 1.0]).is_err());
        assert!(MomentsAccountantConfig::with_lambda_grid(1.0, 0.1, 10, vec![0.0, 1.0]).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(20))]
        #[test]
        fn continuous_refines_grid(
            sigma in 0.5..3.0f64,
            p in 0.0005..0.2f64,
            steps in 1u64..50_000,
            eps in 0.0..8.0f64,
        ) {
            let cfg = MomentsAccountantConfig::new(sigma, p, steps).unwrap();
            let ma = MomentsAccountant::new(cfg).unwrap();
            let g = ma.delta(eps, LambdaMode::Grid).unwrap();
            let c = ma.delta(eps, LambdaMode::Continuous).unwrap();
            proptest::prop_assert!(g >= c);
        }
    }
}
