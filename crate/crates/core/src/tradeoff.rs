//! Trade-off functions and their structural operators.
//!
//! A trade-off function f = T(P, Q) maps a type I error level α to the
//! smallest achievable type II error. Valid trade-off functions are convex,
//! continuous, non-increasing and satisfy f(α) ≤ 1 − α. The closed-form
//! families (Gaussian, (ε, δ), identity) are kept symbolic; everything else
//! is carried as a piecewise-linear [`GridTradeoff`].

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::normal;

/// Slack allowed on discrete convexity and bound checks for grid input.
pub const GRID_SLACK: f64 = 1e-12;

/// Common interface over closed-form and subsampled trade-off functions.
pub trait Tradeoff {
    /// f(α) without domain checks; `alpha` is assumed to lie in [0, 1].
    fn value(&self, alpha: f64) -> f64;

    /// ln |f'(α)| at α = 1 − Φ(z).
    ///
    /// The probit coordinate z spreads the steep region near α = 0 over the
    /// whole positive half-line, which is where the functionals need their
    /// resolution.
    fn ln_slope_at_quantile(&self, z: f64) -> f64;

    fn eval(&self, alpha: f64) -> Result<f64> {
        check_unit("alpha", alpha)?;
        Ok(self.value(alpha))
    }

    /// Convex conjugate f*(x) = sup_α αx − f(α).
    ///
    /// The objective is concave in α, so a ternary search converges to the
    /// supremum; endpoints are compared explicitly.
    fn conjugate(&self, x: f64) -> f64 {
        let objective = |a: f64| a * x - self.value(a);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if objective(m1) < objective(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        objective(0.5 * (lo + hi))
            .max(objective(0.0))
            .max(objective(1.0))
    }

    /// Samples the function onto a grid of α knots.
    fn sample(&self, grid: &AlphaGrid) -> GridTradeoff {
        let betas = grid
            .points()
            .iter()
            .map(|&a| self.value(a).clamp(0.0, 1.0 - a))
            .collect();
        GridTradeoff::from_parts(grid.points().to_vec(), betas)
    }
}

/// A trade-off function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TradeoffFunction {
    /// G_μ(α) = Φ(Φ⁻¹(1 − α) − μ).
    Gaussian { mu: f64 },
    /// f_{ε,δ}(α) = max{0, 1 − δ − e^ε α, e^{−ε}(1 − δ − α)}.
    EpsDelta { eps: f64, delta: f64 },
    /// Id(α) = 1 − α.
    Identity,
    Grid(GridTradeoff),
}

impl TradeoffFunction {
    pub fn gaussian(mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Domain {
                name: "mu",
                value: mu,
                domain: "[0, inf)",
            });
        }
        Ok(if mu == 0.0 {
            TradeoffFunction::Identity
        } else {
            TradeoffFunction::Gaussian { mu }
        })
    }

    pub fn eps_delta(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain {
                name: "eps",
                value: eps,
                domain: "[0, inf)",
            });
        }
        check_unit("delta", delta)?;
        Ok(TradeoffFunction::EpsDelta { eps, delta })
    }

    pub fn grid(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        GridTradeoff::new(alphas, betas).map(TradeoffFunction::Grid)
    }

    /// f⁻¹(α) = inf{t ∈ [0, 1] : f(t) ≤ α}.
    pub fn inverse(&self) -> TradeoffFunction {
        match self {
            // G_μ, f_{ε,δ} and Id are symmetric.
            TradeoffFunction::Gaussian { .. }
            | TradeoffFunction::EpsDelta { .. }
            | TradeoffFunction::Identity => self.clone(),
            TradeoffFunction::Grid(g) => TradeoffFunction::Grid(g.inverse()),
        }
    }

    /// min{f, f⁻¹}**, the greatest convex minorant of min{f, f⁻¹}.
    pub fn symmetrize(&self) -> TradeoffFunction {
        match self {
            TradeoffFunction::Grid(g) => TradeoffFunction::Grid(g.symmetrize()),
            _ => self.clone(),
        }
    }

    /// Piecewise-linear view: the grid itself, or a sample on `grid`.
    pub fn to_grid(&self, grid: &AlphaGrid) -> GridTradeoff {
        match self {
            TradeoffFunction::Grid(g) => g.clone(),
            other => other.sample(grid),
        }
    }

    /// min over α of α + f(α), the smallest total error of any test.
    pub fn min_error_sum(&self) -> f64 {
        match *self {
            TradeoffFunction::Gaussian { mu } => 2.0 * normal::cdf(-0.5 * mu),
            TradeoffFunction::Identity => 1.0,
            TradeoffFunction::EpsDelta { .. } => eps_delta_vertices(self)
                .into_iter()
                .map(|(a, b)| a + b)
                .fold(f64::INFINITY, f64::min),
            TradeoffFunction::Grid(ref g) => g
                .alphas
                .iter()
                .zip(&g.betas)
                .map(|(a, b)| a + b)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn eps_delta_vertices(f: &TradeoffFunction) -> Vec<(f64, f64)> {
    let TradeoffFunction::EpsDelta { eps, delta } = *f else {
        unreachable!()
    };
    let kink = (1.0 - delta) / (1.0 + eps.exp());
    vec![
        (0.0, 1.0 - delta),
        (kink, (-eps).exp() * (1.0 - delta - kink)),
        (1.0 - delta, 0.0),
        (1.0, 0.0),
    ]
}

impl Tradeoff for TradeoffFunction {
    fn value(&self, alpha: f64) -> f64 {
        match *self {
            TradeoffFunction::Gaussian { mu } => {
                if alpha <= 0.0 {
                    1.0
                } else if alpha >= 1.0 {
                    0.0
                } else {
                    normal::sf(mu - normal::isf(alpha))
                }
            }
            TradeoffFunction::EpsDelta { eps, delta } => {
                let steep = 1.0 - delta - eps.exp() * alpha;
                let shallow = (-eps).exp() * (1.0 - delta - alpha);
                steep.max(shallow).max(0.0)
            }
            TradeoffFunction::Identity => 1.0 - alpha,
            TradeoffFunction::Grid(ref g) => g.value(alpha),
        }
    }

    fn ln_slope_at_quantile(&self, z: f64) -> f64 {
        match *self {
            // |G_μ'(α)| = φ(z − μ)/φ(z) with z = Φ⁻¹(1 − α).
            TradeoffFunction::Gaussian { mu } => mu * z - 0.5 * mu * mu,
            TradeoffFunction::Identity => 0.0,
            TradeoffFunction::EpsDelta { eps, delta } => {
                // Compare in z so that α close to 1 keeps its resolution.
                if z > normal::isf((1.0 - delta) / (1.0 + eps.exp())) {
                    eps
                } else if z > normal::isf(1.0 - delta) {
                    -eps
                } else {
                    f64::NEG_INFINITY
                }
            }
            TradeoffFunction::Grid(ref g) => g.slope(normal::sf(z)).abs().ln(),
        }
    }

    fn conjugate(&self, x: f64) -> f64 {
        match *self {
            TradeoffFunction::Gaussian { mu } => {
                if x >= 0.0 {
                    return x;
                }
                let eps = (-x).ln();
                let alpha = normal::cdf(-eps / mu - 0.5 * mu);
                let beta = normal::cdf(eps / mu - 0.5 * mu);
                x * alpha - beta
            }
            TradeoffFunction::Identity => x.max(-1.0),
            TradeoffFunction::EpsDelta { .. } => eps_delta_vertices(self)
                .into_iter()
                .map(|(a, b)| a * x - b)
                .fold(f64::NEG_INFINITY, f64::max),
            TradeoffFunction::Grid(ref g) => g.conjugate(x),
        }
    }
}

/// The subsampling amplification f_p = p·f + (1 − p)·Id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampledTradeoff {
    pub base: TradeoffFunction,
    pub p: f64,
}

/// Amplifies `f` by Poisson subsampling with probability `p`.
pub fn subsample(f: &TradeoffFunction, p: f64) -> Result<SubsampledTradeoff> {
    check_unit("p", p)?;
    Ok(SubsampledTradeoff {
        base: f.clone(),
        p,
    })
}

impl SubsampledTradeoff {
    /// Piecewise-linear version of f_p on the given grid, with the
    /// degenerate rates short-circuited to closed forms.
    pub fn to_tradeoff(&self, grid: &AlphaGrid) -> TradeoffFunction {
        if self.p == 0.0 {
            TradeoffFunction::Identity
        } else if self.p == 1.0 {
            self.base.clone()
        } else {
            TradeoffFunction::Grid(self.sample(grid))
        }
    }

    pub fn inverse(&self, grid: &AlphaGrid) -> TradeoffFunction {
        self.to_tradeoff(grid).inverse()
    }

    /// min{f_p, f_p⁻¹}** resolved on `grid`.
    pub fn symmetrize(&self, grid: &AlphaGrid) -> TradeoffFunction {
        self.to_tradeoff(grid).symmetrize()
    }
}

impl Tradeoff for SubsampledTradeoff {
    fn value(&self, alpha: f64) -> f64 {
        self.p * self.base.value(alpha) + (1.0 - self.p) * (1.0 - alpha)
    }

    fn ln_slope_at_quantile(&self, z: f64) -> f64 {
        // ln(1 + p·g) with g = |f'| − 1, kept accurate for small p.
        let l = self.base.ln_slope_at_quantile(z);
        let p = self.p;
        if p == 0.0 {
            return 0.0;
        }
        if l > 1.0 {
            l + (p + (1.0 - p) * (-l).exp()).ln()
        } else if -p * l.exp_m1() < 0.5 {
            (p * l.exp_m1()).ln_1p()
        } else {
            // ln((1 − p) + p·e^l) as a log-sum-exp; no cancellation here.
            let a = (1.0 - p).ln();
            let b = p.ln() + l;
            let m = a.max(b);
            m + ((a - m).exp() + (b - m).exp()).ln()
        }
    }
}

/// T-fold composition of Gaussian trade-off functions: G_{√Σμᵢ²}.
pub fn compose_gaussian(mus: &[f64]) -> Result<TradeoffFunction> {
    let mut sum = 0.0;
    for &mu in mus {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Domain {
                name: "mu",
                value: mu,
                domain: "[0, inf)",
            });
        }
        sum += mu * mu;
    }
    TradeoffFunction::gaussian(sum.sqrt())
}

/// A piecewise-linear trade-off function given by its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTradeoff {
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

impl GridTradeoff {
    /// Validates and builds a grid trade-off function.
    ///
    /// `alphas` must be strictly increasing from 0 to 1; `betas` must be
    /// non-increasing, discretely convex, and bounded by 1 − α.
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        let n = alphas.len();
        if n < 2 || betas.len() != n {
            return Err(Error::InvalidGrid(format!(
                "need matching knot vectors of length >= 2 (got {} and {})",
                n,
                betas.len()
            )));
        }
        if alphas[0] != 0.0 || alphas[n - 1] != 1.0 {
            return Err(Error::InvalidGrid("alphas must start at 0 and end at 1".into()));
        }
        if alphas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("alphas must be strictly increasing".into()));
        }
        for (i, (&a, &b)) in alphas.iter().zip(&betas).enumerate() {
            if !(b >= -GRID_SLACK) || b > 1.0 - a + GRID_SLACK {
                return Err(Error::InvalidGrid(format!(
                    "beta[{i}] = {b} violates 0 <= f(alpha) <= 1 - alpha at alpha = {a}"
                )));
            }
        }
        if betas.windows(2).any(|w| w[1] > w[0] + GRID_SLACK) {
            return Err(Error::InvalidGrid("betas must be non-increasing".into()));
        }
        for i in 1..n - 1 {
            let left = (betas[i] - betas[i - 1]) / (alphas[i] - alphas[i - 1]);
            let right = (betas[i + 1] - betas[i]) / (alphas[i + 1] - alphas[i]);
            let width = 0.5 * (alphas[i + 1] - alphas[i - 1]);
            if (right - left) * width < -GRID_SLACK {
                return Err(Error::InvalidGrid(format!("not convex at knot {i}")));
            }
        }
        let betas = betas
            .into_iter()
            .zip(&alphas)
            .map(|(b, &a)| b.clamp(0.0, 1.0 - a))
            .collect();
        Ok(Self { alphas, betas })
    }

    /// Builds without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(alphas: Vec<f64>, betas: Vec<f64>) -> Self {
        debug_assert_eq!(alphas.len(), betas.len());
        Self { alphas, betas }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn value(&self, alpha: f64) -> f64 {
        let n = self.alphas.len();
        let j = self.alphas.partition_point(|&a| a <= alpha);
        if j == 0 {
            return self.betas[0];
        }
        if j >= n {
            return self.betas[n - 1];
        }
        let (a0, a1) = (self.alphas[j - 1], self.alphas[j]);
        let (b0, b1) = (self.betas[j - 1], self.betas[j]);
        b0 + (b1 - b0) * (alpha - a0) / (a1 - a0)
    }

    fn knot_derivative(&self, i: usize) -> f64 {
        let n = self.alphas.len();
        let (l, r) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        (self.betas[r] - self.betas[l]) / (self.alphas[r] - self.alphas[l])
    }

    /// f'(α) from central differences on the knots, interpolated linearly.
    pub fn slope(&self, alpha: f64) -> f64 {
        let n = self.alphas.len();
        let j = self.alphas.partition_point(|&a| a <= alpha);
        if j == 0 {
            return self.knot_derivative(0);
        }
        if j >= n {
            return self.knot_derivative(n - 1);
        }
        let (a0, a1) = (self.alphas[j - 1], self.alphas[j]);
        let (d0, d1) = (self.knot_derivative(j - 1), self.knot_derivative(j));
        d0 + (d1 - d0) * (alpha - a0) / (a1 - a0)
    }

    pub fn conjugate(&self, x: f64) -> f64 {
        self.alphas
            .iter()
            .zip(&self.betas)
            .map(|(a, b)| a * x - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Swaps the axes; flat stretches at level 0 resolve to their left end.
    pub fn inverse(&self) -> GridTradeoff {
        let n = self.alphas.len();
        let mut alphas = Vec::with_capacity(n + 1);
        let mut betas: Vec<f64> = Vec::with_capacity(n + 1);
        for i in (0..n).rev() {
            let (a, b) = (self.betas[i], self.alphas[i]);
            match alphas.last() {
                Some(&last) if a <= last => {
                    // Tie on the new axis: keep the infimum.
                    let k = betas.len() - 1;
                    betas[k] = betas[k].min(b);
                }
                _ => {
                    alphas.push(a);
                    betas.push(b);
                }
            }
        }
        if alphas[0] > 0.0 {
            // f(1) > 0 cannot happen for validated input; pin the endpoint.
            alphas.insert(0, 0.0);
            betas.insert(0, 1.0);
        }
        if *alphas.last().unwrap() < 1.0 {
            alphas.push(1.0);
            betas.push(0.0);
        }
        GridTradeoff::from_parts(alphas, betas)
    }

    /// Exact pointwise minimum of two piecewise-linear functions on the
    /// union of their knots plus the crossing points.
    pub fn pointwise_min(&self, other: &GridTradeoff) -> GridTradeoff {
        let mut xs: Vec<f64> = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let next = match (self.alphas.get(i), other.alphas.get(j)) {
                (Some(&a), Some(&b)) if a < b => {
                    i += 1;
                    a
                }
                (Some(&a), Some(&b)) if b < a => {
                    j += 1;
                    b
                }
                (Some(&a), Some(_)) => {
                    i += 1;
                    j += 1;
                    a
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            xs.push(next);
        }
        let fs: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| other.value(x)).collect();
        let mut alphas = Vec::with_capacity(xs.len());
        let mut betas = Vec::with_capacity(xs.len());
        for k in 0..xs.len() {
            if k > 0 {
                let d0 = fs[k - 1] - gs[k - 1];
                let d1 = fs[k] - gs[k];
                if (d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0) {
                    let t = d0 / (d0 - d1);
                    let x = xs[k - 1] + t * (xs[k] - xs[k - 1]);
                    if x > xs[k - 1] && x < xs[k] {
                        alphas.push(x);
                        betas.push(fs[k - 1] + t * (fs[k] - fs[k - 1]));
                    }
                }
            }
            alphas.push(xs[k]);
            betas.push(fs[k].min(gs[k]));
        }
        GridTradeoff::from_parts(alphas, betas)
    }

    /// Lower convex envelope of the knots (Andrew's monotone chain).
    pub fn convex_envelope(&self) -> GridTradeoff {
        let (alphas, betas) = lower_hull(&self.alphas, &self.betas);
        GridTradeoff::from_parts(alphas, betas)
    }

    /// min{f, f⁻¹}**.
    pub fn symmetrize(&self) -> GridTradeoff {
        self.pointwise_min(&self.inverse()).convex_envelope()
    }
}

/// Lower convex hull of points sorted by x.
pub fn lower_hull(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut hx: Vec<f64> = Vec::with_capacity(xs.len());
    let mut hy: Vec<f64> = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        while hx.len() >= 2 {
            let k = hx.len();
            let (ox, oy) = (hx[k - 2], hy[k - 2]);
            let (ax, ay) = (hx[k - 1], hy[k - 1]);
            let cross = (ax - ox) * (y - oy) - (ay - oy) * (x - ox);
            if cross <= 0.0 {
                hx.pop();
                hy.pop();
            } else {
                break;
            }
        }
        hx.push(x);
        hy.push(y);
    }
    (hx, hy)
}

/// Sorted α knots in [0, 1] used to resolve closed-form curves numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    points: Vec<f64>,
}

impl AlphaGrid {
    /// `uniform` evenly spaced knots on [0, 1] plus `log_count` knots spaced
    /// logarithmically in [log_min, 1e-3].
    pub fn new(uniform: usize, log_count: usize, log_min: f64) -> Self {
        let uniform = uniform.max(2);
        let mut points: Vec<f64> = (0..uniform)
            .map(|i| i as f64 / (uniform - 1) as f64)
            .collect();
        if log_count > 0 {
            let (lo, hi) = (log_min.ln(), 1e-3_f64.ln());
            let steps = (log_count.max(2) - 1) as f64;
            points.extend((0..log_count).map(|i| (lo + (hi - lo) * i as f64 / steps).exp()));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self { points }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(n, 0, 0.0)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

impl Default for AlphaGrid {
    /// 10⁴ uniform knots plus 100 log-spaced knots in [1e-12, 1e-3].
    fn default() -> Self {
        Self::new(10_000, 100, 1e-12)
    }
}

/// sup over the grid (and the knots of `f` when it is a grid) of |f − g|.
pub fn sup_distance<F: Tradeoff, G: Tradeoff>(f: &F, g: &G, grid: &AlphaGrid) -> f64 {
    grid.points()
        .iter()
        .map(|&a| (f.value(a) - g.value(a)).abs())
        .fold(0.0, f64::max)
}

/// Like [`sup_distance`] but also evaluates at every knot of `f`.
pub fn sup_distance_grid<G: Tradeoff>(f: &GridTradeoff, g: &G, grid: &AlphaGrid) -> f64 {
    let on_knots = f
        .alphas
        .iter()
        .zip(&f.betas)
        .map(|(&a, &b)| (b - g.value(a)).abs())
        .fold(0.0, f64::max);
    on_knots.max(sup_distance(&TradeoffFunction::Grid(f.clone()), g, grid))
}
