//! Numerical composition of the subsampled Gaussian mechanism through its
//! privacy loss distribution.
//!
//! A single step is discretized onto the loss grid l_k = k·h so that the
//! discrete distribution has exactly the true hockey-stick divergence
//! δ(l_k) at every grid point, and is linear in e^l in between. Its
//! trade-off function is then the polygon of true tangent lines at slopes
//! −e^{l_k}, which lies below the true curve: the result is pessimistic,
//! never optimistic. Composition is convolution, done by repeated squaring
//! with FFTs.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dual::delta_from_eps;
use crate::error::{Error, Result};
use crate::functionals::{clt_mu_subsampled_gaussian, SIGMA_FLOOR};
use crate::moments::{LambdaMode, MomentsAccountant, MomentsAccountantConfig};
use crate::normal;
use crate::tradeoff::{lower_hull, GridTradeoff, TradeoffFunction};

pub const DEFAULT_SPACING: f64 = 1e-4;

/// Largest probability mass that may be pushed to infinite loss.
pub const TAIL_BUDGET: f64 = 1e-10;

/// Range of the Gaussian noise coordinate covered by the single-step grid.
const NOISE_RANGE: f64 = 9.0;

/// Which of the two neighbouring orderings the loss is measured for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Loss ln(dGM/dP) under GM; its trade-off curve is T(P, GM) = f_p.
    Add,
    /// Loss ln(dP/dGM) under P; its trade-off curve is T(GM, P) = f_p⁻¹.
    Remove,
}

/// A privacy loss distribution on a uniform grid.
///
/// Bin `k` holds the loss (origin + k)·spacing. Mass above the grid sits
/// at +∞ in `tail_mass_high`; mass truncated below was moved up into the
/// lowest bin and is recorded in `tail_mass_low`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLossDistribution {
    origin: i64,
    spacing: f64,
    masses: Vec<f64>,
    tail_mass_low: f64,
    tail_mass_high: f64,
    direction: Direction,
}

/// l ↦ ln(1 − p + p·e^{y/σ − 1/(2σ²)}) and its inverse in y.
struct MixtureLoss {
    shift: f64,
    p: f64,
}

impl MixtureLoss {
    fn at(&self, y: f64) -> f64 {
        let a = self.shift;
        let up = self.p.ln() + a * y - 0.5 * a * a;
        if self.p == 1.0 {
            return up;
        }
        let base = (-self.p).ln_1p();
        let m = up.max(base);
        m + ((up - m).exp() + (base - m).exp()).ln()
    }

    /// y with loss(y) = l, or −∞ below the infimum of the loss.
    fn threshold(&self, l: f64) -> f64 {
        let a = self.shift;
        let v = (l.exp() - (1.0 - self.p)) / self.p;
        if v > 0.0 {
            (v.ln() + 0.5 * a * a) / a
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Discretizes one step of the subsampled Gaussian mechanism.
pub fn pld_from_subsampled_gaussian(
    sigma: f64,
    p: f64,
    spacing: f64,
    direction: Direction,
) -> Result<PrivacyLossDistribution> {
    if sigma.is_nan() || sigma < SIGMA_FLOOR {
        return Err(Error::SigmaBelowFloor {
            sigma,
            floor: SIGMA_FLOOR,
        });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1]",
        });
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Domain {
            name: "spacing",
            value: spacing,
            domain: "(0, inf)",
        });
    }
    let a = 1.0 / sigma;
    let loss = MixtureLoss { shift: a, p };
    let (lo, hi) = match direction {
        Direction::Add => (
            (loss.at(-NOISE_RANGE) / spacing).floor() as i64,
            (loss.at(a + NOISE_RANGE) / spacing).ceil() as i64,
        ),
        Direction::Remove => (
            (-loss.at(a + NOISE_RANGE) / spacing).floor() as i64,
            (-loss.at(-NOISE_RANGE) / spacing).ceil() as i64,
        ),
    };
    let count = (hi - lo + 1) as usize;
    let losses: Vec<f64> = (0..count).map(|k| (lo + k as i64) as f64 * spacing).collect();
    // Survival and distribution functions of the loss under the
    // alternative and the null, both kept so that bin masses avoid
    // cancellation near 1.
    let mut alt = Vec::with_capacity(count);
    let mut null = Vec::with_capacity(count);
    for &l in &losses {
        let (a_pair, n_pair) = match direction {
            Direction::Add => {
                let c = loss.threshold(l);
                (
                    (
                        p * normal::sf(c - a) + (1.0 - p) * normal::sf(c),
                        p * normal::cdf(c - a) + (1.0 - p) * normal::cdf(c),
                    ),
                    (normal::sf(c), normal::cdf(c)),
                )
            }
            Direction::Remove => {
                let c = loss.threshold(-l);
                (
                    (normal::cdf(c), normal::sf(c)),
                    (
                        p * normal::cdf(c - a) + (1.0 - p) * normal::cdf(c),
                        p * normal::sf(c - a) + (1.0 - p) * normal::sf(c),
                    ),
                )
            }
        };
        alt.push(a_pair);
        null.push(n_pair);
    }
    let between = |v: &[(f64, f64)], k: usize| {
        if v[k].0 > 0.5 {
            (v[k + 1].1 - v[k].1).max(0.0)
        } else {
            (v[k].0 - v[k + 1].0).max(0.0)
        }
    };
    // With N the null survival, the null mass above knot k implied by
    // matching δ at consecutive knots is N_k + r_k.
    let r: Vec<f64> = (0..count - 1)
        .map(|k| {
            let de = losses[k + 1].exp() - losses[k].exp();
            (between(&alt, k) - losses[k + 1].exp() * between(&null, k)) / de
        })
        .collect();
    let mut masses = Vec::with_capacity(count);
    masses.push(losses[0].exp() * (alt[0].1 * (-losses[0]).exp() - r[0]).max(0.0));
    for k in 1..count - 1 {
        let m = between(&null, k - 1) + r[k - 1] - r[k];
        masses.push(losses[k].exp() * m.max(0.0));
    }
    masses.push(losses[count - 1].exp() * (null[count - 2].0 + r[count - 2]).max(0.0));
    let delta: Vec<f64> = (0..count)
        .map(|k| (alt[k].0 - losses[k].exp() * null[k].0).max(0.0))
        .collect();
    let tail = delta[count - 1];
    if tail > TAIL_BUDGET {
        return Err(Error::TailBudget {
            tail_mass: tail,
            budget: TAIL_BUDGET,
        });
    }
    Ok(PrivacyLossDistribution {
        origin: lo,
        spacing,
        masses,
        tail_mass_low: 0.0,
        tail_mass_high: tail,
        direction,
    })
}

impl PrivacyLossDistribution {
    /// Smallest represented loss value.
    pub fn grid_origin(&self) -> f64 {
        self.origin as f64 * self.spacing
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tail_mass_low(&self) -> f64 {
        self.tail_mass_low
    }

    pub fn tail_mass_high(&self) -> f64 {
        self.tail_mass_high
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn loss(&self, k: usize) -> f64 {
        (self.origin + k as i64) as f64 * self.spacing
    }

    /// Σ masses + mass at +∞.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.tail_mass_high
    }

    /// Mean loss of the finite part.
    pub fn mean(&self) -> f64 {
        let (mut m0, mut m1) = (0.0, 0.0);
        for (k, &q) in self.masses.iter().enumerate() {
            m0 += q;
            m1 += q * self.loss(k);
        }
        m1 / m0
    }

    /// Convolution with another distribution on the same grid.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.compose_with_budget(other, TAIL_BUDGET / 4.0)
    }

    fn compose_with_budget(&self, other: &Self, drop_budget: f64) -> Result<Self> {
        if self.spacing != other.spacing || self.direction != other.direction {
            return Err(Error::InvalidGrid(
                "composed distributions must share spacing and direction".into(),
            ));
        }
        let masses = convolve(&self.masses, &other.masses);
        let tail = 1.0 - (1.0 - self.tail_mass_high) * (1.0 - other.tail_mass_high);
        let mut out = Self {
            origin: self.origin + other.origin,
            spacing: self.spacing,
            masses,
            tail_mass_low: self.tail_mass_low + other.tail_mass_low,
            tail_mass_high: tail,
            direction: self.direction,
        };
        out.truncate(drop_budget);
        if out.tail_mass_high > TAIL_BUDGET {
            return Err(Error::TailBudget {
                tail_mass: out.tail_mass_high,
                budget: TAIL_BUDGET,
            });
        }
        Ok(out)
    }

    /// Drops at most `budget` of mass from each end: the top part goes to
    /// +∞ and the bottom part is moved up into the lowest kept bin.
    fn truncate(&mut self, budget: f64) {
        let n = self.masses.len();
        let mut lo = 0;
        let mut low_mass = 0.0;
        while lo + 1 < n && low_mass + self.masses[lo] <= budget {
            low_mass += self.masses[lo];
            lo += 1;
        }
        let mut hi = n;
        let mut high_mass = 0.0;
        while hi > lo + 1 && high_mass + self.masses[hi - 1] <= budget {
            high_mass += self.masses[hi - 1];
            hi -= 1;
        }
        let mut kept = self.masses[lo..hi].to_vec();
        kept[0] += low_mass;
        self.masses = kept;
        self.origin += lo as i64;
        self.tail_mass_low += low_mass;
        self.tail_mass_high += high_mass;
    }

    /// T-fold composition by repeated squaring.
    pub fn self_compose(&self, count: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain {
                name: "T",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        // Mass dropped from a squared base reappears in every later copy of
        // it, so each squaring gets a share scaled by its step count.
        let levels = (64 - count.leading_zeros()) as f64;
        let share = TAIL_BUDGET / (4.0 * levels);
        let mut result: Option<Self> = None;
        let mut base = self.clone();
        let mut base_steps = 1u64;
        let mut t = count;
        loop {
            if t & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.compose_with_budget(&base, share)?,
                });
            }
            t >>= 1;
            if t == 0 {
                break;
            }
            base_steps *= 2;
            base = base.compose_with_budget(&base, share * base_steps as f64 / count as f64)?;
        }
        Ok(result.expect("count >= 1"))
    }

    /// Trade-off curve of the likelihood-ratio tests: T(P, GM^T) for the add
    /// direction, T(GM^T, P) for the remove direction.
    pub fn tradeoff_curve(&self) -> GridTradeoff {
        let bins: Vec<(f64, f64)> = self
            .masses
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(k, &q)| (self.loss(k), q))
            .collect();
        let n = bins.len();
        // β below each threshold, accumulated from the bottom.
        let mut below = vec![0.0; n + 1];
        for j in 0..n {
            below[j + 1] = below[j] + bins[j].1;
        }
        let mut alphas = Vec::with_capacity(n + 2);
        let mut betas = Vec::with_capacity(n + 2);
        alphas.push(0.0);
        betas.push(below[n].min(1.0));
        let mut alpha = 0.0;
        for j in (0..n).rev() {
            let (l, q) = bins[j];
            let null_mass = (-l).exp() * q;
            if null_mass <= 0.0 {
                continue;
            }
            alpha += null_mass;
            if alpha >= 1.0 {
                break;
            }
            alphas.push(alpha);
            betas.push(below[j].min(1.0 - alpha));
        }
        alphas.push(1.0);
        betas.push(0.0);
        GridTradeoff::from_parts(alphas, betas)
    }
}

/// Linear convolution through a zero-padded complex FFT; negative rounding
/// noise is clamped to zero.
fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let load = |x: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &v) in buf.iter_mut().zip(x) {
            slot.re = v;
        }
        buf
    };
    let mut fa = load(a);
    forward.process(&mut fa);
    if std::ptr::eq(a, b) {
        for v in fa.iter_mut() {
            *v = *v * *v;
        }
    } else {
        let mut fb = load(b);
        forward.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..len].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

/// min{f, f⁻¹}** from the composed add and remove distributions.
pub fn pld_to_tradeoff(add: &PrivacyLossDistribution, remove: &PrivacyLossDistribution) -> Result<TradeoffFunction> {
    if add.direction != Direction::Add || remove.direction != Direction::Remove {
        return Err(Error::InvalidGrid(
            "expected one add and one remove distribution".into(),
        ));
    }
    let f = add.tradeoff_curve();
    let f_inv = remove.tradeoff_curve();
    let lower = f.pointwise_min(&f_inv);
    let (alphas, betas) = lower_hull(lower.alphas(), lower.betas());
    Ok(TradeoffFunction::Grid(GridTradeoff::from_parts(alphas, betas)))
}

/// Composed trade-off function of `steps` subsampled Gaussian steps.
pub fn composed_tradeoff(sigma: f64, p: f64, steps: u64, spacing: f64) -> Result<TradeoffFunction> {
    let add = pld_from_subsampled_gaussian(sigma, p, spacing, Direction::Add)?.self_compose(steps)?;
    let remove = pld_from_subsampled_gaussian(sigma, p, spacing, Direction::Remove)?.self_compose(steps)?;
    pld_to_tradeoff(&add, &remove)
}

/// δ_MA(ε), δ_CLT(ε) and the asymptotic lower bound e^ε Φ(−ε/μ − μ/2) on
/// their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub delta_ma: f64,
    pub delta_clt: f64,
    pub lower_bound: f64,
}

impl GapCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.delta_ma - self.delta_clt >= self.lower_bound - tol
    }
}

pub fn gap_check(sigma: f64, p: f64, steps: u64, eps: f64) -> Result<GapCheck> {
    let mu = clt_mu_subsampled_gaussian(p, steps, sigma)?;
    let ma = MomentsAccountant::new(MomentsAccountantConfig::new(sigma, p, steps)?)?;
    let lower_bound = if mu > 0.0 {
        eps.exp() * normal::cdf(-eps / mu - mu / 2.0)
    } else {
        0.0
    };
    Ok(GapCheck {
        delta_ma: ma.delta(eps, LambdaMode::Continuous)?,
        delta_clt: if mu > 0.0 { delta_from_eps(mu, eps)? } else { 0.0 },
        lower_bound,
    })
}
