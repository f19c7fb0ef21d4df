//! Locally reverse Poincaré (LRP) checks for univariate components.
//!
//! A component `g` is in `LRP(Q, τ)` when every `[a, b] ⊆ Q` satisfies
//!
//! ```text
//! (∫_a^b |g'|)² ≤ τ² / (b − a) · inf_w ∫_a^b (g − w)²
//! ```
//!
//! The infimum is attained at the interval mean of `g`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compose_affine, UnivariateComponent};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::rng_from_seed;

const LRP_TOL: Tolerance = Tolerance {
    rel: 1e-12,
    abs: 1e-16,
};

/// Below this `inf_w ∫(g−w)²` counts as zero.
pub const VARIANCE_EPS: f64 = 1e-14;
/// Below this `∫|g'|` counts as zero.
pub const VARIATION_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrpRatio {
    Finite { ratio: f64 },
    /// The interval has variation but (numerically) no fluctuation, so no
    /// finite τ works there.
    Unbounded { variation: f64, variance: f64 },
}

impl LrpRatio {
    pub fn finite(&self) -> Option<f64> {
        match self {
            LrpRatio::Finite { ratio } => Some(*ratio),
            LrpRatio::Unbounded { .. } => None,
        }
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Argument(format!("[{a}, {b}] is not a proper interval")));
    }
    Ok(())
}

/// `∫_a^b |g'|` over the smooth parts (jumps excluded).
pub fn total_variation(g: &UnivariateComponent, a: f64, b: f64) -> Result<f64> {
    let panels = g.smooth_panels(a, b);
    Ok(integrate(|t| g.derivative(t).abs(), a, b, &panels, LRP_TOL)?.value)
}

/// `inf_w ∫_a^b (g − w)²`, attained at the interval mean.
pub fn min_square_deviation(g: &UnivariateComponent, a: f64, b: f64) -> Result<f64> {
    let bps = g.breakpoints();
    let mean = integrate(|t| g.value(t), a, b, &bps, LRP_TOL)?.value / (b - a);
    let v = integrate(
        |t| {
            let d = g.value(t) - mean;
            d * d
        },
        a,
        b,
        &bps,
        LRP_TOL,
    )?;
    Ok(v.value.max(0.0))
}

/// `√[(∫|g'|)² (b−a) / inf_w ∫(g−w)²]` on `[a, b]`.
pub fn interval_lrp_ratio(g: &UnivariateComponent, a: f64, b: f64) -> Result<LrpRatio> {
    check_interval(a, b)?;
    let t = total_variation(g, a, b)?;
    let v = min_square_deviation(g, a, b)?;
    if v <= VARIANCE_EPS {
        if t > VARIATION_EPS {
            return Ok(LrpRatio::Unbounded {
                variation: t,
                variance: v,
            });
        }
        return Ok(LrpRatio::Finite { ratio: 0.0 });
    }
    Ok(LrpRatio::Finite {
        ratio: (t * t * (b - a) / v).sqrt(),
    })
}

/// Sub-intervals over which the LRP ratio is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IntervalFamily {
    /// All pairs of grid points `a + (b−a)·i/k`.
    Grid { k: usize },
    Random { count: usize, seed: u64 },
    GridAndRandom { k: usize, count: usize, seed: u64 },
}

impl Default for IntervalFamily {
    fn default() -> Self {
        IntervalFamily::GridAndRandom {
            k: 50,
            count: 200,
            seed: 0,
        }
    }
}

impl IntervalFamily {
    /// Intervals inside `[lo, hi]`, in a fixed order.
    pub fn intervals(&self, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
        check_interval(lo, hi)?;
        let grid = |k: usize| -> Result<Vec<(f64, f64)>> {
            if k == 0 {
                return Err(Error::Argument("grid family needs k ≥ 1".into()));
            }
            let at = |i: usize| if i == k { hi } else { lo + (hi - lo) * i as f64 / k as f64 };
            Ok((0..k)
                .flat_map(|i| (i + 1..=k).map(move |j| (i, j)))
                .map(|(i, j)| (at(i), at(j)))
                .collect())
        };
        let random = |count: usize, seed: u64| {
            let mut rng = rng_from_seed(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let u = lo + (hi - lo) * rng.random::<f64>();
                let v = lo + (hi - lo) * rng.random::<f64>();
                if u != v {
                    out.push((u.min(v), u.max(v)));
                }
            }
            out
        };
        match *self {
            IntervalFamily::Grid { k } => grid(k),
            IntervalFamily::Random { count, seed } => Ok(random(count, seed)),
            IntervalFamily::GridAndRandom { k, count, seed } => {
                let mut out = grid(k)?;
                out.extend(random(count, seed));
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrpCertificate {
    pub component: UnivariateComponent,
    pub domain: (f64, f64),
    /// Largest ratio over the family; a lower bound on the true constant.
    pub tau_measured: f64,
    pub tau_closed_form: Option<f64>,
    pub family: IntervalFamily,
    pub worst_interval: Option<(f64, f64)>,
    /// First interval where the ratio is unbounded, if any.
    pub unbounded_interval: Option<(f64, f64)>,
    /// For polynomials: `|τ(g on domain) − τ(g∘affine on [0,1])|`.
    pub affine_invariance_residual: Option<f64>,
    pub passed: bool,
}

type Interval = (f64, f64);

/// Largest finite ratio with its interval, and the first unbounded interval.
fn sweep(g: &UnivariateComponent, intervals: &[Interval]) -> Result<(f64, Option<Interval>, Option<Interval>)> {
    let ratios: Vec<LrpRatio> = intervals
        .par_iter()
        .map(|&(a, b)| interval_lrp_ratio(g, a, b))
        .collect::<Result<_>>()?;
    let mut best = 0.0;
    let mut worst = None;
    let mut unbounded = None;
    for (r, &iv) in ratios.iter().zip(intervals) {
        match r {
            LrpRatio::Finite { ratio } => {
                if worst.is_none() || *ratio > best {
                    best = *ratio;
                    worst = Some(iv);
                }
            }
            LrpRatio::Unbounded { .. } => {
                unbounded.get_or_insert(iv);
            }
        }
    }
    Ok((best, worst, unbounded))
}

/// Measures τ over an interval family inside `domain` and compares it with
/// the class constant when one is known.
pub fn certify_lrp(g: &UnivariateComponent, domain: (f64, f64), family: IntervalFamily) -> Result<LrpCertificate> {
    let (lo, hi) = domain;
    let intervals = family.intervals(lo, hi)?;
    let (tau, worst, unbounded) = sweep(g, &intervals)?;
    let closed = g.closed_form_tau();
    let affine_invariance_residual = match g {
        UnivariateComponent::Polynomial { coefficients } => {
            let h = UnivariateComponent::Polynomial {
                coefficients: compose_affine(coefficients, lo, hi - lo),
            };
            let unit = family.intervals(0.0, 1.0)?;
            let (tau_h, _, _) = sweep(&h, &unit)?;
            Some((tau_h - tau).abs())
        }
        _ => None,
    };
    let passed = unbounded.is_none() && closed.is_none_or(|c| tau <= c + 1e-6);
    Ok(LrpCertificate {
        component: g.clone(),
        domain,
        tau_measured: tau,
        tau_closed_form: closed,
        family,
        worst_interval: worst,
        unbounded_interval: unbounded,
        affine_invariance_residual,
        passed,
    })
}

/// `∫_a^b √(q(1−q)) |g'| dt + Σ_{jumps z ∈ (a,b)} √(q(z)(1−q(z))) |Δg(z)|`.
///
/// `extra_breakpoints` marks kinks of `q`.
pub fn weighted_variation<Q: Fn(f64) -> f64>(
    g: &UnivariateComponent,
    a: f64,
    b: f64,
    q: &Q,
    extra_breakpoints: &[f64],
) -> Result<f64> {
    let weight = |t: f64| {
        let v = q(t).clamp(0.0, 1.0);
        (v * (1.0 - v)).sqrt()
    };
    let mut bps = g.smooth_panels(a, b);
    bps.extend_from_slice(extra_breakpoints);
    let smooth = integrate(|t| weight(t) * g.derivative(t).abs(), a, b, &bps, LRP_TOL)?.value;
    let jumps: f64 = g
        .jumps()
        .into_iter()
        .filter(|&(z, _)| z > a && z < b)
        .map(|(z, d)| weight(z) * d.abs())
        .sum();
    Ok(smooth + jumps)
}

/// Both sides of the weighted condition
/// `(∫ √(q(1−q)) dV)² ≤ τ²/(b−a) · inf_w ∫ (g − w)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedLrpCheck {
    /// `(∫ √(q(1−q)) dV)²`.
    pub lhs: f64,
    /// `inf_w ∫ (g − w)² / (b − a)`.
    pub variance_term: f64,
}

impl WeightedLrpCheck {
    /// `τ² · variance_term − lhs`.
    pub fn slack(&self, tau_sq: f64) -> f64 {
        tau_sq * self.variance_term - self.lhs
    }

    /// Smallest `τ²` with non-negative slack; infinite when only the
    /// left side is positive.
    pub fn required_tau_sq(&self) -> f64 {
        if self.lhs <= 0.0 {
            0.0
        } else if self.variance_term <= 0.0 {
            f64::INFINITY
        } else {
            self.lhs / self.variance_term
        }
    }
}

pub fn weighted_lrp_check<Q: Fn(f64) -> f64>(g: &UnivariateComponent, a: f64, b: f64, q: &Q) -> Result<WeightedLrpCheck> {
    check_interval(a, b)?;
    let w = weighted_variation(g, a, b, q, &[])?;
    Ok(WeightedLrpCheck {
        lhs: w * w,
        variance_term: min_square_deviation(g, a, b)? / (b - a),
    })
}

fn check_theta(theta_lower: f64, theta_upper: f64) -> Result<()> {
    if !(theta_lower > 0.0 && theta_upper >= theta_lower && theta_upper.is_finite()) {
        return Err(Error::Argument(format!(
            "need 0 < θ_lower ≤ θ_upper, got {theta_lower}, {theta_upper}"
        )));
    }
    Ok(())
}

/// SID coefficient `4θ̲ / (p · max τ² · θ̄)` implied by per-component LRP
/// constants, clamped to `(0, 1]`.
pub fn sid_from_additive_lrp(taus: &[f64], p: usize, theta_lower: f64, theta_upper: f64) -> Result<f64> {
    if taus.is_empty() || p == 0 {
        return Err(Error::Argument("need at least one τ and p ≥ 1".into()));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Argument("every τ must be positive and finite".into()));
    }
    check_theta(theta_lower, theta_upper)?;
    let tau = taus.iter().copied().fold(0.0, f64::max);
    Ok((4.0 * theta_lower / (p as f64 * tau * tau * theta_upper)).min(1.0))
}

/// `τ² = max{2rθ̄/θ̲, r²/(2α)} · max{9β², 32 + β²}` for piecewise components.
pub fn piecewise_tau_sq(r: usize, alpha: f64, beta: f64, theta_lower: f64, theta_upper: f64) -> Result<f64> {
    if r == 0 || !(alpha > 0.0) || !(beta >= 1.0) {
        return Err(Error::Argument(format!("need r ≥ 1, α > 0, β ≥ 1; got r={r}, α={alpha}, β={beta}")));
    }
    check_theta(theta_lower, theta_upper)?;
    let r = r as f64;
    let a = (2.0 * r * theta_upper / theta_lower).max(r * r / (2.0 * alpha));
    let b = (9.0 * beta * beta).max(32.0 + beta * beta);
    Ok(a * b)
}

/// SID coefficient `θ̲ / (p θ̄ τ²)` for piecewise-LRP components.
pub fn sid_from_piecewise_lrp(
    r: usize,
    alpha: f64,
    beta: f64,
    p: usize,
    theta_lower: f64,
    theta_upper: f64,
) -> Result<f64> {
    if p == 0 {
        return Err(Error::Argument("p must be positive".into()));
    }
    let tau_sq = piecewise_tau_sq(r, alpha, beta, theta_lower, theta_upper)?;
    Ok(theta_lower / (p as f64 * theta_upper * tau_sq))
}

/// Both sides of the jump inequality
/// `inf_w ∫_a^b (h − w)² ≥ min{c−a, b−c} · Δh(c)² / 16`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpBoundCheck {
    pub jump: f64,
    pub min_square_deviation: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Checks the jump inequality for `h` with a jump at `c ∈ (a, b)` that
/// dominates the variation on both sides: `|Δh(c)| > 4 max{∫_a^c |h'|, ∫_c^b |h'|}`.
pub fn jump_bound_check(h: &UnivariateComponent, a: f64, c: f64, b: f64) -> Result<JumpBoundCheck> {
    if !(a < c && c < b) {
        return Err(Error::Argument(format!("need a < c < b, got {a}, {c}, {b}")));
    }
    let jump = h.value(c) - h.left_limit(c);
    let left = total_variation(h, a, c)?;
    let right = total_variation(h, c, b)?;
    if !(jump.abs() > 4.0 * left.max(right)) {
        return Err(Error::Argument(format!(
            "jump {jump} does not exceed 4·max({left}, {right})"
        )));
    }
    let dev = min_square_deviation(h, a, b)?;
    let bound = (c - a).min(b - c) * jump * jump / 16.0;
    Ok(JumpBoundCheck {
        jump,
        min_square_deviation: dev,
        bound,
        slack: dev - bound,
    })
}
