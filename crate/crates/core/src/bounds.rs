//! Rate exponent, depth schedule and the two-term error bound for depth-`d`
//! CART under an SID coefficient `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Argument(format!("λ must lie in (0, 1], got {lambda}")));
    }
    Ok(())
}

/// `φ(λ) = −log₂(1−λ) / (1 − log₂(1−λ))`, with `φ(1) = 1`.
pub fn phi(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 1.0 {
        return Ok(1.0);
    }
    let l = -(-lambda).ln_1p() / std::f64::consts::LN_2;
    Ok(l / (1.0 + l))
}

/// `d = ⌈log₂ n / (1 − log₂(1−λ))⌉`; `d = 1` at `λ = 1`.
pub fn depth_schedule(lambda: f64, n: u64) -> Result<usize> {
    check_lambda(lambda)?;
    if n < 2 {
        return Err(Error::Argument(format!("depth schedule needs n ≥ 2, got {n}")));
    }
    if lambda == 1.0 {
        return Ok(1);
    }
    let l = -(-lambda).ln_1p() / std::f64::consts::LN_2;
    let x = (n as f64).log2() / (1.0 + l);
    // absorb rounding so exact quotients are not pushed up a level
    Ok(((x - 1e-9).ceil() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundParams {
    pub lambda: f64,
    pub depth: usize,
    pub alpha: f64,
    pub n: u64,
    pub p: usize,
    pub delta: f64,
    /// Bound `U` on `|y|`.
    pub u: f64,
    pub var_f: f64,
    /// Universal constant of the variance term.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    /// `2 Var(f*) (1 − λ/(1+α)²)^d`.
    pub bias: f64,
    /// `C 2^d (d ln(np) + ln(1/δ)) U² / (α n)`.
    pub variance: f64,
    pub total: f64,
}

pub fn risk_bound(q: &RiskBoundParams) -> Result<RiskBound> {
    check_lambda(q.lambda)?;
    let positive = [q.alpha, q.u, q.c, q.delta];
    if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || q.n == 0 || q.p == 0 || q.var_f < 0.0 {
        return Err(Error::Argument("bound parameters must be positive".into()));
    }
    if q.delta >= 1.0 {
        return Err(Error::Argument(format!("δ must lie in (0, 1), got {}", q.delta)));
    }
    let d = q.depth as f64;
    let bias = 2.0 * q.var_f * (1.0 - q.lambda / (1.0 + q.alpha).powi(2)).powf(d);
    let logs = d * ((q.n as f64) * q.p as f64).ln() + (1.0 / q.delta).ln();
    let variance = q.c * 2f64.powf(d) * logs / (q.alpha * q.n as f64) * q.u * q.u;
    Ok(RiskBound {
        bias,
        variance,
        total: bias + variance,
    })
}

/// Depth and `α = 1/d` as functions of `n` for a fixed `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    pub lambda: f64,
    pub phi: f64,
}

impl RatePlan {
    pub fn new(lambda: f64) -> Result<Self> {
        Ok(Self {
            lambda,
            phi: phi(lambda)?,
        })
    }

    pub fn depth(&self, n: u64) -> Result<usize> {
        depth_schedule(self.lambda, n)
    }

    pub fn alpha(&self, n: u64) -> Result<f64> {
        Ok(1.0 / self.depth(n)? as f64)
    }

    /// Bound at the scheduled depth with `α = 1/d`.
    pub fn bound(&self, n: u64, p: usize, delta: f64, u: f64, var_f: f64, c: f64) -> Result<RiskBound> {
        let depth = self.depth(n)?;
        risk_bound(&RiskBoundParams {
            lambda: self.lambda,
            depth,
            alpha: 1.0 / depth as f64,
            n,
            p,
            delta,
            u,
            var_f,
            c,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_values() {
        assert!((phi(0.75).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((phi(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(phi(1.0).unwrap(), 1.0);
        assert!(phi(1e-6).unwrap() < 1e-5);
        assert!(phi(0.0).is_err() && phi(1.5).is_err());
    }

    #[test]
    fn phi_is_increasing_in_unit_interval() {
        let vals: Vec<f64> = (1..1000).map(|i| phi(i as f64 / 1000.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
        assert!(vals.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rate_halves_over_factor() {
        let phi = phi(0.75).unwrap();
        let n: f64 = 1000.0;
        let ratio = (n * 2f64.powf(1.5)).powf(-phi) / n.powf(-phi);
        assert!((ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth_schedule(0.75, 4096).unwrap(), 4);
        assert_eq!(depth_schedule(0.75, 2).unwrap(), 1);
        assert_eq!(depth_schedule(0.5, 1024).unwrap(), 5);
        assert!(depth_schedule(0.75, 1).is_err());
        let d: Vec<usize> = (2..5000).map(|n| depth_schedule(0.75, n).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn depth_zero_bound() {
        let b = risk_bound(&RiskBoundParams {
            lambda: 0.75,
            depth: 0,
            alpha: 1.0,
            n: 100,
            p: 3,
            delta: 0.1,
            u: 2.0,
            var_f: 0.5,
            c: 1.0,
        })
        .unwrap();
        assert_eq!(b.bias, 1.0);
        assert!((b.variance - 10f64.ln() / 100.0 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn terms_move_in_opposite_directions_with_depth() {
        let at = |d: usize| {
            risk_bound(&RiskBoundParams {
                lambda: 0.75,
                depth: d,
                alpha: 0.5,
                n: 10_000,
                p: 1,
                delta: 0.05,
                u: 1.25,
                var_f: 1.0 / 12.0,
                c: 1.0,
            })
            .unwrap()
        };
        for d in 0..12 {
            let (a, b) = (at(d), at(d + 1));
            assert!(b.bias < a.bias);
            assert!(b.variance > a.variance);
        }
    }

    fn scheduled(n: u64) -> f64 {
        RatePlan::new(0.75).unwrap().bound(n, 1, 0.05, 1.25, 1.0 / 12.0, 1.0).unwrap().total
    }

    #[test]
    fn windowed_doubling_ratio_approaches_rate() {
        // the depth steps once every three doublings, so compare n with 8n
        let target = 2f64.powf(-2.0 / 3.0);
        for k in 21..=30 {
            let n = 1u64 << k;
            let per_doubling = (scheduled(8 * n) / scheduled(n)).cbrt();
            assert!((per_doubling / target - 1.0).abs() < 0.15, "k={k}: {per_doubling}");
        }
    }

    #[test]
    fn bound_decreases_within_each_depth_level() {
        for k in 4..30 {
            let (a, b) = (1u64 << k, 1u64 << (k + 1));
            let plan = RatePlan::new(0.75).unwrap();
            if plan.depth(a).unwrap() == plan.depth(b).unwrap() {
                assert!(scheduled(b) < scheduled(a), "k={k}");
            }
            assert!(scheduled(8 * a) < scheduled(a), "k={k}");
        }
    }
}
