//! Signal functions, feature distributions, noise and dataset generation for
//! the regression model `y_i = f*(x_i) + ε_i` on `[0,1]^p`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, LabRng};

/// Number of points used when a component's properties are checked by
/// sampling (derivative bounds, critical points, convexity).
pub const SCAN_POINTS: usize = 4096;

/// A smooth univariate expression with an analytic derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Curve {
    /// `Σ c_i t^i`.
    Polynomial { coefficients: Vec<f64> },
    /// `amplitude · sin(frequency · t + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `scale · exp(rate · t)`.
    Exp { scale: f64, rate: f64 },
    Sum { terms: Vec<Curve> },
}

impl Curve {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Curve::Polynomial { coefficients } => horner(coefficients, t),
            Curve::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Curve::Exp { scale, rate } => scale * (rate * t).exp(),
            Curve::Sum { terms } => terms.iter().map(|c| c.value(t)).sum(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Curve::Polynomial { coefficients } => horner(&poly_derivative(coefficients), t),
            Curve::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * frequency * (frequency * t + phase).cos(),
            Curve::Exp { scale, rate } => scale * rate * (rate * t).exp(),
            Curve::Sum { terms } => terms.iter().map(|c| c.derivative(t)).sum(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Curve::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            Curve::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
            Curve::Exp { scale, rate } => scale.is_finite() && rate.is_finite(),
            Curve::Sum { terms } => terms.iter().all(Curve::is_finite),
        }
    }
}

fn horner(coefficients: &[f64], t: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect()
}

/// Coefficients of `t ↦ g(shift + scale · t)` for the polynomial `g`.
pub fn compose_affine(coefficients: &[f64], shift: f64, scale: f64) -> Vec<f64> {
    // Horner in polynomial arithmetic: acc = acc * (shift + scale t) + c
    let mut acc: Vec<f64> = Vec::new();
    for &c in coefficients.iter().rev() {
        let mut next = vec![0.0; acc.len() + 1];
        for (i, &a) in acc.iter().enumerate() {
            next[i] += a * shift;
            next[i + 1] += a * scale;
        }
        next[0] += c;
        acc = next;
    }
    acc
}

/// One additive component `f*_k` of a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UnivariateComponent {
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// A curve whose derivative stays in `[c1, c2]` with `c1 > 0`.
    StronglyIncreasing { c1: f64, c2: f64, curve: Curve },
    /// A curve that is `l`-smooth and `sigma`-strongly convex.
    SmoothStronglyConvex {
        #[serde(rename = "L", alias = "l")]
        l: f64,
        sigma: f64,
        curve: Curve,
    },
    Polynomial { coefficients: Vec<f64> },
    /// Pieces on `[t_{j-1}, t_j)` (last piece closed), each evaluated in the
    /// global coordinate. `breakpoints` runs from `t_0 = 0` to `t_r = 1`.
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<UnivariateComponent>,
        alpha: f64,
        beta: f64,
    },
    /// Continuous piecewise-linear interpolation through `(knots, values)`,
    /// extended linearly beyond the outer knots.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl UnivariateComponent {
    pub fn constant(c: f64) -> Self {
        UnivariateComponent::Polynomial {
            coefficients: vec![c],
        }
    }

    pub fn identity() -> Self {
        UnivariateComponent::Linear {
            slope: 1.0,
            intercept: 0.0,
        }
    }

    /// Right-continuous value.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            UnivariateComponent::Linear { slope, intercept } => intercept + slope * t,
            UnivariateComponent::StronglyIncreasing { curve, .. }
            | UnivariateComponent::SmoothStronglyConvex { curve, .. } => curve.value(t),
            UnivariateComponent::Polynomial { coefficients } => horner(coefficients, t),
            UnivariateComponent::Piecewise {
                breakpoints, pieces, ..
            } => pieces[piece_index(breakpoints, t)].value(t),
            UnivariateComponent::Tabulated { knots, values } => {
                let (i, slope) = segment(knots, values, t);
                values[i] + slope * (t - knots[i])
            }
        }
    }

    /// Derivative of the smooth piece containing `t` (right piece at a
    /// breakpoint).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            UnivariateComponent::Linear { slope, .. } => *slope,
            UnivariateComponent::StronglyIncreasing { curve, .. }
            | UnivariateComponent::SmoothStronglyConvex { curve, .. } => curve.derivative(t),
            UnivariateComponent::Polynomial { coefficients } => {
                horner(&poly_derivative(coefficients), t)
            }
            UnivariateComponent::Piecewise {
                breakpoints, pieces, ..
            } => pieces[piece_index(breakpoints, t)].derivative(t),
            UnivariateComponent::Tabulated { knots, values } => segment(knots, values, t).1,
        }
    }

    /// `lim_{s→t-} g(s)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self {
            UnivariateComponent::Piecewise {
                breakpoints, pieces, ..
            } => {
                let r = pieces.len();
                match breakpoints[1..r].iter().position(|&b| b == t) {
                    Some(j) => pieces[j].left_limit(t),
                    None => pieces[piece_index(breakpoints, t)].left_limit(t),
                }
            }
            _ => self.value(t),
        }
    }

    /// Points where the component is not smooth: piece boundaries and
    /// tabulation knots.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            UnivariateComponent::Piecewise {
                breakpoints, pieces, ..
            } => {
                let mut out: Vec<f64> = breakpoints.clone();
                for (j, piece) in pieces.iter().enumerate() {
                    let (lo, hi) = (breakpoints[j], breakpoints[j + 1]);
                    out.extend(piece.breakpoints().into_iter().filter(|&t| t > lo && t < hi));
                }
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
            UnivariateComponent::Tabulated { knots, .. } => knots.clone(),
            _ => Vec::new(),
        }
    }

    /// Jump locations and signed sizes `g(t+) − g(t−)`.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .breakpoints()
            .into_iter()
            .map(|t| (t, self.value(t) - self.left_limit(t)))
            .filter(|(_, d)| d.abs() > 1e-15)
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// LRP constant implied by the component's class, when one is known.
    pub fn closed_form_tau(&self) -> Option<f64> {
        let two_sqrt3 = 2.0 * 3f64.sqrt();
        match self {
            UnivariateComponent::Linear { slope, .. } if *slope != 0.0 => Some(two_sqrt3),
            UnivariateComponent::StronglyIncreasing { c1, c2, .. } => Some(two_sqrt3 * c2 / c1),
            UnivariateComponent::SmoothStronglyConvex { l, sigma, .. } => Some(110.0 * l / sigma),
            _ => None,
        }
    }

    /// Checks the hypotheses attached to the component's class.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        match self {
            UnivariateComponent::Linear { slope, intercept } => {
                if !slope.is_finite() || !intercept.is_finite() {
                    return bad("linear component has non-finite parameters".into());
                }
            }
            UnivariateComponent::StronglyIncreasing { c1, c2, curve } => {
                if !(c1.is_finite() && c2.is_finite() && *c1 > 0.0 && c1 <= c2) {
                    return bad(format!("strongly-increasing needs 0 < c1 <= c2, got c1={c1}, c2={c2}"));
                }
                if !curve.is_finite() {
                    return bad("curve has non-finite parameters".into());
                }
                let slack = 1e-12 * c2.abs().max(1.0);
                for i in 0..=SCAN_POINTS {
                    let t = i as f64 / SCAN_POINTS as f64;
                    let d = curve.derivative(t);
                    if d < c1 - slack || d > c2 + slack {
                        return bad(format!(
                            "derivative {d} at t={t} leaves [{c1}, {c2}]"
                        ));
                    }
                }
            }
            UnivariateComponent::SmoothStronglyConvex { l, sigma, curve } => {
                if !(sigma.is_finite() && l.is_finite() && *sigma > 0.0 && sigma <= l) {
                    return bad(format!("smooth-strongly-convex needs 0 < sigma <= L, got L={l}, sigma={sigma}"));
                }
                if !curve.is_finite() {
                    return bad("curve has non-finite parameters".into());
                }
                const GRID: usize = 64;
                for i in 0..=GRID {
                    for k in 0..=GRID {
                        let t = i as f64 / GRID as f64;
                        let s = k as f64 / GRID as f64;
                        let gap = curve.value(t) - curve.value(s) - curve.derivative(s) * (t - s);
                        let q = 0.5 * (t - s) * (t - s);
                        let slack = 1e-10 * (1.0 + gap.abs());
                        if gap < sigma * q - slack || gap > l * q + slack {
                            return bad(format!(
                                "convexity bounds fail at t={t}, s={s}: gap {gap}"
                            ));
                        }
                    }
                }
            }
            UnivariateComponent::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return bad("polynomial needs finite coefficients".into());
                }
            }
            UnivariateComponent::Piecewise {
                breakpoints,
                pieces,
                alpha,
                beta,
            } => {
                let r = pieces.len();
                if r == 0 || breakpoints.len() != r + 1 {
                    return bad(format!(
                        "piecewise component needs r+1 breakpoints for r pieces, got {} and {r}",
                        breakpoints.len()
                    ));
                }
                if breakpoints[0] != 0.0 || breakpoints[r] != 1.0 {
                    return bad("piecewise breakpoints must start at 0 and end at 1".into());
                }
                if !(*alpha > 0.0) || !(*beta >= 1.0) {
                    return bad(format!("piecewise needs alpha > 0 and beta >= 1, got {alpha}, {beta}"));
                }
                let min_gap = alpha / r as f64;
                for w in breakpoints.windows(2) {
                    if w[1] - w[0] < min_gap * (1.0 - 1e-12) {
                        return bad(format!(
                            "breakpoint gap {} below alpha/r = {min_gap}",
                            w[1] - w[0]
                        ));
                    }
                }
                for piece in pieces {
                    piece.validate()?;
                }
            }
            UnivariateComponent::Tabulated { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return bad("tabulated component needs at least two (knot, value) pairs".into());
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulation knots must be strictly increasing".into());
                }
                if values.iter().chain(knots).any(|v| !v.is_finite()) {
                    return bad("tabulation has non-finite entries".into());
                }
            }
        }
        Ok(())
    }

    /// `sup_{t∈[0,1]} |g(t)|`, located through endpoints, one-sided limits
    /// at breakpoints and bracketed critical points of the smooth pieces.
    pub fn sup_abs(&self) -> f64 {
        let mut edges = vec![0.0];
        edges.extend(self.breakpoints().into_iter().filter(|&t| t > 0.0 && t < 1.0));
        edges.push(1.0);
        let mut best: f64 = 0.0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            best = best.max(self.value(a).abs()).max(self.left_limit(b).abs());
            let steps = SCAN_POINTS;
            let h = (b - a) / steps as f64;
            // derivative inside the piece, avoiding the right-piece convention at b
            let deriv = |t: f64| self.derivative(t.min(b - 0.25 * h));
            let mut prev_t = a;
            let mut prev_d = deriv(a);
            for i in 1..=steps {
                let t = if i == steps { b } else { a + h * i as f64 };
                let d = deriv(t);
                let v = if i == steps { self.left_limit(b) } else { self.value(t) };
                best = best.max(v.abs());
                if prev_d.signum() != d.signum() {
                    let c = bisect_root(&deriv, prev_t, t, prev_d);
                    best = best.max(self.value(c).abs());
                }
                prev_t = t;
                prev_d = d;
            }
        }
        best
    }

    /// Edges of the sub-intervals of `[a, b]` on which the component is
    /// smooth and `g'` keeps one sign: breakpoints plus bracketed sign
    /// changes of `g'` found on a scan of each piece.
    pub fn smooth_panels(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pieces = vec![a];
        pieces.extend(self.breakpoints().into_iter().filter(|&t| t > a && t < b));
        pieces.push(b);
        let mut edges = vec![a];
        for w in pieces.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let h = (hi - lo) / SCAN_POINTS as f64;
            let deriv = |t: f64| self.derivative(t.clamp(lo, hi - 0.25 * h));
            let mut prev_t = lo;
            let mut prev_d = deriv(lo);
            for i in 1..=SCAN_POINTS {
                let t = if i == SCAN_POINTS { hi } else { lo + h * i as f64 };
                let d = deriv(t);
                if prev_d != 0.0 && d != 0.0 && prev_d.signum() != d.signum() {
                    edges.push(bisect_root(&deriv, prev_t, t, prev_d));
                }
                prev_t = t;
                prev_d = d;
            }
            edges.push(hi);
        }
        edges.dedup();
        edges
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]` given `f(lo)`.
pub(crate) fn bisect_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let s_lo = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn piece_index(breakpoints: &[f64], t: f64) -> usize {
    let r = breakpoints.len() - 1;
    // first j with t < t_{j+1}; the last piece also takes t_r and beyond
    breakpoints[1..r]
        .iter()
        .position(|&b| t < b)
        .unwrap_or(r - 1)
}

fn segment(knots: &[f64], values: &[f64], t: f64) -> (usize, f64) {
    let last = knots.len() - 2;
    let i = knots[1..=last].iter().position(|&k| t < k).unwrap_or(last);
    let slope = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    (i, slope)
}

/// The shape of a signal `f*` on `[0,1]^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalKind {
    /// `f*(u) = Σ_k f*_k(u_k)`.
    Additive { components: Vec<UnivariateComponent> },
    /// `1{u ∈ [0,½)²} + 1{u ∈ [½,1]²}`.
    Xor2d,
    /// Piecewise constant on a regular grid; `values` is row-major with the
    /// last axis fastest.
    Grid {
        cells_per_axis: Vec<usize>,
        values: Vec<f64>,
    },
}

/// A validated signal together with its sup-norm bound `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalKind", into = "SignalKind")]
pub struct SignalFunction {
    kind: SignalKind,
    bound: f64,
}

impl TryFrom<SignalKind> for SignalFunction {
    type Error = Error;
    fn try_from(kind: SignalKind) -> Result<Self> {
        Self::new(kind)
    }
}

impl From<SignalFunction> for SignalKind {
    fn from(f: SignalFunction) -> Self {
        f.kind
    }
}

impl SignalFunction {
    pub fn new(kind: SignalKind) -> Result<Self> {
        let bound = match &kind {
            SignalKind::Additive { components } => {
                if components.is_empty() {
                    return Err(Error::Configuration("additive signal needs at least one component".into()));
                }
                let mut m = 0.0;
                for c in components {
                    c.validate()?;
                    m += c.sup_abs();
                }
                m
            }
            SignalKind::Xor2d => 1.0,
            SignalKind::Grid {
                cells_per_axis,
                values,
            } => {
                if cells_per_axis.is_empty() || cells_per_axis.contains(&0) {
                    return Err(Error::Configuration("grid signal needs positive cell counts".into()));
                }
                let total: usize = cells_per_axis.iter().product();
                if values.len() != total {
                    return Err(Error::Configuration(format!(
                        "grid signal expects {total} values, got {}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Configuration("grid signal has non-finite values".into()));
                }
                values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
            }
        };
        Ok(Self {
            kind,
            bound: bound * (1.0 + 1e-12),
        })
    }

    pub fn additive(components: Vec<UnivariateComponent>) -> Result<Self> {
        Self::new(SignalKind::Additive { components })
    }

    pub fn xor2d() -> Self {
        Self::new(SignalKind::Xor2d).expect("xor signal is always valid")
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    /// Sup-norm bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SignalKind::Additive { components } => components.len(),
            SignalKind::Xor2d => 2,
            SignalKind::Grid { cells_per_axis, .. } => cells_per_axis.len(),
        }
    }

    pub fn components(&self) -> Option<&[UnivariateComponent]> {
        match &self.kind {
            SignalKind::Additive { components } => Some(components),
            _ => None,
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.kind, SignalKind::Additive { .. })
    }

    /// Evaluates without the domain check.
    pub fn value(&self, u: &[f64]) -> f64 {
        match &self.kind {
            SignalKind::Additive { components } => {
                components.iter().zip(u).map(|(c, &t)| c.value(t)).sum()
            }
            SignalKind::Xor2d => {
                let lo = |t: f64| t < 0.5;
                if lo(u[0]) == lo(u[1]) {
                    1.0
                } else {
                    0.0
                }
            }
            SignalKind::Grid {
                cells_per_axis,
                values,
            } => {
                let mut idx = 0;
                for (&k, &t) in cells_per_axis.iter().zip(u) {
                    let i = ((t * k as f64).floor() as usize).min(k - 1);
                    idx = idx * k + i;
                }
                values[idx]
            }
        }
    }

    /// Non-smooth points of the signal along each axis.
    pub fn breakpoints(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            SignalKind::Additive { components } => {
                components.iter().map(UnivariateComponent::breakpoints).collect()
            }
            SignalKind::Xor2d => vec![vec![0.5], vec![0.5]],
            SignalKind::Grid { cells_per_axis, .. } => cells_per_axis
                .iter()
                .map(|&k| (1..k).map(|i| i as f64 / k as f64).collect())
                .collect(),
        }
    }
}

/// `f*(u)` with a check that `u` lies in the unit cube of the right dimension.
pub fn evaluate_signal(f: &SignalFunction, u: &[f64]) -> Result<f64> {
    check_point(u, f.dim())?;
    Ok(f.value(u))
}

pub(crate) fn check_point(u: &[f64], p: usize) -> Result<()> {
    if u.len() != p {
        return Err(Error::Configuration(format!(
            "point has dimension {}, expected {p}",
            u.len()
        )));
    }
    if u.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Domain { point: u.to_vec() });
    }
    Ok(())
}

/// Density of one coordinate of the feature law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoordinateDensity {
    Uniform,
    /// `densities[i]` on `[breakpoints[i], breakpoints[i+1])`; breakpoints
    /// run from 0 to 1.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
}

impl CoordinateDensity {
    fn validate(&self) -> Result<()> {
        if let CoordinateDensity::PiecewiseConstant {
            breakpoints,
            densities,
        } = self
        {
            let k = densities.len();
            if k == 0 || breakpoints.len() != k + 1 {
                return Err(Error::Configuration("piecewise density needs k densities and k+1 breakpoints".into()));
            }
            if breakpoints[0] != 0.0 || breakpoints[k] != 1.0 {
                return Err(Error::Configuration("density breakpoints must run from 0 to 1".into()));
            }
            if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Configuration("density breakpoints must be strictly increasing".into()));
            }
            if densities.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::Configuration("densities must be positive and finite".into()));
            }
            let total: f64 = densities
                .iter()
                .zip(breakpoints.windows(2))
                .map(|(d, w)| d * (w[1] - w[0]))
                .sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Configuration(format!("density integrates to {total}, not 1")));
            }
        }
        Ok(())
    }

    pub fn density(&self, t: f64) -> f64 {
        match self {
            CoordinateDensity::Uniform => 1.0,
            CoordinateDensity::PiecewiseConstant {
                breakpoints,
                densities,
            } => densities[piece_index(breakpoints, t)],
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            CoordinateDensity::Uniform => t,
            CoordinateDensity::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                let mut acc = 0.0;
                for (d, w) in densities.iter().zip(breakpoints.windows(2)) {
                    if t <= w[0] {
                        break;
                    }
                    acc += d * (t.min(w[1]) - w[0]);
                }
                acc.min(1.0)
            }
        }
    }

    /// `P(a ≤ X_k ≤ b)`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        match self {
            CoordinateDensity::Uniform => (b.min(1.0) - a.max(0.0)).max(0.0),
            _ => (self.cdf(b) - self.cdf(a)).max(0.0),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            CoordinateDensity::Uniform => u,
            CoordinateDensity::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                let mut acc = 0.0;
                for (d, w) in densities.iter().zip(breakpoints.windows(2)) {
                    let m = d * (w[1] - w[0]);
                    if u <= acc + m {
                        return (w[0] + (u - acc) / d).clamp(w[0], w[1]);
                    }
                    acc += m;
                }
                1.0
            }
        }
    }

    pub fn interior_breakpoints(&self) -> Vec<f64> {
        match self {
            CoordinateDensity::Uniform => Vec::new(),
            CoordinateDensity::PiecewiseConstant { breakpoints, .. } => {
                breakpoints[1..breakpoints.len() - 1].to_vec()
            }
        }
    }

    fn min_density(&self) -> f64 {
        match self {
            CoordinateDensity::Uniform => 1.0,
            CoordinateDensity::PiecewiseConstant { densities, .. } => {
                densities.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn max_density(&self) -> f64 {
        match self {
            CoordinateDensity::Uniform => 1.0,
            CoordinateDensity::PiecewiseConstant { densities, .. } => {
                densities.iter().copied().fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub coordinates: Vec<CoordinateDensity>,
}

/// Product law `μ` on `[0,1]^p` with density bounds `θ̲ ≤ p_X ≤ θ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct ProductDistribution {
    coordinates: Vec<CoordinateDensity>,
    theta_lower: f64,
    theta_upper: f64,
}

impl TryFrom<DistributionSpec> for ProductDistribution {
    type Error = Error;
    fn try_from(spec: DistributionSpec) -> Result<Self> {
        Self::new(spec.coordinates)
    }
}

impl From<ProductDistribution> for DistributionSpec {
    fn from(d: ProductDistribution) -> Self {
        DistributionSpec {
            coordinates: d.coordinates,
        }
    }
}

impl ProductDistribution {
    pub fn new(coordinates: Vec<CoordinateDensity>) -> Result<Self> {
        if coordinates.is_empty() {
            return Err(Error::Configuration("distribution needs at least one coordinate".into()));
        }
        for c in &coordinates {
            c.validate()?;
        }
        let theta_lower = coordinates.iter().map(CoordinateDensity::min_density).product();
        let theta_upper = coordinates.iter().map(CoordinateDensity::max_density).product();
        Ok(Self {
            coordinates,
            theta_lower,
            theta_upper,
        })
    }

    pub fn uniform(p: usize) -> Self {
        Self::new(vec![CoordinateDensity::Uniform; p]).expect("uniform law is valid")
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn coordinate(&self, k: usize) -> &CoordinateDensity {
        &self.coordinates[k]
    }

    pub fn coordinates(&self) -> &[CoordinateDensity] {
        &self.coordinates
    }

    /// `θ̲`.
    pub fn theta_lower(&self) -> f64 {
        self.theta_lower
    }

    /// `θ̄`.
    pub fn theta_upper(&self) -> f64 {
        self.theta_upper
    }

    pub fn is_uniform(&self) -> bool {
        self.coordinates
            .iter()
            .all(|c| matches!(c, CoordinateDensity::Uniform))
    }

    pub fn joint_density(&self, u: &[f64]) -> f64 {
        self.coordinates
            .iter()
            .zip(u)
            .map(|(c, &t)| c.density(t))
            .product()
    }

    pub fn sample_point(&self, rng: &mut LabRng) -> Vec<f64> {
        self.coordinates
            .iter()
            .map(|c| c.inverse_cdf(rng.random::<f64>()))
            .collect()
    }
}

/// Zero-mean noise bounded by `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    #[default]
    Zero,
    /// Uniform on `[-m, m]`.
    BoundedUniform { m: f64 },
    /// `±m` with probability ½ each.
    SignedBernoulli { m: f64 },
}

impl NoiseSpec {
    pub fn bound(&self) -> f64 {
        match *self {
            NoiseSpec::Zero => 0.0,
            NoiseSpec::BoundedUniform { m } | NoiseSpec::SignedBernoulli { m } => m,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Zero => 0.0,
            NoiseSpec::BoundedUniform { m } => m * m / 3.0,
            NoiseSpec::SignedBernoulli { m } => m * m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.bound();
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::Configuration(format!("noise bound must be finite and >= 0, got {m}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut LabRng) -> f64 {
        match *self {
            NoiseSpec::Zero => 0.0,
            NoiseSpec::BoundedUniform { m } => m * (2.0 * rng.random::<f64>() - 1.0),
            NoiseSpec::SignedBernoulli { m } => {
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }

    /// `U = M + m` for a signal bound `M`.
    pub fn total_bound(&self, signal_bound: f64) -> f64 {
        signal_bound + self.bound()
    }
}

/// `n` observations in `[0,1]^p`, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    features: Vec<f64>,
    responses: Vec<f64>,
    seed: u64,
}

impl Dataset {
    pub fn new(p: usize, features: Vec<f64>, responses: Vec<f64>, seed: u64) -> Result<Self> {
        let n = responses.len();
        if p == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        if features.len() != n * p {
            return Err(Error::Argument(format!(
                "expected {} feature values for n={n}, p={p}, got {}",
                n * p,
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Domain {
                point: features[(i / p) * p..(i / p + 1) * p].to_vec(),
            });
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::Argument("responses must be finite".into()));
        }
        Ok(Self {
            n,
            p,
            features,
            responses,
            seed,
        })
    }

    /// Responses at given design points: `y_i = f*(x_i) + ε_i`.
    pub fn from_design(
        f: &SignalFunction,
        points: &[Vec<f64>],
        noise: &NoiseSpec,
        seed: u64,
    ) -> Result<Self> {
        let p = f.dim();
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(points.len() * p);
        let mut responses = Vec::with_capacity(points.len());
        for u in points {
            responses.push(evaluate_signal(f, u)? + noise.sample(&mut rng));
            features.extend_from_slice(u);
        }
        Self::new(p, features, responses, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.p + j]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    /// Writes `x1,...,xp,y` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            rec.push(fmt_f64(self.responses[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Parses a CSV with header `x1,...,xp,y`. Errors carry 1-based line
    /// numbers (the header is line 1).
    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            Some(h) => h?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file; expected header x1,...,xp,y".into(),
                })
            }
        };
        let cols = header.len();
        let expected: Vec<String> = (1..cols).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        if cols < 2 || header.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Parse {
                line: 1,
                message: format!("header must be {}", expected.join(",")),
            });
        }
        let p = cols - 1;
        let mut features = Vec::new();
        let mut responses = Vec::new();
        for (k, rec) in records.enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != cols {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {cols} fields, found {}", rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse {field:?} as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: "non-finite value".into(),
                    });
                }
                if j < p {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Parse {
                            line,
                            message: format!("feature x{} = {v} outside [0,1]", j + 1),
                        });
                    }
                    features.push(v);
                } else {
                    responses.push(v);
                }
            }
        }
        if responses.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "no data rows".into(),
            });
        }
        Self::new(p, features, responses, seed)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, 0)
    }
}

/// Draws `n` i.i.d. points `x_i ~ μ` and responses `f*(x_i) + ε_i` from a
/// ChaCha8 stream seeded with `seed`.
pub fn generate_dataset(
    f: &SignalFunction,
    dist: &ProductDistribution,
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    if f.dim() != dist.dim() {
        return Err(Error::Configuration(format!(
            "signal has dimension {} but distribution has {}",
            f.dim(),
            dist.dim()
        )));
    }
    noise.validate()?;
    let p = f.dim();
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * p);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let x = dist.sample_point(&mut rng);
        responses.push(f.value(&x) + noise.sample(&mut rng));
        features.extend_from_slice(&x);
    }
    Dataset::new(p, features, responses, seed)
}

/// JSON sidecar describing how a dataset was generated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    /// `M`.
    pub signal_bound: f64,
    /// `m`.
    pub noise_bound: f64,
    pub signal: SignalFunction,
    pub distribution: ProductDistribution,
    pub noise: NoiseSpec,
}

impl DatasetManifest {
    pub fn new(
        data: &Dataset,
        f: &SignalFunction,
        dist: &ProductDistribution,
        noise: &NoiseSpec,
    ) -> Self {
        Self {
            seed: data.seed(),
            n: data.n(),
            p: data.p(),
            signal_bound: f.bound(),
            noise_bound: noise.bound(),
            signal: f.clone(),
            distribution: dist.clone(),
            noise: *noise,
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
