//! Adaptive Gauss–Legendre integration on intervals and boxes.
//!
//! Each panel is integrated with a fixed-order Gauss–Legendre rule and
//! compared against the sum over its two halves. Panels whose discrepancy
//! exceeds their share of the global tolerance are bisected. Callers pass
//! the points where the integrand is not smooth (jumps, kinks, density
//! breakpoints) so that every panel sees a smooth integrand.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Number of Gauss–Legendre nodes per panel.
const ORDER: usize = 10;

/// Deepest bisection level before a panel is declared non-convergent.
const MAX_DEPTH: usize = 48;

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-14;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(ORDER))
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: DEFAULT_REL_TOL,
            abs: DEFAULT_ABS_TOL,
        }
    }
}

/// Sorted, deduplicated panel edges: `a`, the breakpoints strictly inside
/// `(a, b)`, and `b`.
pub fn panel_edges(a: f64, b: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&t| t > a && t < b)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(b);
    edges
}

/// Integrates `f` over `[a, b]`, splitting first at `breakpoints`.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(b > a) {
        return Ok(Integral {
            value: 0.0,
            error_estimate: 0.0,
        });
    }
    let edges = panel_edges(a, b, breakpoints);
    let gl = rule();

    // A rough magnitude for the global tolerance.
    let mut scale = 0.0;
    for w in edges.windows(2) {
        scale += gl.integrate(|x| f(x).abs(), w[0], w[1]);
    }
    let budget = (tol.rel * scale).max(tol.abs);
    let length = b - a;

    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    for w in edges.windows(2) {
        let whole = gl.integrate(&f, w[0], w[1]);
        let ok = adapt(&f, gl, w[0], w[1], whole, budget / length, 0, &mut value, &mut error);
        converged &= ok;
    }
    // Panels stopped by the depth cap are fine while the summed error fits the budget.
    if (!converged && error > budget) || !value.is_finite() {
        return Err(Error::Tolerance {
            estimate: value,
            error_estimate: error,
        });
    }
    Ok(Integral {
        value,
        error_estimate: error,
    })
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    gl: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    density: f64,
    depth: usize,
    value: &mut f64,
    error: &mut f64,
) -> bool {
    let mid = 0.5 * (a + b);
    let left = gl.integrate(f, a, mid);
    let right = gl.integrate(f, mid, b);
    let refined = left + right;
    let diff = (refined - whole).abs();
    let allowed = density * (b - a);
    if diff <= allowed || diff <= 4.0 * f64::EPSILON * refined.abs() {
        *value += refined;
        *error += diff;
        return true;
    }
    if depth >= MAX_DEPTH || mid <= a || mid >= b {
        *value += refined;
        *error += diff;
        return false;
    }
    let l = adapt(f, gl, a, mid, left, density, depth + 1, value, error);
    let r = adapt(f, gl, mid, b, right, density, depth + 1, value, error);
    l && r
}

/// Largest dimension handled by [`integrate_box`].
pub const MAX_BOX_DIM: usize = 3;

/// Integrates over an axis-aligned box (dimension at most 3) by iterated
/// adaptive quadrature.
///
/// `breakpoints[k]` lists the non-smooth points along axis `k`. The
/// integrand receives the full point.
pub fn integrate_box<F>(
    f: F,
    lower: &[f64],
    upper: &[f64],
    breakpoints: &[Vec<f64>],
    tol: Tolerance,
) -> Result<Integral>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = lower.len();
    if dim > MAX_BOX_DIM || upper.len() != dim {
        return Err(Error::Argument(format!(
            "box quadrature supports up to {MAX_BOX_DIM} dimensions, got {dim}"
        )));
    }
    if dim == 0 {
        return Ok(Integral {
            value: f(&[]),
            error_estimate: 0.0,
        });
    }
    let state = BoxState {
        f: &f,
        lower,
        upper,
        breakpoints,
        tol,
        err: std::cell::Cell::new(0.0),
        failed: std::cell::Cell::new(false),
    };
    let value = state.axis_integral(0, [0.0; MAX_BOX_DIM]);
    if state.failed.get() {
        return Err(Error::Tolerance {
            estimate: value,
            error_estimate: state.err.get(),
        });
    }
    Ok(Integral {
        value,
        error_estimate: state.err.get(),
    })
}

struct BoxState<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    upper: &'a [f64],
    breakpoints: &'a [Vec<f64>],
    tol: Tolerance,
    err: std::cell::Cell<f64>,
    failed: std::cell::Cell<bool>,
}

impl<F: Fn(&[f64]) -> f64> BoxState<'_, F> {
    fn axis_integral(&self, axis: usize, prefix: [f64; MAX_BOX_DIM]) -> f64 {
        let dim = self.lower.len();
        let inner = |x: f64| {
            let mut p = prefix;
            p[axis] = x;
            if axis + 1 == dim {
                (self.f)(&p[..dim])
            } else {
                self.axis_integral(axis + 1, p)
            }
        };
        let bp = self.breakpoints.get(axis).map(Vec::as_slice).unwrap_or(&[]);
        match integrate(inner, self.lower[axis], self.upper[axis], bp, self.tol) {
            Ok(r) => {
                self.err.set(self.err.get() + r.error_estimate);
                r.value
            }
            Err(Error::Tolerance {
                estimate,
                error_estimate,
            }) => {
                self.failed.set(true);
                self.err.set(self.err.get() + error_estimate);
                estimate
            }
            Err(_) => unreachable!("1-D integration only fails on tolerance"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_sum_to_two() {
        let gl = GaussLegendre::new(ORDER);
        let s: f64 = gl.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        for w in gl.nodes().windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        let gl = GaussLegendre::new(ORDER);
        // degree 19 is the highest integrated exactly by 10 nodes
        let v = gl.integrate(|x| x.powi(18), 0.0, 1.0);
        assert!((v - 1.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_steep_integrand() {
        let r = integrate(|x| (-x).exp() * (50.0 * x).sin(), 0.0, 3.0, &[], Tolerance::default())
            .unwrap();
        // closed form of ∫ e^{-x} sin(50x) dx
        let f = |x: f64| -(-x).exp() * ((50.0 * x).sin() + 50.0 * (50.0 * x).cos()) / 2501.0;
        let exact = f(3.0) - f(0.0);
        assert!((r.value - exact).abs() < 1e-12, "{} vs {}", r.value, exact);
    }

    #[test]
    fn breakpoints_make_steps_exact() {
        let step = |x: f64| if x <= 0.3 { 1.0 } else { 5.0 };
        let r = integrate(step, 0.0, 1.0, &[0.3], Tolerance::default()).unwrap();
        assert!((r.value - (0.3 + 3.5)).abs() < 1e-14);
    }

    #[test]
    fn square_root_singularity_converges() {
        let r = integrate(f64::sqrt, 0.0, 1.0, &[], Tolerance::default()).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn box_integral_of_separable_polynomial() {
        let r = integrate_box(
            |p: &[f64]| p[0] * p[1] * p[1],
            &[0.0, 0.0],
            &[1.0, 2.0],
            &[vec![], vec![]],
            Tolerance::default(),
        )
        .unwrap();
        assert!((r.value - 0.5 * 8.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn three_dimensional_box_with_aligned_steps() {
        let r = integrate_box(
            |p: &[f64]| if p[0] > 0.5 && p[1] <= 0.25 { p[2] } else { 0.0 },
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            &[vec![0.5], vec![0.25], vec![]],
            Tolerance::default(),
        )
        .unwrap();
        assert!((r.value - 0.5 * 0.25 * 0.5).abs() < 1e-14);
    }

    #[test]
    fn too_many_dimensions_rejected() {
        let r = integrate_box(|_| 1.0, &[0.0; 4], &[1.0; 4], &[], Tolerance::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }
}
