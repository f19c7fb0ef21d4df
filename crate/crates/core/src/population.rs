//! Population (infinite-sample) moments and impurity decreases on cells.
//!
//! For additive signals every quantity reduces to one-dimensional integrals
//! because the feature law restricted to a rectangle is still a product law.
//! Piecewise-constant signals are summed exactly over their grid boxes.
//! Other signals go through iterated box quadrature (dimension ≤ 3).

use serde::{Deserialize, Serialize};

use crate::cart::{compensated_sum, ChildSummary, ChildWeight, Rectangle, SplitStatistics};
use crate::error::{Error, Result};
use crate::lrp::weighted_variation;
use crate::model::{CoordinateDensity, ProductDistribution, SignalFunction, SignalKind, UnivariateComponent};
use crate::quadrature::{integrate, integrate_box, Tolerance};

/// Quadrature tolerance for population quantities.
pub const POPULATION_TOL: Tolerance = Tolerance {
    rel: 1e-12,
    abs: 1e-15,
};

/// Default number of interior grid thresholds per feature.
pub const DEFAULT_GRID: usize = 512;

/// Width at which golden-section refinement stops.
pub const REFINE_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMoments {
    /// `P(X ∈ A)`.
    pub mass: f64,
    /// `E(f*(X) | X ∈ A)`.
    pub mean: f64,
    /// `Var(f*(X) | X ∈ A)`.
    pub variance: f64,
    pub quadrature_error: f64,
}

fn check_dims(f: &SignalFunction, dist: &ProductDistribution, cell: &Rectangle) -> Result<()> {
    if f.dim() != dist.dim() || cell.dim() != f.dim() {
        return Err(Error::Configuration(format!(
            "signal (p={}), distribution (p={}) and cell (p={}) disagree",
            f.dim(),
            dist.dim(),
            cell.dim()
        )));
    }
    Ok(())
}

fn joined_breakpoints(g: &UnivariateComponent, rho: &CoordinateDensity) -> Vec<f64> {
    let mut bps = g.breakpoints();
    bps.extend(rho.interior_breakpoints());
    bps
}

/// `(P(a ≤ X_k ≤ b), ∫_a^b g ρ, error)`.
fn coordinate_mass_sum(g: &UnivariateComponent, rho: &CoordinateDensity, a: f64, b: f64) -> Result<(f64, f64, f64)> {
    let mass = rho.mass(a, b);
    let s = integrate(|t| g.value(t) * rho.density(t), a, b, &joined_breakpoints(g, rho), POPULATION_TOL)?;
    Ok((mass, s.value, s.error_estimate))
}

/// Mass, conditional mean and conditional variance of one additive
/// component on `[a, b]`.
fn coordinate_moments(g: &UnivariateComponent, rho: &CoordinateDensity, a: f64, b: f64) -> Result<CellMoments> {
    let (mass, s, e1) = coordinate_mass_sum(g, rho, a, b)?;
    if !(mass > 0.0) {
        return Err(Error::DegenerateCell);
    }
    let mean = s / mass;
    let v = integrate(
        |t| {
            let d = g.value(t) - mean;
            d * d * rho.density(t)
        },
        a,
        b,
        &joined_breakpoints(g, rho),
        POPULATION_TOL,
    )?;
    Ok(CellMoments {
        mass,
        mean,
        variance: (v.value / mass).max(0.0),
        quadrature_error: e1 + v.error_estimate,
    })
}

fn box_breakpoints(f: &SignalFunction, dist: &ProductDistribution) -> Vec<Vec<f64>> {
    f.breakpoints()
        .into_iter()
        .zip(dist.coordinates())
        .map(|(mut b, rho)| {
            b.extend(rho.interior_breakpoints());
            b
        })
        .collect()
}

fn cell_mass(dist: &ProductDistribution, cell: &Rectangle) -> f64 {
    (0..cell.dim())
        .map(|k| dist.coordinate(k).mass(cell.lower()[k], cell.upper()[k]))
        .product()
}

/// `(mass, value)` of every grid box of a piecewise-constant signal that
/// meets the cell; `None` for other signals.
fn constant_pieces(f: &SignalFunction, dist: &ProductDistribution, cell: &Rectangle) -> Option<Vec<(f64, f64)>> {
    if !matches!(f.kind(), SignalKind::Xor2d | SignalKind::Grid { .. }) {
        return None;
    }
    let axes: Vec<Vec<(f64, f64)>> = f
        .breakpoints()
        .into_iter()
        .enumerate()
        .map(|(k, bps)| {
            let mut edges = vec![0.0];
            edges.extend(bps.into_iter().filter(|&t| t > 0.0 && t < 1.0));
            edges.push(1.0);
            let (lo, hi) = (cell.lower()[k], cell.upper()[k]);
            edges
                .windows(2)
                .filter_map(|w| {
                    let (a, b) = (w[0].max(lo), w[1].min(hi));
                    (a < b).then(|| (dist.coordinate(k).mass(a, b), 0.5 * (w[0] + w[1])))
                })
                .collect()
        })
        .collect();
    let mut pieces = vec![(1.0, Vec::new())];
    for axis in &axes {
        pieces = pieces
            .iter()
            .flat_map(|(m, mid): &(f64, Vec<f64>)| {
                axis.iter().map(move |&(mk, c)| {
                    let mut u = mid.clone();
                    u.push(c);
                    (m * mk, u)
                })
            })
            .collect();
    }
    Some(pieces.into_iter().map(|(m, u)| (m, f.value(&u))).collect())
}

fn piece_moments(pieces: &[(f64, f64)]) -> Result<CellMoments> {
    let mass = compensated_sum(pieces.iter().map(|p| p.0));
    if !(mass > 0.0) {
        return Err(Error::DegenerateCell);
    }
    let mean = compensated_sum(pieces.iter().map(|&(m, v)| m * v)) / mass;
    let variance = compensated_sum(pieces.iter().map(|&(m, v)| m * (v - mean).powi(2))) / mass;
    Ok(CellMoments {
        mass,
        mean,
        variance,
        quadrature_error: 0.0,
    })
}

/// Mass and mean only, exact for piecewise-constant signals and via box
/// quadrature otherwise.
fn general_mass_mean(f: &SignalFunction, dist: &ProductDistribution, cell: &Rectangle) -> Result<(f64, f64, f64)> {
    if let Some(pieces) = constant_pieces(f, dist, cell) {
        let m = piece_moments(&pieces)?;
        return Ok((m.mass, m.mean, 0.0));
    }
    let mass = cell_mass(dist, cell);
    if !(mass > 0.0) {
        return Err(Error::DegenerateCell);
    }
    let bps = box_breakpoints(f, dist);
    let s = integrate_box(
        |u| f.value(u) * dist.joint_density(u),
        cell.lower(),
        cell.upper(),
        &bps,
        POPULATION_TOL,
    )?;
    Ok((mass, s.value / mass, s.error_estimate))
}

/// `P(A)`, `E(f*|A)` and `Var(f*|A)`.
pub fn cell_moments(f: &SignalFunction, dist: &ProductDistribution, cell: &Rectangle) -> Result<CellMoments> {
    check_dims(f, dist, cell)?;
    if let Some(components) = f.components() {
        let mut mass = 1.0;
        let mut means = Vec::with_capacity(components.len());
        let mut vars = Vec::with_capacity(components.len());
        let mut err = 0.0;
        for (k, g) in components.iter().enumerate() {
            let m = coordinate_moments(g, dist.coordinate(k), cell.lower()[k], cell.upper()[k])?;
            mass *= m.mass;
            means.push(m.mean);
            vars.push(m.variance);
            err += m.quadrature_error;
        }
        return Ok(CellMoments {
            mass,
            mean: compensated_sum(means),
            variance: compensated_sum(vars),
            quadrature_error: err,
        });
    }
    if let Some(pieces) = constant_pieces(f, dist, cell) {
        return piece_moments(&pieces);
    }
    let (mass, mean, e1) = general_mass_mean(f, dist, cell)?;
    let bps = box_breakpoints(f, dist);
    let v = integrate_box(
        |u| {
            let d = f.value(u) - mean;
            d * d * dist.joint_density(u)
        },
        cell.lower(),
        cell.upper(),
        &bps,
        POPULATION_TOL,
    )?;
    Ok(CellMoments {
        mass,
        mean,
        variance: (v.value / mass).max(0.0),
        quadrature_error: e1 + v.error_estimate,
    })
}

/// Evaluates population splits of one cell, caching what does not depend on
/// the split.
enum Splitter<'a> {
    Additive {
        components: &'a [UnivariateComponent],
        dist: &'a ProductDistribution,
        cell: &'a Rectangle,
        mass: f64,
        mean: f64,
        /// Per-coordinate `(mass, ∫ g ρ)` on the cell side.
        sides: Vec<(f64, f64)>,
    },
    General {
        f: &'a SignalFunction,
        dist: &'a ProductDistribution,
        cell: &'a Rectangle,
        mean: f64,
    },
}

impl<'a> Splitter<'a> {
    fn new(f: &'a SignalFunction, dist: &'a ProductDistribution, cell: &'a Rectangle) -> Result<Self> {
        check_dims(f, dist, cell)?;
        if let Some(components) = f.components() {
            let mut sides = Vec::with_capacity(components.len());
            let mut mass = 1.0;
            let mut means = Vec::new();
            for (k, g) in components.iter().enumerate() {
                let (m, s, _) = coordinate_mass_sum(g, dist.coordinate(k), cell.lower()[k], cell.upper()[k])?;
                if !(m > 0.0) {
                    return Err(Error::DegenerateCell);
                }
                mass *= m;
                means.push(s / m);
                sides.push((m, s));
            }
            Ok(Splitter::Additive {
                components,
                dist,
                cell,
                mass,
                mean: compensated_sum(means),
                sides,
            })
        } else {
            let (_, mean, _) = general_mass_mean(f, dist, cell)?;
            Ok(Splitter::General {
                f,
                dist,
                cell,
                mean,
            })
        }
    }

    fn cell(&self) -> &Rectangle {
        match self {
            Splitter::Additive { cell, .. } | Splitter::General { cell, .. } => cell,
        }
    }

    fn evaluate(&self, j: usize, b: f64) -> Result<SplitStatistics> {
        let cell = self.cell();
        if j >= cell.dim() {
            return Err(Error::Argument(format!("feature {j} out of range for p={}", cell.dim())));
        }
        if !(b > cell.lower()[j] && b < cell.upper()[j]) {
            return Err(Error::SplitInfeasible {
                feature: j,
                threshold: b,
            });
        }
        let (pl, nl, pr, nr, parent_mean) = match self {
            Splitter::Additive {
                components,
                dist,
                cell,
                mass,
                mean,
                sides,
            } => {
                let (g, rho) = (&components[j], dist.coordinate(j));
                let (m, s) = sides[j];
                let (ml, sl, _) = coordinate_mass_sum(g, rho, cell.lower()[j], b)?;
                let (mr, sr, _) = coordinate_mass_sum(g, rho, b, cell.upper()[j])?;
                if !(ml > 0.0 && mr > 0.0) {
                    return Err(Error::SplitInfeasible {
                        feature: j,
                        threshold: b,
                    });
                }
                let e = s / m;
                let rest = mean - e;
                (mass * ml / m, rest + sl / ml, mass * mr / m, rest + sr / mr, *mean)
            }
            Splitter::General {
                f,
                dist,
                cell,
                mean,
            } => {
                let (l, r) = cell.split(j, b);
                let (pl, nl, _) = general_mass_mean(f, dist, &l).map_err(|e| infeasible_if_degenerate(e, j, b))?;
                let (pr, nr, _) = general_mass_mean(f, dist, &r).map_err(|e| infeasible_if_degenerate(e, j, b))?;
                (pl, nl, pr, nr, *mean)
            }
        };
        let delta = pl * (nl - parent_mean).powi(2) + pr * (nr - parent_mean).powi(2);
        Ok(SplitStatistics {
            feature: j,
            threshold: b,
            delta,
            left: ChildSummary {
                weight: ChildWeight::Mass(pl),
                mean: nl,
            },
            right: ChildSummary {
                weight: ChildWeight::Mass(pr),
                mean: nr,
            },
        })
    }
}

fn infeasible_if_degenerate(e: Error, feature: usize, threshold: f64) -> Error {
    match e {
        Error::DegenerateCell => Error::SplitInfeasible { feature, threshold },
        other => other,
    }
}

/// Population impurity decrease
/// `Δ(A, j, b) = P(A_L)(ν_L − ν)² + P(A_R)(ν_R − ν)²`.
pub fn population_impurity_decrease(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    j: usize,
    b: f64,
) -> Result<SplitStatistics> {
    Splitter::new(f, dist, cell)?.evaluate(j, b)
}

/// `P(A)Var(A) − P(A_L)Var(A_L) − P(A_R)Var(A_R)` from full cell moments.
pub fn population_delta_three_term(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    j: usize,
    b: f64,
) -> Result<f64> {
    let (l, r) = split_checked(cell, j, b)?;
    let m = cell_moments(f, dist, cell)?;
    let ml = cell_moments(f, dist, &l).map_err(|e| infeasible_if_degenerate(e, j, b))?;
    let mr = cell_moments(f, dist, &r).map_err(|e| infeasible_if_degenerate(e, j, b))?;
    Ok(m.mass * m.variance - ml.mass * ml.variance - mr.mass * mr.variance)
}

/// `(Δ_L, Δ_R)` with `Δ_L = P(A_L)(ν_L − ν)²`, from full cell moments.
pub fn population_delta_parts(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    j: usize,
    b: f64,
) -> Result<(f64, f64)> {
    let (l, r) = split_checked(cell, j, b)?;
    let m = cell_moments(f, dist, cell)?;
    let ml = cell_moments(f, dist, &l).map_err(|e| infeasible_if_degenerate(e, j, b))?;
    let mr = cell_moments(f, dist, &r).map_err(|e| infeasible_if_degenerate(e, j, b))?;
    Ok((
        ml.mass * (ml.mean - m.mean).powi(2),
        mr.mass * (mr.mean - m.mean).powi(2),
    ))
}

fn split_checked(cell: &Rectangle, j: usize, b: f64) -> Result<(Rectangle, Rectangle)> {
    if j >= cell.dim() {
        return Err(Error::Argument(format!("feature {j} out of range for p={}", cell.dim())));
    }
    if !(b > cell.lower()[j] && b < cell.upper()[j]) {
        return Err(Error::SplitInfeasible {
            feature: j,
            threshold: b,
        });
    }
    Ok(cell.split(j, b))
}

/// Maximizes a unimodal-looking function on `[lo, hi]` by golden-section
/// search until the bracket is narrower than `width`.
fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, width: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > width {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Approximate `argmax_{j,b} Δ(A, j, b)`: a uniform grid of `grid` interior
/// thresholds per feature, then golden-section refinement around the best
/// grid point. Ties go to the smallest feature index.
///
/// For piecewise-constant signals the search is exact: along each feature
/// `Δ` is convex in the child mass between breakpoints, so only breakpoints
/// inside the cell (or the midpoint when there are none) are evaluated.
pub fn best_population_split(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    grid: usize,
) -> Result<SplitStatistics> {
    if grid == 0 {
        return Err(Error::Argument("grid size must be positive".into()));
    }
    let splitter = Splitter::new(f, dist, cell)?;
    let piecewise_constant = matches!(f.kind(), SignalKind::Xor2d | SignalKind::Grid { .. });
    let breakpoints = f.breakpoints();
    let mut best: Option<SplitStatistics> = None;
    for (j, bps) in breakpoints.iter().enumerate() {
        let (lo, hi) = (cell.lower()[j], cell.upper()[j]);
        if piecewise_constant {
            let mut candidates: Vec<f64> = bps.iter().copied().filter(|&t| t > lo && t < hi).collect();
            if candidates.is_empty() {
                candidates.push(lo + 0.5 * (hi - lo));
            }
            for b in candidates {
                let s = splitter.evaluate(j, b)?;
                let better = match &best {
                    None => true,
                    Some(t) => s.delta > t.delta + 1e-12 * t.delta.abs().max(1e-300),
                };
                if better {
                    best = Some(s);
                }
            }
            continue;
        }
        let step = (hi - lo) / (grid + 1) as f64;
        let mut top: Option<(usize, SplitStatistics)> = None;
        for i in 1..=grid {
            let b = lo + step * i as f64;
            let s = splitter.evaluate(j, b)?;
            if top.as_ref().is_none_or(|(_, t)| s.delta > t.delta) {
                top = Some((i, s));
            }
        }
        let (i, mut s) = top.expect("grid is non-empty");
        let a = lo + step * (i - 1) as f64;
        let c = if i == grid { hi } else { lo + step * (i + 1) as f64 };
        if c - a > REFINE_WIDTH {
            let (x, _) = golden_section_max(|b| splitter.evaluate(j, b).map(|s| s.delta), a, c, REFINE_WIDTH)?;
            let refined = splitter.evaluate(j, x)?;
            if refined.delta > s.delta {
                s = refined;
            }
        }
        let better = match &best {
            None => true,
            Some(t) => s.delta > t.delta + 1e-12 * t.delta.abs().max(1e-300),
        };
        if better {
            best = Some(s);
        }
    }
    Ok(best.expect("cell has at least one feature"))
}

/// `|Δ − (E[f* 1_{A_R}] − ν P(A_R))² · P(A) / (P(A_L) P(A_R))|`, which
/// vanishes identically.
pub fn verify_delta_closed_form(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    j: usize,
    b: f64,
) -> Result<f64> {
    let delta = population_impurity_decrease(f, dist, cell, j, b)?.delta;
    let (l, r) = split_checked(cell, j, b)?;
    let m = cell_moments(f, dist, cell)?;
    let ml = cell_moments(f, dist, &l)?;
    let mr = cell_moments(f, dist, &r)?;
    let cov = mr.mass * mr.mean - m.mean * mr.mass;
    let closed = cov * cov * m.mass / (ml.mass * mr.mass);
    Ok((delta - closed).abs())
}

/// Both sides of the split lower bound
/// `max √Δ ≥ √P(A) · Var(A) / Σ_k ∫ √(q_k(1−q_k)) d|g_k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitLowerBound {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Variances at or below this are treated as zero.
pub const VARIANCE_FLOOR: f64 = 1e-14;

/// Checks the split lower bound on an additive signal. `q_k` is the marginal
/// CDF of `X_k` restricted to the cell side; jumps of `g_k` contribute
/// `√(q(1−q)) |Δg|`.
pub fn verify_split_lower_bound(
    f: &SignalFunction,
    dist: &ProductDistribution,
    cell: &Rectangle,
    grid: usize,
) -> Result<SplitLowerBound> {
    let components = f
        .components()
        .ok_or_else(|| Error::Configuration("split lower bound needs an additive signal".into()))?;
    let best = best_population_split(f, dist, cell, grid)?;
    let moments = cell_moments(f, dist, cell)?;
    let lhs = best.delta.max(0.0).sqrt();
    let mut denominator = 0.0;
    for (k, g) in components.iter().enumerate() {
        let rho = dist.coordinate(k);
        let (lo, hi) = (cell.lower()[k], cell.upper()[k]);
        let (f_lo, f_hi) = (rho.cdf(lo), rho.cdf(hi));
        let q = |t: f64| ((rho.cdf(t) - f_lo) / (f_hi - f_lo)).clamp(0.0, 1.0);
        denominator += weighted_variation(g, lo, hi, &q, &rho.interior_breakpoints())?;
    }
    let rhs = if moments.variance <= VARIANCE_FLOOR || denominator <= 0.0 {
        0.0
    } else {
        moments.mass.sqrt() * moments.variance / denominator
    };
    Ok(SplitLowerBound {
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::two_piece;

    fn linear() -> SignalFunction {
        SignalFunction::additive(vec![UnivariateComponent::identity()]).unwrap()
    }

    #[test]
    fn unit_interval_moments() {
        let m = cell_moments(&linear(), &ProductDistribution::uniform(1), &Rectangle::unit(1)).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-15);
        assert!((m.mean - 0.5).abs() < 1e-14);
        assert!((m.variance - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn linear_root_split() {
        let s = population_impurity_decrease(&linear(), &ProductDistribution::uniform(1), &Rectangle::unit(1), 0, 0.5)
            .unwrap();
        assert!((s.delta - 1.0 / 16.0).abs() < 1e-14);
        let best = best_population_split(&linear(), &ProductDistribution::uniform(1), &Rectangle::unit(1), 64).unwrap();
        assert!((best.threshold - 0.5).abs() < 1e-6);
        assert!((best.delta - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn general_path_matches_additive() {
        let f = SignalFunction::additive(vec![UnivariateComponent::identity(), two_piece()]).unwrap();
        let grid = SignalFunction::new(crate::model::SignalKind::Grid {
            cells_per_axis: vec![2, 2],
            values: vec![0.0, 1.0, 1.0, 0.0],
        })
        .unwrap();
        let dist = ProductDistribution::uniform(2);
        let cell = Rectangle::new(vec![0.1, 0.2], vec![0.9, 0.7]).unwrap();
        let a = cell_moments(&grid, &dist, &cell).unwrap();
        let x = cell_moments(&SignalFunction::xor2d(), &dist, &cell).unwrap();
        assert!((a.mean + x.mean - 1.0).abs() < 1e-12);
        assert!((a.variance - x.variance).abs() < 1e-12);
        let m = cell_moments(&f, &dist, &cell).unwrap();
        assert!((m.mass - 0.4).abs() < 1e-15);
    }

    #[test]
    fn exact_pieces_match_box_quadrature() {
        let f = SignalFunction::xor2d();
        let dist = ProductDistribution::new(vec![
            CoordinateDensity::PiecewiseConstant {
                breakpoints: vec![0.0, 0.3, 1.0],
                densities: vec![2.0, 4.0 / 7.0],
            },
            CoordinateDensity::Uniform,
        ])
        .unwrap();
        let cell = Rectangle::new(vec![0.2, 0.1], vec![0.8, 0.65]).unwrap();
        let exact = cell_moments(&f, &dist, &cell).unwrap();
        let bps = box_breakpoints(&f, &dist);
        let dens = |u: &[f64]| dist.joint_density(u);
        let mass = integrate_box(dens, cell.lower(), cell.upper(), &bps, POPULATION_TOL).unwrap().value;
        let sum = integrate_box(|u| f.value(u) * dens(u), cell.lower(), cell.upper(), &bps, POPULATION_TOL)
            .unwrap()
            .value;
        assert!((exact.mass - mass).abs() < 1e-12);
        assert!((exact.mean - sum / mass).abs() < 1e-12);
        let mean = sum / mass;
        assert!((exact.variance - mean * (1.0 - mean)).abs() < 1e-12);
    }

    #[test]
    fn xor_root_has_no_decrease() {
        let f = SignalFunction::xor2d();
        let dist = ProductDistribution::uniform(2);
        let best = best_population_split(&f, &dist, &Rectangle::unit(2), 64).unwrap();
        assert!(best.delta.abs() < 1e-12);
        let m = cell_moments(&f, &dist, &Rectangle::unit(2)).unwrap();
        assert!((m.variance - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_thresholds() {
        let f = linear();
        let dist = ProductDistribution::uniform(1);
        for b in [0.0, 1.0, -0.2] {
            assert!(matches!(
                population_impurity_decrease(&f, &dist, &Rectangle::unit(1), 0, b),
                Err(Error::SplitInfeasible { .. })
            ));
        }
    }

    #[test]
    fn closed_form_residual_is_small() {
        let f = SignalFunction::additive(vec![two_piece(), UnivariateComponent::identity()]).unwrap();
        let dist = ProductDistribution::uniform(2);
        let r = verify_delta_closed_form(&f, &dist, &Rectangle::unit(2), 0, 0.3).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn linear_lower_bound_values() {
        let r = verify_split_lower_bound(&linear(), &ProductDistribution::uniform(1), &Rectangle::unit(1), 64).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-10);
        assert!((r.rhs - 2.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-7, "{}", r.rhs);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, fx) = golden_section_max(|t| Ok(-(t - 0.3) * (t - 0.3)), 0.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!(fx <= 0.0);
    }
}
