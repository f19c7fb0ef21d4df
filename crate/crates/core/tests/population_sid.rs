use cartlab::cart::Rectangle;
use cartlab::experiments::{two_piece_component, BuiltinSignal};
use cartlab::model::{CoordinateDensity, Curve, ProductDistribution, SignalFunction, SignalKind, UnivariateComponent};
use cartlab::population::{
    best_population_split, cell_moments, population_delta_parts, population_delta_three_term,
    population_impurity_decrease,
};
use cartlab::sid::{cell_sid_ratio, estimate_over_cells, estimate_sid_coefficient, CellFamily, DEFAULT_VARIANCE_FLOOR};
use proptest::prelude::*;

fn cell_strategy(p: usize) -> impl Strategy<Value = Rectangle> {
    proptest::collection::vec((0.0f64..0.9, 0.05f64..1.0), p).prop_map(|sides| {
        let (lo, hi): (Vec<f64>, Vec<f64>) = sides
            .into_iter()
            .map(|(a, w)| (a, (a + 0.05 + w * (0.95 - a)).min(1.0)))
            .unzip();
        Rectangle::new(lo, hi).unwrap()
    })
}

fn wavy() -> SignalFunction {
    SignalFunction::additive(vec![
        UnivariateComponent::Polynomial {
            coefficients: vec![0.0, 1.0, -3.0, 2.0],
        },
        UnivariateComponent::StronglyIncreasing {
            c1: 0.5,
            c2: 1.5,
            curve: Curve::Sum {
                terms: vec![
                    Curve::Polynomial {
                        coefficients: vec![0.0, 1.0],
                    },
                    Curve::Sine {
                        amplitude: 0.05,
                        frequency: 8.0,
                        phase: 0.0,
                    },
                ],
            },
        },
    ])
    .unwrap()
}

fn skewed() -> ProductDistribution {
    ProductDistribution::new(vec![
        CoordinateDensity::PiecewiseConstant {
            breakpoints: vec![0.0, 0.3, 1.0],
            densities: vec![2.0, 4.0 / 7.0],
        },
        CoordinateDensity::Uniform,
    ])
    .unwrap()
}

fn scaled(f: &[UnivariateComponent], c: f64, w: f64) -> SignalFunction {
    let mut comps: Vec<UnivariateComponent> = f
        .iter()
        .map(|g| match g {
            UnivariateComponent::Linear { slope, intercept } => UnivariateComponent::Linear {
                slope: c * slope,
                intercept: c * intercept,
            },
            UnivariateComponent::Polynomial { coefficients } => UnivariateComponent::Polynomial {
                coefficients: coefficients.iter().map(|a| c * a).collect(),
            },
            _ => unreachable!(),
        })
        .collect();
    if let UnivariateComponent::Polynomial { coefficients } = &mut comps[0] {
        coefficients[0] += w;
    }
    SignalFunction::additive(comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_identities(cell in cell_strategy(2), j in 0usize..2, t in 0.02f64..0.98) {
        let dist = skewed();
        for f in [wavy(), BuiltinSignal::TwoPiece.signal(), SignalFunction::xor2d()] {
            let b = cell.lower()[j] + t * cell.width(j);
            let delta = population_impurity_decrease(&f, &dist, &cell, j, b).unwrap().delta;
            prop_assert!(delta >= -1e-10);
            let (l, r) = population_delta_parts(&f, &dist, &cell, j, b).unwrap();
            prop_assert!((delta - (l + r)).abs() <= 1e-9);
            let three = population_delta_three_term(&f, &dist, &cell, j, b).unwrap();
            prop_assert!((three - delta).abs() <= 1e-9);
        }
    }

    #[test]
    fn additive_variance_separates(cell in cell_strategy(2)) {
        let f = wavy();
        let dist = skewed();
        let whole = cell_moments(&f, &dist, &cell).unwrap();
        let mut sum = 0.0;
        for (k, g) in f.components().unwrap().iter().enumerate() {
            let single = SignalFunction::additive(vec![g.clone()]).unwrap();
            let side = Rectangle::new(vec![cell.lower()[k]], vec![cell.upper()[k]]).unwrap();
            let d = ProductDistribution::new(vec![dist.coordinate(k).clone()]).unwrap();
            sum += cell_moments(&single, &d, &side).unwrap().variance;
        }
        prop_assert!((whole.variance - sum).abs() <= 1e-9);
    }

    #[test]
    fn scaling_and_shifting(cell in cell_strategy(2), c in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0], w in -2.0f64..2.0, j in 0usize..2, t in 0.05f64..0.95) {
        let base = vec![
            UnivariateComponent::Polynomial { coefficients: vec![0.1, -1.0, 2.0] },
            UnivariateComponent::Linear { slope: 0.7, intercept: 0.0 },
        ];
        let f = scaled(&base, 1.0, 0.0);
        let g = scaled(&base, c, w);
        let dist = ProductDistribution::uniform(2);
        let b = cell.lower()[j] + t * cell.width(j);
        let d1 = population_impurity_decrease(&f, &dist, &cell, j, b).unwrap().delta;
        let d2 = population_impurity_decrease(&g, &dist, &cell, j, b).unwrap().delta;
        prop_assert!((d2 - c * c * d1).abs() <= 1e-9 * (c * c * d1).max(1e-12));
        let r1 = cell_sid_ratio(&f, &dist, &cell, 64, DEFAULT_VARIANCE_FLOOR).unwrap().ratio;
        let r2 = cell_sid_ratio(&g, &dist, &cell, 64, DEFAULT_VARIANCE_FLOOR).unwrap().ratio;
        if let (Some(a), Some(b)) = (r1, r2) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn ratios_stay_in_unit_interval(cell in cell_strategy(2)) {
        for f in [wavy(), BuiltinSignal::TwoPiece.signal(), SignalFunction::xor2d()] {
            if let Some(r) = cell_sid_ratio(&f, &skewed(), &cell, 32, DEFAULT_VARIANCE_FLOOR).unwrap().ratio {
                prop_assert!((0.0..=1.0 + 1e-9).contains(&r));
            }
        }
    }
}

#[test]
fn linear_ratio_is_three_quarters_on_every_interval() {
    let f = SignalFunction::additive(vec![UnivariateComponent::identity()]).unwrap();
    let rep = estimate_sid_coefficient(&f, &ProductDistribution::uniform(1), CellFamily::RandomCells { count: 100, seed: 4 }, 128)
        .unwrap();
    for r in &rep.records {
        assert!((r.ratio.unwrap() - 0.75).abs() < 1e-6);
    }
}

#[test]
fn enlarging_the_family_never_raises_lambda() {
    let f = wavy();
    let dist = ProductDistribution::uniform(2);
    let cells = CellFamily::RandomCells { count: 60, seed: 9 }.cells(2).unwrap();
    let family = CellFamily::RandomCells { count: 60, seed: 9 };
    let small = estimate_over_cells(&f, &dist, &cells[..20], family, 64).unwrap();
    let large = estimate_over_cells(&f, &dist, &cells, family, 64).unwrap();
    assert!(large.lambda_hat <= small.lambda_hat);
}

/// Closed-form moments of `t²` under the uniform law on `[a, b]`.
fn square_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let w = b - a;
    let m1 = (b.powi(3) - a.powi(3)) / (3.0 * w);
    let m2 = (b.powi(5) - a.powi(5)) / (5.0 * w);
    (w, m1, m2 - m1 * m1)
}

#[test]
fn square_lambda_matches_analytic_oracle() {
    let f = SignalFunction::additive(vec![UnivariateComponent::Polynomial {
        coefficients: vec![0.0, 0.0, 1.0],
    }])
    .unwrap();
    let rep = estimate_sid_coefficient(&f, &ProductDistribution::uniform(1), CellFamily::IntervalGrid { k: 20 }, 512).unwrap();
    let mut oracle = f64::INFINITY;
    for i in 0..20 {
        for j in i + 1..=20 {
            let (a, b) = (i as f64 / 20.0, j as f64 / 20.0);
            let (w, mean, var) = square_moments(a, b);
            let best = (1..2000)
                .map(|k| {
                    let s = a + w * k as f64 / 2000.0;
                    let (wl, ml, _) = square_moments(a, s);
                    let (wr, mr, _) = square_moments(s, b);
                    wl * (ml - mean).powi(2) + wr * (mr - mean).powi(2)
                })
                .fold(0.0, f64::max);
            oracle = oracle.min(best / (w * var));
        }
    }
    assert!((rep.lambda_hat - oracle).abs() < 1e-3, "{} vs {oracle}", rep.lambda_hat);
}

#[test]
fn two_piece_refinement_finds_the_jump() {
    let f = SignalFunction::additive(vec![two_piece_component()]).unwrap();
    let s = best_population_split(&f, &ProductDistribution::uniform(1), &Rectangle::unit(1), 7).unwrap();
    assert!((s.threshold - 0.5).abs() < 1e-5, "{}", s.threshold);
}

#[test]
fn grid_signal_moments_are_exact() {
    let f = SignalFunction::new(SignalKind::Grid {
        cells_per_axis: vec![2, 3],
        values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
    })
    .unwrap();
    let m = cell_moments(&f, &ProductDistribution::uniform(2), &Rectangle::unit(2)).unwrap();
    assert!((m.mean - 2.5).abs() < 1e-12);
    let expected = (0..6).map(|v| (v as f64 - 2.5).powi(2)).sum::<f64>() / 6.0;
    assert!((m.variance - expected).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn piecewise_constant_search_beats_dense_scan(
        cell in cell_strategy(2),
        values in proptest::collection::vec(-2.0f64..2.0, 9),
    ) {
        let f = SignalFunction::new(SignalKind::Grid { cells_per_axis: vec![3, 3], values }).unwrap();
        let dist = skewed();
        let best = best_population_split(&f, &dist, &cell, 8).unwrap();
        for j in 0..2 {
            for i in 1..400 {
                let b = cell.lower()[j] + cell.width(j) * i as f64 / 400.0;
                let d = population_impurity_decrease(&f, &dist, &cell, j, b).unwrap().delta;
                prop_assert!(d <= best.delta + 1e-12, "j={j} b={b}: {d} > {}", best.delta);
            }
        }
    }
}
