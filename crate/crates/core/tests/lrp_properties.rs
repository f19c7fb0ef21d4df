use cartlab::experiments::two_piece_component;
use cartlab::lrp::{
    certify_lrp, interval_lrp_ratio, jump_bound_check, piecewise_tau_sq, weighted_lrp_check, IntervalFamily,
};
use cartlab::model::{compose_affine, Curve, UnivariateComponent};
use proptest::prelude::*;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..0.95, 0.02f64..1.0).prop_map(|(a, w)| (a, a + 0.02 + w * (0.98 - a)))
}

fn ratio(g: &UnivariateComponent, a: f64, b: f64) -> f64 {
    interval_lrp_ratio(g, a, b).unwrap().finite().unwrap()
}

fn cubic() -> Vec<f64> {
    vec![0.2, -1.0, 3.0, -1.5]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ratio_ignores_translation((a, b) in interval(), s in -3.0f64..3.0) {
        let g = UnivariateComponent::Polynomial { coefficients: cubic() };
        let h = UnivariateComponent::Polynomial { coefficients: compose_affine(&cubic(), -s, 1.0) };
        prop_assert!((ratio(&g, a, b) - ratio(&h, a + s, b + s)).abs() <= 1e-10 * ratio(&g, a, b).max(1.0));
    }

    #[test]
    fn ratio_ignores_scaling((a, b) in interval(), c in 0.1f64..10.0) {
        let g = UnivariateComponent::Polynomial { coefficients: cubic() };
        let h = UnivariateComponent::Polynomial { coefficients: compose_affine(&cubic(), 0.0, 1.0 / c) };
        prop_assert!((ratio(&g, a, b) - ratio(&h, c * a, c * b)).abs() <= 1e-9 * ratio(&g, a, b).max(1.0));
    }

    #[test]
    fn ratio_ignores_value_affine_maps((a, b) in interval(), c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], w in -4.0f64..4.0) {
        let g = UnivariateComponent::Polynomial { coefficients: cubic() };
        let mut coefs: Vec<f64> = cubic().iter().map(|x| c * x).collect();
        coefs[0] += w;
        let h = UnivariateComponent::Polynomial { coefficients: coefs };
        prop_assert!((ratio(&g, a, b) - ratio(&h, a, b)).abs() <= 1e-9 * ratio(&g, a, b).max(1.0));
    }

    #[test]
    fn strongly_increasing_stays_under_its_constant((a, b) in interval()) {
        let g = UnivariateComponent::StronglyIncreasing {
            c1: 0.6,
            c2: 1.4,
            curve: Curve::Sum {
                terms: vec![
                    Curve::Polynomial { coefficients: vec![0.0, 1.0] },
                    Curve::Sine { amplitude: 0.04, frequency: 9.0, phase: 0.3 },
                ],
            },
        };
        g.validate().unwrap();
        prop_assert!(ratio(&g, a, b) <= g.closed_form_tau().unwrap() + 1e-9);
    }

    #[test]
    fn convex_stays_under_its_constant((a, b) in interval()) {
        let g = UnivariateComponent::SmoothStronglyConvex {
            l: 2.0,
            sigma: 1.0,
            curve: Curve::Sum {
                terms: vec![
                    Curve::Polynomial { coefficients: vec![0.0, -0.8, 0.75] },
                    Curve::Exp { scale: 0.1, rate: 1.0 },
                ],
            },
        };
        g.validate().unwrap();
        prop_assert!(ratio(&g, a, b) <= g.closed_form_tau().unwrap());
    }

    #[test]
    fn weighted_linear_is_bounded_by_quarter_variation((a, b) in interval(), slope in -4.0f64..4.0, q0 in 0.0f64..1.0, q1 in 0.0f64..1.0) {
        let g = UnivariateComponent::Linear { slope, intercept: 0.1 };
        let q = |t: f64| q0 + (q1 - q0) * (t - a) / (b - a);
        let check = weighted_lrp_check(&g, a, b, &q).unwrap();
        let t = slope.abs() * (b - a);
        prop_assert!(check.lhs <= t * t / 4.0 * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn piecewise_weighted_condition_holds((a, b) in interval()) {
        let g = two_piece_component();
        let tau_sq = piecewise_tau_sq(2, 1.0, 2.0 * 3f64.sqrt(), 1.0, 1.0).unwrap();
        let q = |t: f64| (t - a) / (b - a);
        let check = weighted_lrp_check(&g, a, b, &q).unwrap();
        prop_assert!(check.slack(tau_sq) >= -1e-9, "slack {}", check.slack(tau_sq));
    }

    #[test]
    fn jump_bound_bound_holds(a in 0.0f64..0.4, c in 0.45f64..0.55, b in 0.6f64..1.0, jump in 1.0f64..5.0, slope in -0.5f64..0.5) {
        let h = UnivariateComponent::Piecewise {
            breakpoints: vec![0.0, c, 1.0],
            pieces: vec![
                UnivariateComponent::Linear { slope, intercept: 0.0 },
                UnivariateComponent::Linear { slope, intercept: jump },
            ],
            alpha: 0.4,
            beta: 4.0,
        };
        let r = jump_bound_check(&h, a, c, b).unwrap();
        prop_assert!(r.slack >= -1e-12);
    }
}

#[test]
fn certificates_agree_with_class_constants() {
    let family = IntervalFamily::default();
    let linear = certify_lrp(&UnivariateComponent::identity(), (0.0, 1.0), family).unwrap();
    assert!(linear.passed);
    assert!((linear.tau_measured - 2.0 * 3f64.sqrt()).abs() < 1e-6);

    let square = UnivariateComponent::Polynomial {
        coefficients: vec![0.0, 0.0, 1.0],
    };
    let cert = certify_lrp(&square, (0.0, 1.0), family).unwrap();
    assert!(cert.passed);
    assert!(cert.affine_invariance_residual.unwrap() < 1e-9);
    for (a, b) in family.intervals(0.0, 1.0).unwrap() {
        assert!(ratio(&square, a, b) <= cert.tau_measured + 1e-12);
    }

    let sawtooth = UnivariateComponent::Tabulated {
        knots: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        values: vec![0.0, 1.0, 0.0, 1.0, 0.0],
    };
    let cert = certify_lrp(&sawtooth, (0.0, 1.0), IntervalFamily::Grid { k: 8 }).unwrap();
    assert!(cert.tau_measured > 4.0);
}

#[test]
fn pure_step_has_zero_smooth_ratio() {
    let step = UnivariateComponent::Piecewise {
        breakpoints: vec![0.0, 0.5, 1.0],
        pieces: vec![UnivariateComponent::constant(0.0), UnivariateComponent::constant(1.0)],
        alpha: 1.0,
        beta: 1.0,
    };
    assert_eq!(interval_lrp_ratio(&step, 0.1, 0.4).unwrap().finite(), Some(0.0));
    assert_eq!(interval_lrp_ratio(&step, 0.1, 0.9).unwrap().finite(), Some(0.0));
}
