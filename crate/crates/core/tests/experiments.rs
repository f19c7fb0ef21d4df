use cartlab::cart::{empirical_decrease_parts, fit_cart, Rectangle};
use cartlab::experiments::{
    library_delta_hat, run_rate_experiment, run_verification_suite, run_verification_suite_with, run_xor_demo,
    BuiltinSignal, DepthRule, ErrorMode, ExperimentConfig, Tolerances, VerifyConfig, XorConfig,
};
use cartlab::model::{Dataset, NoiseSpec, ProductDistribution, SignalFunction, UnivariateComponent};
use cartlab::Result;

fn small_rate() -> ExperimentConfig {
    ExperimentConfig {
        id: "small".into(),
        signal: SignalFunction::additive(vec![UnivariateComponent::identity(); 2]).unwrap(),
        distribution: ProductDistribution::uniform(2),
        noise: NoiseSpec::BoundedUniform { m: 0.25 },
        n_grid: vec![64, 256, 1024],
        replicates: 6,
        base_seed: 3,
        depth: DepthRule::Scheduled { lambda: 0.75 },
        error_mode: ErrorMode::MonteCarlo { samples: 2000 },
    }
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn rate_outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_rate_experiment(&small_rate()).unwrap().save(a.path()).unwrap();
    run_rate_experiment(&small_rate()).unwrap().save(b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, fb);
}

#[test]
fn xor_outputs_are_byte_identical_across_runs() {
    let config = XorConfig {
        n_grid: vec![50, 200],
        replicates: 4,
        mc_samples: 500,
        ..XorConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_xor_demo(&config).unwrap().save(a.path()).unwrap();
    run_xor_demo(&config).unwrap().save(b.path()).unwrap();
    assert_eq!(read_all(a.path()), read_all(b.path()));
}

#[test]
fn linear_rate_errors_decay_consistently() {
    let result = run_rate_experiment(&ExperimentConfig::linear_rate()).unwrap();
    let even: Vec<usize> = (0..20).step_by(2).collect();
    let odd: Vec<usize> = (1..20).step_by(2).collect();
    let (se, so) = (
        result.slope_for_replicates(&even).unwrap(),
        result.slope_for_replicates(&odd).unwrap(),
    );
    assert!((se - so).abs() < 0.1, "{se} vs {so}");
    for w in result.summary.windows(2) {
        assert!(
            w[1].mean <= w[0].mean + 2.0 * (w[0].std_error + w[1].std_error),
            "n={} mean {} after {}",
            w[1].n,
            w[1].mean,
            w[0].mean
        );
    }
    assert_eq!(result.records.len(), 7 * 20);
}

#[test]
fn invalid_rate_configs_are_rejected() {
    let mut c = small_rate();
    c.n_grid = vec![256, 64];
    assert!(run_rate_experiment(&c).is_err());
    let mut c = small_rate();
    c.error_mode = ErrorMode::ExactAdditive;
    c.signal = SignalFunction::xor2d();
    assert!(run_rate_experiment(&c).is_err());
}

#[test]
fn xor_root_drifts_toward_the_boundary() {
    let config = XorConfig {
        n_grid: vec![100, 10_000],
        replicates: 30,
        mc_samples: 2000,
        ..XorConfig::default()
    };
    let report = run_xor_demo(&config).unwrap();
    assert!(report.population_root_delta < 1e-12);
    assert!((report.population_root_variance - 0.25).abs() < 1e-12);
    let frac: Vec<f64> = report.summary.iter().map(|r| r.near_boundary_fraction).collect();
    assert!(frac[1] >= frac[0], "{frac:?}");
}

#[test]
fn two_opposite_xor_points_are_fit_exactly() {
    let data = Dataset::new(2, vec![0.1, 0.1, 0.9, 0.1], vec![1.0, 0.0], 0).unwrap();
    let tree = fit_cart(&data, 2);
    assert_eq!(tree.training_sse(&data), 0.0);
}

#[test]
fn default_verification_suite_passes() {
    let report = run_verification_suite(&VerifyConfig::default()).unwrap();
    let failures: Vec<_> = report.failures().collect();
    assert!(report.passed, "{failures:?}");
    assert!(report
        .checks
        .iter()
        .any(|c| c.signal == BuiltinSignal::Xor.name() && c.expected_failure));
}

#[test]
fn off_by_one_denominator_is_caught() {
    let wrong = |data: &Dataset, cell: &Rectangle, j: usize, b: f64| -> Result<f64> {
        let (l, r) = empirical_decrease_parts(data, cell, j, b)?;
        let n = data.n() as f64;
        Ok((l + r) * n / (n - 1.0))
    };
    let config = VerifyConfig {
        signals: vec![BuiltinSignal::Linear],
        cases: 50,
        lower_bound_cases: 5,
        ..VerifyConfig::default()
    };
    assert!(run_verification_suite_with(&config, &library_delta_hat).unwrap().passed);
    let report = run_verification_suite_with(&config, &wrong).unwrap();
    assert!(!report.passed);
    assert!(report.failures().any(|c| c.check.contains("empirical")));
}

#[test]
fn zero_tolerance_fails_the_suite() {
    let config = VerifyConfig {
        signals: vec![BuiltinSignal::Quadratic],
        cases: 20,
        lower_bound_cases: 3,
        tolerances: Tolerances {
            empirical_identity: 0.0,
            population_identity: 0.0,
            closed_form: 0.0,
            lower_bound: 0.0,
            lrp: 0.0,
            weighted_lrp: 0.0,
            jump_bound: 0.0,
            certificate: 0.0,
        },
        ..VerifyConfig::default()
    };
    let report = run_verification_suite(&config).unwrap();
    assert!(!report.passed);
    assert!(!report.table().is_empty());
}
