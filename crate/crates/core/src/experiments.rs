//! Seeded, replicated experiments: the convergence-rate sweep, the XOR
//! demonstration and the verification suite.
//!
//! Every replicate draws its data from `derive_seed(base_seed, n, replicate)`,
//! so any subset of a run can be reproduced on its own and results do not
//! depend on thread scheduling.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::phi;
use crate::cart::{
    accurate_mean, best_empirical_split, empirical_decrease_parts, empirical_impurity_decrease, fit_cart, l2_error,
    L2Mode, Rectangle,
};
use crate::error::{Error, Result};
use crate::lrp::{
    certify_lrp, jump_bound_check, piecewise_tau_sq, sid_from_additive_lrp, sid_from_piecewise_lrp,
    weighted_lrp_check, IntervalFamily,
};
use crate::model::{
    fmt_f64, generate_dataset, Curve, Dataset, NoiseSpec, ProductDistribution, SignalFunction, UnivariateComponent,
};
use crate::population::{
    best_population_split, cell_moments, population_delta_parts, population_delta_three_term,
    population_impurity_decrease, verify_delta_closed_form, verify_split_lower_bound,
};
use crate::rng::{derive_seed, rng_from_seed, splitmix64};
use crate::sid::{estimate_sid_coefficient, CellFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DepthRule {
    /// `d = ⌈log₂ n / (1 − log₂(1−λ))⌉`.
    Scheduled { lambda: f64 },
    Fixed { depth: usize },
}

impl DepthRule {
    pub fn depth(&self, n: usize) -> Result<usize> {
        match *self {
            DepthRule::Scheduled { lambda } => crate::bounds::depth_schedule(lambda, n as u64),
            DepthRule::Fixed { depth } => Ok(depth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorMode {
    ExactAdditive,
    /// Fresh draws per replicate, seeded from the replicate seed.
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub signal: SignalFunction,
    pub distribution: ProductDistribution,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub depth: DepthRule,
    pub error_mode: ErrorMode,
}

impl ExperimentConfig {
    /// Linear signal on `[0,1]`, uniform design, uniform noise of half-width
    /// 0.25, `n = 2^8 … 2^14`, 20 replicates, depth scheduled with `λ = 3/4`.
    pub fn linear_rate() -> Self {
        Self {
            id: "linear-rate".into(),
            signal: SignalFunction::additive(vec![UnivariateComponent::identity()]).expect("valid"),
            distribution: ProductDistribution::uniform(1),
            noise: NoiseSpec::BoundedUniform { m: 0.25 },
            n_grid: (8..=14).map(|k| 1usize << k).collect(),
            replicates: 20,
            base_seed: 20240601,
            depth: DepthRule::Scheduled { lambda: 0.75 },
            error_mode: ErrorMode::ExactAdditive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Configuration(m.into()));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing");
        }
        if self.n_grid[0] < 2 {
            return bad("every n must be at least 2");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.signal.dim() != self.distribution.dim() {
            return bad("signal and distribution dimensions differ");
        }
        self.noise.validate()?;
        if let DepthRule::Scheduled { lambda } = self.depth {
            phi(lambda)?;
        }
        match self.error_mode {
            ErrorMode::ExactAdditive if !self.signal.is_additive() => {
                bad("exact-additive error mode needs an additive signal")
            }
            ErrorMode::MonteCarlo { samples } if samples < 2 => bad("Monte-Carlo mode needs at least 2 samples"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub depth: usize,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummaryRow {
    pub n: usize,
    pub depth: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slope of `log₂ mean` on `log₂ n`; `None` with fewer than
    /// three points or a mean at or below [`ERROR_FLOOR`].
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `−φ(λ)` under a scheduled depth.
    pub reference_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub config: ExperimentConfig,
    pub records: Vec<RateRecord>,
    pub summary: Vec<RateSummaryRow>,
    pub fit: RateFit,
}

/// Ordinary least squares `y = slope · x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = accurate_mean(xs);
    let my = accurate_mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Mean errors at or below this are treated as exact zeros.
pub const ERROR_FLOOR: f64 = 1e-20;

/// Log-log fit of per-n mean errors.
pub fn fit_rate(summary: &[RateSummaryRow]) -> (Option<f64>, Option<f64>) {
    if summary.len() < 3 || summary.iter().any(|r| !(r.mean > ERROR_FLOOR)) {
        return (None, None);
    }
    let xs: Vec<f64> = summary.iter().map(|r| (r.n as f64).log2()).collect();
    let ys: Vec<f64> = summary.iter().map(|r| r.mean.log2()).collect();
    match least_squares(&xs, &ys) {
        Some((s, i)) => (Some(s), Some(i)),
        None => (None, None),
    }
}

fn summarize(config: &ExperimentConfig, records: &[RateRecord], replicates: &[usize]) -> Vec<RateSummaryRow> {
    config
        .n_grid
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && replicates.contains(&r.replicate))
                .map(|r| r.error)
                .collect();
            let k = errs.len();
            let mean = accurate_mean(&errs);
            let std_error = if k > 1 {
                let var: f64 = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            } else {
                0.0
            };
            let depth = records.iter().find(|r| r.n == n).map_or(0, |r| r.depth);
            RateSummaryRow {
                n,
                depth,
                mean,
                std_error,
            }
        })
        .collect()
}

fn one_replicate(config: &ExperimentConfig, n: usize, replicate: usize) -> Result<RateRecord> {
    let seed = derive_seed(config.base_seed, n as u64, replicate as u64);
    let run = || -> Result<RateRecord> {
        let depth = config.depth.depth(n)?;
        let data = generate_dataset(&config.signal, &config.distribution, &config.noise, n, seed)?;
        let tree = fit_cart(&data, depth);
        let mode = match config.error_mode {
            ErrorMode::ExactAdditive => L2Mode::ExactAdditive,
            ErrorMode::MonteCarlo { samples } => L2Mode::MonteCarlo {
                samples,
                seed: splitmix64(seed),
            },
        };
        let err = l2_error(&tree, &config.signal, &config.distribution, mode)?;
        Ok(RateRecord {
            n,
            replicate,
            seed,
            depth,
            error: err.value.max(0.0),
        })
    };
    run().map_err(|e| Error::Replicate {
        n,
        replicate,
        seed,
        source: Box::new(e),
    })
}

/// Fits CART at every `(n, replicate)` and aggregates the L² errors.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<RateResult> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let records: Vec<RateRecord> = tasks
        .par_iter()
        .map(|&(n, r)| one_replicate(config, n, r))
        .collect::<Result<_>>()?;
    let all: Vec<usize> = (0..config.replicates).collect();
    let summary = summarize(config, &records, &all);
    let (slope, intercept) = fit_rate(&summary);
    let reference_slope = match config.depth {
        DepthRule::Scheduled { lambda } => Some(-phi(lambda)?),
        DepthRule::Fixed { .. } => None,
    };
    Ok(RateResult {
        config: config.clone(),
        records,
        summary,
        fit: RateFit {
            slope,
            intercept,
            reference_slope,
        },
    })
}

impl RateResult {
    /// Slope refitted on a subset of replicates.
    pub fn slope_for_replicates(&self, replicates: &[usize]) -> Option<f64> {
        fit_rate(&summarize(&self.config, &self.records, replicates)).0
    }

    /// Writes `rate.csv`, `rate_summary.csv` and `rate_fit.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("rate.csv"))?;
        w.write_record(["n", "replicate", "seed", "depth", "error"])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.depth.to_string(),
                fmt_f64(r.error),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("rate_summary.csv"))?;
        w.write_record(["n", "depth", "mean", "stderr"])?;
        for r in &self.summary {
            w.write_record([r.n.to_string(), r.depth.to_string(), fmt_f64(r.mean), fmt_f64(r.std_error)])?;
        }
        w.flush()?;
        write_json(&dir.join("rate_fit.json"), &self.fit)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XorConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "XorConfig::default_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "XorConfig::default_samples")]
    pub mc_samples: usize,
    /// Root thresholds closer than this to 0 or 1 count as boundary splits.
    #[serde(default = "XorConfig::default_window")]
    pub boundary_window: f64,
    #[serde(default = "XorConfig::default_grid")]
    pub grid: usize,
}

impl XorConfig {
    fn default_noise() -> NoiseSpec {
        NoiseSpec::BoundedUniform { m: 0.5 }
    }
    fn default_samples() -> usize {
        20_000
    }
    fn default_window() -> f64 {
        0.1
    }
    fn default_grid() -> usize {
        512
    }
}

impl Default for XorConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 1000, 10_000],
            replicates: 50,
            base_seed: 7,
            noise: Self::default_noise(),
            mc_samples: Self::default_samples(),
            boundary_window: Self::default_window(),
            grid: Self::default_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XorRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    /// 1-based; `None` when the root could not be split.
    pub root_feature: Option<usize>,
    pub root_threshold: Option<f64>,
    pub boundary_distance: Option<f64>,
    pub l2_error: f64,
    pub l2_std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XorSummaryRow {
    pub n: usize,
    pub near_boundary_fraction: f64,
    pub mean_l2_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorReport {
    pub config: XorConfig,
    /// `sup_{j,b} Δ([0,1]², j, b)`.
    pub population_root_delta: f64,
    pub population_root_variance: f64,
    pub population_root_ratio: f64,
    pub records: Vec<XorRecord>,
    pub summary: Vec<XorSummaryRow>,
}

/// Depth-2 CART on the XOR signal: where the root split lands, and the
/// population view of the root cell.
pub fn run_xor_demo(config: &XorConfig) -> Result<XorReport> {
    if config.n_grid.is_empty() || config.replicates == 0 || config.n_grid.contains(&0) {
        return Err(Error::Configuration("xor demo needs a non-empty n_grid of positive sizes and replicates ≥ 1".into()));
    }
    config.noise.validate()?;
    let f = SignalFunction::xor2d();
    let dist = ProductDistribution::uniform(2);
    let root = Rectangle::unit(2);
    let moments = cell_moments(&f, &dist, &root)?;
    let best = best_population_split(&f, &dist, &root, config.grid)?;
    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let records: Vec<XorRecord> = tasks
        .par_iter()
        .map(|&(n, replicate)| {
            let seed = derive_seed(config.base_seed, n as u64, replicate as u64);
            let data = generate_dataset(&f, &dist, &config.noise, n, seed)?;
            let tree = fit_cart(&data, 2);
            let split = tree.nodes()[0].split;
            let err = l2_error(
                &tree,
                &f,
                &dist,
                L2Mode::MonteCarlo {
                    samples: config.mc_samples.max(2),
                    seed: splitmix64(seed),
                },
            )?;
            Ok(XorRecord {
                n,
                replicate,
                seed,
                root_feature: split.map(|s| s.feature + 1),
                root_threshold: split.map(|s| s.threshold),
                boundary_distance: split.map(|s| s.threshold.min(1.0 - s.threshold)),
                l2_error: err.value,
                l2_std_error: err.std_error,
            })
        })
        .collect::<Result<_>>()?;
    let summary = config
        .n_grid
        .iter()
        .map(|&n| {
            let rows: Vec<&XorRecord> = records.iter().filter(|r| r.n == n).collect();
            let near = rows
                .iter()
                .filter(|r| r.boundary_distance.is_some_and(|d| d < config.boundary_window))
                .count();
            XorSummaryRow {
                n,
                near_boundary_fraction: near as f64 / rows.len() as f64,
                mean_l2_error: accurate_mean(&rows.iter().map(|r| r.l2_error).collect::<Vec<_>>()),
            }
        })
        .collect();
    let scale = moments.mass * moments.variance;
    Ok(XorReport {
        config: config.clone(),
        population_root_delta: best.delta,
        population_root_variance: moments.variance,
        population_root_ratio: if scale > 0.0 { best.delta / scale } else { 0.0 },
        records,
        summary,
    })
}

impl XorReport {
    /// Writes `xor.csv` (one row per replicate) and `xor_summary.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("xor.csv"))?;
        w.write_record([
            "n",
            "replicate",
            "seed",
            "root_feature",
            "root_threshold",
            "boundary_distance",
            "l2_error",
            "l2_stderr",
        ])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.root_feature.map(|j| j.to_string()).unwrap_or_default(),
                opt(r.root_threshold),
                opt(r.boundary_distance),
                fmt_f64(r.l2_error),
                fmt_f64(r.l2_std_error),
            ])?;
        }
        w.flush()?;
        #[derive(Serialize)]
        struct Summary<'a> {
            population_root_delta: f64,
            population_root_variance: f64,
            population_root_ratio: f64,
            summary: &'a [XorSummaryRow],
        }
        write_json(
            &dir.join("xor_summary.json"),
            &Summary {
                population_root_delta: self.population_root_delta,
                population_root_variance: self.population_root_variance,
                population_root_ratio: self.population_root_ratio,
                summary: &self.summary,
            },
        )
    }
}

/// Signals known to the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinSignal {
    /// `u₁ + u₂`.
    Linear,
    /// `u₁² + u₂²`, each 2-smooth and 2-strongly convex.
    Quadratic,
    /// A unit jump at ½ on top of a slope-1 line in `u₁`, plus `u₂`.
    TwoPiece,
    Xor,
}

impl BuiltinSignal {
    pub fn signal(&self) -> SignalFunction {
        let square = UnivariateComponent::SmoothStronglyConvex {
            l: 2.0,
            sigma: 2.0,
            curve: Curve::Polynomial {
                coefficients: vec![0.0, 0.0, 1.0],
            },
        };
        let f = match self {
            BuiltinSignal::Linear => SignalFunction::additive(vec![UnivariateComponent::identity(); 2]),
            BuiltinSignal::Quadratic => SignalFunction::additive(vec![square.clone(), square]),
            BuiltinSignal::TwoPiece => {
                SignalFunction::additive(vec![two_piece_component(), UnivariateComponent::identity()])
            }
            BuiltinSignal::Xor => Ok(SignalFunction::xor2d()),
        };
        f.expect("built-in signals are valid")
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinSignal::Linear => "linear",
            BuiltinSignal::Quadratic => "quadratic",
            BuiltinSignal::TwoPiece => "two-piece",
            BuiltinSignal::Xor => "xor",
        }
    }
}

/// `t` on `[0, ½)`, `t + 1` on `[½, 1]`; each piece has LRP constant 2√3.
pub fn two_piece_component() -> UnivariateComponent {
    UnivariateComponent::Piecewise {
        breakpoints: vec![0.0, 0.5, 1.0],
        pieces: vec![
            UnivariateComponent::identity(),
            UnivariateComponent::Linear {
                slope: 1.0,
                intercept: 1.0,
            },
        ],
        alpha: 1.0,
        beta: 2.0 * 3f64.sqrt(),
    }
}

/// Per-check tolerances of the verification suite. A check passes when its
/// worst residual (or violation) is strictly below the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub empirical_identity: f64,
    pub population_identity: f64,
    pub closed_form: f64,
    pub lower_bound: f64,
    pub lrp: f64,
    pub weighted_lrp: f64,
    pub jump_bound: f64,
    pub certificate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            empirical_identity: 1e-10,
            population_identity: 1e-9,
            closed_form: 1e-8,
            lower_bound: 1e-8,
            lrp: 1e-6,
            weighted_lrp: 1e-9,
            jump_bound: 1e-9,
            certificate: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub signals: Vec<BuiltinSignal>,
    pub cases: usize,
    pub lower_bound_cases: usize,
    pub seed: u64,
    pub grid: usize,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            signals: vec![
                BuiltinSignal::Linear,
                BuiltinSignal::Quadratic,
                BuiltinSignal::TwoPiece,
                BuiltinSignal::Xor,
            ],
            cases: 500,
            lower_bound_cases: 50,
            seed: 11,
            grid: 128,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub signal: String,
    pub cases: usize,
    /// Largest residual, or largest violation `−slack` for inequalities.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// The property is known not to hold for this signal; the check
    /// records the finding and does not fail the suite.
    pub expected_failure: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed && !c.expected_failure)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("verify.json"), self)
    }

    /// Plain-text table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<10} {:>6} {:>12} {:>10}  status\n", "check", "signal", "cases", "worst", "tol");
        for c in &self.checks {
            let status = match (c.passed, c.expected_failure) {
                (true, _) => "pass",
                (false, true) => "expected-fail",
                (false, false) => "FAIL",
            };
            out.push_str(&format!(
                "{:<28} {:<10} {:>6} {:>12.3e} {:>10.1e}  {status}\n",
                c.check, c.signal, c.cases, c.worst, c.tolerance
            ));
        }
        out
    }
}

/// Random rectangle in `[0,1]^p` with every side at least `min_width` long.
pub fn random_cell<R: Rng>(rng: &mut R, p: usize, min_width: f64) -> Rectangle {
    let mut lo = Vec::with_capacity(p);
    let mut hi = Vec::with_capacity(p);
    for _ in 0..p {
        let a = rng.random::<f64>() * (1.0 - min_width);
        let b = a + min_width + rng.random::<f64>() * (1.0 - a - min_width);
        lo.push(a);
        hi.push(b.min(1.0));
    }
    Rectangle::new(lo, hi).expect("sides lie in [0,1]")
}

/// Random interior split `(j, b)` of `cell`.
fn random_split<R: Rng>(rng: &mut R, cell: &Rectangle) -> (usize, f64) {
    let j = rng.random_range(0..cell.dim());
    let t = 0.02 + 0.96 * rng.random::<f64>();
    (j, cell.lower()[j] + t * cell.width(j))
}

/// Signature of an empirical impurity-decrease implementation, injectable
/// for mutation tests.
pub type DeltaHatFn<'a> = dyn Fn(&Dataset, &Rectangle, usize, f64) -> Result<f64> + Sync + 'a;

/// The library's Δ̂.
pub fn library_delta_hat(data: &Dataset, cell: &Rectangle, j: usize, b: f64) -> Result<f64> {
    Ok(empirical_impurity_decrease(data, cell, j, b)?.delta)
}

/// Worst `|Δ̂ − (Δ̂_L + Δ̂_R)|` over `cases` random datasets, cells and splits.
pub fn empirical_identity_residual(f: &SignalFunction, cases: usize, seed: u64, delta_hat: &DeltaHatFn) -> Result<f64> {
    let dist = ProductDistribution::uniform(f.dim());
    let worst = (0..cases)
        .into_par_iter()
        .map(|case| -> Result<f64> {
            let mut rng = rng_from_seed(derive_seed(seed, 1, case as u64));
            loop {
                let n = rng.random_range(4..=80);
                let data = generate_dataset(f, &dist, &NoiseSpec::BoundedUniform { m: 0.5 }, n, rng.random())?;
                let cell = if rng.random::<bool>() {
                    Rectangle::unit(f.dim())
                } else {
                    random_cell(&mut rng, f.dim(), 0.3)
                };
                let inside: Vec<usize> = (0..n).filter(|&i| cell.contains(data.row(i))).collect();
                if inside.len() < 2 {
                    continue;
                }
                let j = rng.random_range(0..f.dim());
                let mut vals: Vec<f64> = inside.iter().map(|&i| data.feature(i, j)).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                if vals.len() < 2 {
                    continue;
                }
                let k = rng.random_range(0..vals.len() - 1);
                let b = crate::cart::gap_midpoint(vals[k], vals[k + 1]);
                let d = delta_hat(&data, &cell, j, b)?;
                let (l, r) = empirical_decrease_parts(&data, &cell, j, b)?;
                return Ok((d - (l + r)).abs());
            }
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Worst population identity residual over random cells and splits:
/// `max(|Δ − (Δ_L + Δ_R)|, |three-term − (Δ_L + Δ_R)|)`.
pub fn population_identity_residual(f: &SignalFunction, cases: usize, seed: u64) -> Result<f64> {
    let dist = ProductDistribution::uniform(f.dim());
    Ok((0..cases)
        .into_par_iter()
        .map(|case| -> Result<f64> {
            let mut rng = rng_from_seed(derive_seed(seed, 2, case as u64));
            let cell = random_cell(&mut rng, f.dim(), 0.05);
            let (j, b) = random_split(&mut rng, &cell);
            let delta = population_impurity_decrease(f, &dist, &cell, j, b)?.delta;
            let three = population_delta_three_term(f, &dist, &cell, j, b)?;
            let (l, r) = population_delta_parts(f, &dist, &cell, j, b)?;
            Ok((delta - (l + r)).abs().max((three - (l + r)).abs()))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Worst closed-form residual over random cells and splits.
pub fn closed_form_residual(f: &SignalFunction, cases: usize, seed: u64) -> Result<f64> {
    let dist = ProductDistribution::uniform(f.dim());
    Ok((0..cases)
        .into_par_iter()
        .map(|case| -> Result<f64> {
            let mut rng = rng_from_seed(derive_seed(seed, 3, case as u64));
            let cell = random_cell(&mut rng, f.dim(), 0.05);
            let (j, b) = random_split(&mut rng, &cell);
            verify_delta_closed_form(f, &dist, &cell, j, b)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Smallest split-lower-bound slack over random cells (additive signals).
pub fn lower_bound_min_slack(f: &SignalFunction, cases: usize, seed: u64, grid: usize) -> Result<f64> {
    let dist = ProductDistribution::uniform(f.dim());
    Ok((0..cases)
        .into_par_iter()
        .map(|case| -> Result<f64> {
            let mut rng = rng_from_seed(derive_seed(seed, 4, case as u64));
            let cell = random_cell(&mut rng, f.dim(), 0.05);
            Ok(verify_split_lower_bound(f, &dist, &cell, grid)?.slack)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Smallest jump-inequality slack over random instances: a unit-size jump
/// (random sign and height) at a random interior point, with small random
/// slopes on both sides.
pub fn jump_bound_min_slack(cases: usize, seed: u64) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for case in 0..cases {
        let mut rng = rng_from_seed(derive_seed(seed, 5, case as u64));
        let a = 0.3 * rng.random::<f64>();
        let b = 0.7 + 0.3 * rng.random::<f64>();
        let c = a + (0.1 + 0.8 * rng.random::<f64>()) * (b - a);
        let jump = (0.5 + rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        // slopes small enough that 4·∫|h'| stays below the jump
        let cap = jump.abs() / (4.5 * (b - a));
        let s1 = cap * (2.0 * rng.random::<f64>() - 1.0);
        let s2 = cap * (2.0 * rng.random::<f64>() - 1.0);
        let base = rng.random::<f64>();
        let h = UnivariateComponent::Piecewise {
            breakpoints: vec![0.0, c, 1.0],
            pieces: vec![
                UnivariateComponent::Linear {
                    slope: s1,
                    intercept: base - s1 * c,
                },
                UnivariateComponent::Linear {
                    slope: s2,
                    intercept: base + jump - s2 * c,
                },
            ],
            alpha: 1.0,
            beta: 2.0 * 3f64.sqrt(),
        };
        worst = worst.min(jump_bound_check(&h, a, c, b)?.slack);
    }
    Ok(worst)
}

fn check(check: &str, signal: &str, cases: usize, worst: f64, tolerance: f64, note: &str) -> CheckResult {
    CheckResult {
        check: check.into(),
        signal: signal.into(),
        cases,
        worst,
        tolerance,
        passed: worst < tolerance,
        expected_failure: false,
        note: note.into(),
    }
}

/// Runs the suite with the library's Δ̂.
pub fn run_verification_suite(config: &VerifyConfig) -> Result<VerifyReport> {
    run_verification_suite_with(config, &library_delta_hat)
}

/// Runs every identity and inequality check on the configured signals.
pub fn run_verification_suite_with(config: &VerifyConfig, delta_hat: &DeltaHatFn) -> Result<VerifyReport> {
    let tol = &config.tolerances;
    let mut checks = Vec::new();
    for (idx, sig) in config.signals.iter().enumerate() {
        let f = sig.signal();
        let name = sig.name();
        let seed = derive_seed(config.seed, 100, idx as u64);
        let cases = config.cases;
        checks.push(check(
            "empirical-identity",
            name,
            cases,
            empirical_identity_residual(&f, cases, seed, delta_hat)?,
            tol.empirical_identity,
            "|Δ̂ − (Δ̂_L + Δ̂_R)|",
        ));
        checks.push(check(
            "population-identity",
            name,
            cases,
            population_identity_residual(&f, cases, seed)?,
            tol.population_identity,
            "|Δ − (Δ_L + Δ_R)| and total-variance decomposition",
        ));
        checks.push(check(
            "closed-form-delta",
            name,
            cases,
            closed_form_residual(&f, cases, seed)?,
            tol.closed_form,
            "|Δ − (E f 1_R − ν P_R)² P / (P_L P_R)|",
        ));
        let uniform = ProductDistribution::uniform(f.dim());
        if let Some(components) = f.components() {
            let k = config.lower_bound_cases;
            checks.push(check(
                "split-lower-bound",
                name,
                k,
                -lower_bound_min_slack(&f, k, seed, config.grid)?,
                tol.lower_bound,
                "violation of max √Δ ≥ √P Var / Σ∫√(q(1−q)) dV",
            ));
            let mut taus = Vec::new();
            for (k, g) in components.iter().enumerate() {
                match g {
                    UnivariateComponent::Piecewise { .. } => {
                        let (worst, n) = weighted_piecewise_violation(g, derive_seed(seed, 6, k as u64))?;
                        checks.push(check(
                            &format!("weighted-lrp[{}]", k + 1),
                            name,
                            n,
                            worst,
                            tol.weighted_lrp,
                            "relative violation of the weighted condition at the piecewise τ²",
                        ));
                    }
                    _ => {
                        let cert = certify_lrp(g, (0.0, 1.0), IntervalFamily::default())?;
                        let excess = match cert.tau_closed_form {
                            Some(c) if cert.unbounded_interval.is_none() => cert.tau_measured - c,
                            Some(_) => f64::INFINITY,
                            None => f64::NEG_INFINITY,
                        };
                        checks.push(check(
                            &format!("lrp-certificate[{}]", k + 1),
                            name,
                            1,
                            excess,
                            tol.lrp,
                            &format!("tau_measured = {:.6}", cert.tau_measured),
                        ));
                        if let Some(c) = cert.tau_closed_form {
                            taus.push(c);
                        }
                    }
                }
            }
            // certified coefficient vs the measured one
            let certified = match sig {
                BuiltinSignal::TwoPiece => sid_from_piecewise_lrp(2, 1.0, 2.0 * 3f64.sqrt(), f.dim(), 1.0, 1.0)?,
                _ => sid_from_additive_lrp(&taus, f.dim(), 1.0, 1.0)?,
            };
            let report = estimate_sid_coefficient(&f, &uniform, CellFamily::IntervalGrid { k: 6 }, config.grid)?;
            checks.push(check(
                "certificate-consistency",
                name,
                report.cells_searched,
                certified - report.lambda_hat,
                tol.certificate,
                &format!("certified {certified:.6e} vs lambda_hat {:.6}", report.lambda_hat),
            ));
        } else {
            let report = estimate_sid_coefficient(&f, &uniform, CellFamily::Dyadic { depth: 1 }, config.grid)?;
            let mut c = check(
                "sid-satisfied",
                name,
                report.cells_searched,
                -report.lambda_hat,
                -1e-3,
                &format!("lambda_hat {:.3e}: SID not satisfied", report.lambda_hat),
            );
            c.expected_failure = true;
            checks.push(c);
        }
    }
    let jump_cases = 100;
    checks.push(check(
        "jump-bound",
        "random",
        jump_cases,
        -jump_bound_min_slack(jump_cases, config.seed)?,
        tol.jump_bound,
        "violation of inf_w ∫(h−w)² ≥ min(c−a, b−c) Δh²/16",
    ));
    let passed = checks.iter().all(|c| c.passed || c.expected_failure);
    Ok(VerifyReport { checks, passed })
}

/// Weighted condition on random subintervals with uniform `q`, using the
/// piecewise `τ²` for the component. Returns `(worst relative violation,
/// intervals)`.
pub fn weighted_piecewise_violation(g: &UnivariateComponent, seed: u64) -> Result<(f64, usize)> {
    let UnivariateComponent::Piecewise {
        breakpoints,
        alpha,
        beta,
        ..
    } = g
    else {
        return Err(Error::Argument("weighted check expects a piecewise component".into()));
    };
    let tau_sq = piecewise_tau_sq(breakpoints.len() - 1, *alpha, *beta, 1.0, 1.0)?;
    let intervals = IntervalFamily::Random { count: 100, seed }.intervals(0.0, 1.0)?;
    let mut worst = f64::NEG_INFINITY;
    for &(a, b) in &intervals {
        let q = |t: f64| (t - a) / (b - a);
        let chk = weighted_lrp_check(g, a, b, &q)?;
        let scale = chk.lhs.max(tau_sq * chk.variance_term).max(1e-300);
        worst = worst.max(-chk.slack(tau_sq) / scale);
    }
    Ok((worst, intervals.len()))
}

/// Split on the root of a dataset, for reporting.
pub fn root_split(data: &Dataset) -> Result<Option<crate::cart::SplitStatistics>> {
    best_empirical_split(data, &Rectangle::unit(data.p()))
}
