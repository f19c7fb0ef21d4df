//! `cartlab` command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cartlab::cart::{fit_cart, predict, RegressionTree, TreeJson};
use cartlab::experiments::{
    run_rate_experiment, run_verification_suite, run_xor_demo, DepthRule, ErrorMode, ExperimentConfig, Tolerances,
    VerifyConfig, XorConfig,
};
use cartlab::lrp::{certify_lrp, IntervalFamily};
use cartlab::model::{Dataset, ProductDistribution, SignalFunction, UnivariateComponent};
use cartlab::sid::{estimate_sid_coefficient, CellFamily};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "cartlab", version, about = "Regression-tree consistency laboratory")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "CARTLAB_OUT_DIR", default_value = "cartlab-out")]
    out: PathBuf,

    /// Worker threads for sweeps and experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a depth-limited CART tree to a CSV with header x1,...,xp,y.
    Fit(FitArgs),
    /// Evaluate a saved tree at the rows of a CSV.
    Predict(PredictArgs),
    /// Estimate the impurity-decrease coefficient of a signal.
    SidCheck(SidArgs),
    /// Measure the interval ratio of a univariate component.
    LrpCheck(LrpArgs),
    /// Run a convergence-rate experiment.
    Rate(RateArgs),
    /// Run the XOR demonstration.
    Xor(XorArgs),
    /// Run the numerical verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    depth: i64,
    /// Tree JSON path (default: <out>/tree.json).
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    tree: PathBuf,
    /// CSV with header x1,...,xp and an optional trailing y column.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyKind {
    IntervalGrid,
    Random,
    Dyadic,
}

#[derive(Args, Debug)]
struct SidArgs {
    /// Signal definition (TOML, or JSON by extension).
    #[arg(long)]
    signal: PathBuf,
    /// Product-distribution definition (default: uniform).
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyKind>,
    /// Grid resolution of the interval-grid family.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Number of random cells.
    #[arg(long, default_value_t = 500)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum level of the dyadic family.
    #[arg(long, default_value_t = 3)]
    dyadic_depth: u32,
    /// Threshold grid size per feature before refinement.
    #[arg(long, default_value_t = 512)]
    grid: usize,
}

#[derive(Args, Debug)]
struct LrpArgs {
    /// Component definition (TOML, or JSON by extension).
    #[arg(long)]
    component: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hi: f64,
    /// Grid intervals per side.
    #[arg(long, default_value_t = 50)]
    grid_k: usize,
    /// Additional random intervals.
    #[arg(long, default_value_t = 200)]
    random_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RateArgs {
    /// Experiment config (default: the built-in linear 1-d setup).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduled depth with this coefficient.
    #[arg(long, conflicts_with = "depth")]
    lambda: Option<f64>,
    /// Fixed depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Monte-Carlo error with this many samples.
    #[arg(long)]
    mc_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct XorArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mc_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    /// Use this value for every tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(cartlab::Error),
}

impl From<cartlab::Error> for Failure {
    fn from(e: cartlab::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

fn lib_code(e: &cartlab::Error) -> u8 {
    use cartlab::Error::*;
    match e {
        Replicate { source, .. } => lib_code(source),
        Tolerance { .. } | EmptyCell | DegenerateCell | SplitInfeasible { .. } => 1,
        _ => 2,
    }
}

type Outcome = Result<bool, Failure>;

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: usize,
    out_dir: &'a Path,
    config: &'a C,
    outputs: Vec<&'a str>,
    passed: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(cartlab::Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_manifest<C: Serialize>(out: &Path, command: &str, config: &C, outputs: &[&str], passed: bool) -> Result<(), Failure> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        out_dir: out,
        config,
        outputs: outputs.iter().copied().chain(["manifest.json"]).collect(),
        passed,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

/// Reads a JSON file when the extension is `.json`, TOML otherwise.
fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Lib(cartlab::Error::Configuration(format!("{}: {e}", path.display()))))
}

fn cmd_fit(out: &Path, args: &FitArgs) -> Outcome {
    if args.depth < 0 {
        return Err(Failure::Usage(format!("depth must be non-negative, got {}", args.depth)));
    }
    let depth = args.depth as usize;
    let data = Dataset::load_csv(&args.data)?;
    let tree = fit_cart(&data, depth);
    let tree_path = args.tree.clone().unwrap_or_else(|| out.join("tree.json"));
    write_json(&tree_path, &tree.to_json())?;

    #[derive(Serialize)]
    struct FitSummary {
        n: usize,
        p: usize,
        depth: usize,
        training_sse: f64,
        leaf_count: usize,
    }
    let summary = FitSummary {
        n: data.n(),
        p: data.p(),
        depth,
        training_sse: tree.training_sse(&data),
        leaf_count: tree.leaf_count(),
    };
    write_json(&out.join("fit_summary.json"), &summary)?;
    println!(
        "fitted n={} p={} depth={} leaves={} training SSE={:.6e}",
        summary.n, summary.p, depth, summary.leaf_count, summary.training_sse
    );

    #[derive(Serialize)]
    struct FitConfig<'a> {
        data: &'a Path,
        depth: usize,
        tree: &'a Path,
    }
    let config = FitConfig {
        data: &args.data,
        depth,
        tree: &tree_path,
    };
    write_manifest(out, "fit", &config, &["fit_summary.json"], true)?;
    Ok(true)
}

fn read_points(path: &Path, p: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(cartlab::Error::from)?.clone();
    let expected: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < p || cols[..p] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(cartlab::Error::Parse {
            line: 1,
            message: format!("header must start with {}", expected.join(",")),
        }
        .into());
    }
    let mut points = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| cartlab::Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let row = (0..p)
            .map(|j| {
                rec.get(j).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| cartlab::Error::Parse {
                    line,
                    message: format!("column x{} is missing or not a number", j + 1),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        points.push(row);
    }
    Ok(points)
}

fn cmd_predict(out: &Path, args: &PredictArgs) -> Outcome {
    let json: TreeJson = load(&args.tree)?;
    let tree = RegressionTree::from_json(&json)?;
    let points = read_points(&args.data, tree.dim())?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv")).map_err(cartlab::Error::from)?;
    let mut header: Vec<String> = (1..=tree.dim()).map(|j| format!("x{j}")).collect();
    header.push("prediction".into());
    w.write_record(&header).map_err(cartlab::Error::from)?;
    for u in &points {
        let mut row: Vec<String> = u.iter().map(|&v| cartlab::model::fmt_f64(v)).collect();
        row.push(cartlab::model::fmt_f64(predict(&tree, u)?));
        w.write_record(&row).map_err(cartlab::Error::from)?;
    }
    w.flush()?;
    println!("predicted {} points", points.len());

    #[derive(Serialize)]
    struct PredictConfig<'a> {
        tree: &'a Path,
        data: &'a Path,
    }
    let config = PredictConfig {
        tree: &args.tree,
        data: &args.data,
    };
    write_manifest(out, "predict", &config, &["predictions.csv"], true)?;
    Ok(true)
}

fn cmd_sid(out: &Path, args: &SidArgs) -> Outcome {
    let signal: SignalFunction = load(&args.signal)?;
    let distribution = match &args.distribution {
        Some(path) => load::<ProductDistribution>(path)?,
        None => ProductDistribution::uniform(signal.dim()),
    };
    let family = match args.family {
        None => CellFamily::default_for(signal.dim()),
        Some(FamilyKind::IntervalGrid) => CellFamily::IntervalGrid { k: args.k },
        Some(FamilyKind::Random) => CellFamily::RandomCells {
            count: args.count,
            seed: args.seed,
        },
        Some(FamilyKind::Dyadic) => CellFamily::Dyadic {
            depth: args.dyadic_depth,
        },
    };
    let report = estimate_sid_coefficient(&signal, &distribution, family, args.grid)?;
    report.save(out)?;
    println!(
        "lambda_hat = {:.6} over {} cells ({} skipped)",
        report.lambda_hat, report.cells_searched, report.cells_skipped
    );

    #[derive(Serialize)]
    struct SidConfig<'a> {
        signal: &'a SignalFunction,
        distribution: &'a ProductDistribution,
        family: CellFamily,
        grid: usize,
    }
    let config = SidConfig {
        signal: &signal,
        distribution: &distribution,
        family,
        grid: args.grid,
    };
    write_manifest(out, "sid-check", &config, &["sid_report.json", "sid_cells.csv"], true)?;
    Ok(true)
}

fn cmd_lrp(out: &Path, args: &LrpArgs) -> Outcome {
    let component: UnivariateComponent = load(&args.component)?;
    component.validate()?;
    let family = IntervalFamily::GridAndRandom {
        k: args.grid_k,
        count: args.random_count,
        seed: args.seed,
    };
    let cert = certify_lrp(&component, (args.lo, args.hi), family)?;
    write_json(&out.join("lrp_certificate.json"), &cert)?;
    if let Some((a, b)) = cert.unbounded_interval {
        println!("tau unbounded: ratio blows up on [{a}, {b}]");
    } else {
        match cert.tau_closed_form {
            Some(c) => println!("tau = {:.8} (closed form {c:.8})", cert.tau_measured),
            None => println!("tau = {:.8}", cert.tau_measured),
        }
    }
    println!("{}", if cert.passed { "PASS" } else { "FAIL" });
    write_manifest(out, "lrp-check", &cert, &["lrp_certificate.json"], cert.passed)?;
    Ok(cert.passed)
}

fn cmd_rate(out: &Path, args: &RateArgs) -> Outcome {
    let mut config = match &args.config {
        Some(path) => load::<ExperimentConfig>(path)?,
        None => ExperimentConfig::linear_rate(),
    };
    if let Some(g) = &args.n_grid {
        config.n_grid = g.clone();
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(lambda) = args.lambda {
        config.depth = DepthRule::Scheduled { lambda };
    }
    if let Some(depth) = args.depth {
        config.depth = DepthRule::Fixed { depth };
    }
    if let Some(samples) = args.mc_samples {
        config.error_mode = ErrorMode::MonteCarlo { samples };
    }
    config.validate()?;
    let result = run_rate_experiment(&config)?;
    result.save(out)?;
    for row in &result.summary {
        println!("n={:<8} depth={:<3} mean={:.6e} se={:.2e}", row.n, row.depth, row.mean, row.std_error);
    }
    match result.fit.slope {
        Some(s) => println!("slope = {s:.4}"),
        None => println!("slope undefined"),
    }
    write_manifest(out, "rate", &config, &["rate.csv", "rate_summary.csv", "rate_fit.json"], true)?;
    Ok(true)
}

fn cmd_xor(out: &Path, args: &XorArgs) -> Outcome {
    let mut config = match &args.config {
        Some(path) => load::<XorConfig>(path)?,
        None => XorConfig::default(),
    };
    if let Some(g) = &args.n_grid {
        config.n_grid = g.clone();
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(m) = args.mc_samples {
        config.mc_samples = m;
    }
    let report = run_xor_demo(&config)?;
    report.save(out)?;
    println!(
        "root: sup delta = {:.3e}, variance = {:.4}",
        report.population_root_delta, report.population_root_variance
    );
    for row in &report.summary {
        println!(
            "n={:<8} near-boundary={:.3} mean L2={:.4e}",
            row.n, row.near_boundary_fraction, row.mean_l2_error
        );
    }
    write_manifest(out, "xor", &config, &["xor.csv", "xor_summary.json"], true)?;
    Ok(true)
}

fn cmd_verify(out: &Path, args: &VerifyArgs) -> Outcome {
    let mut config = match &args.config {
        Some(path) => load::<VerifyConfig>(path)?,
        None => VerifyConfig::default(),
    };
    if let Some(c) = args.cases {
        config.cases = c;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(g) = args.grid {
        config.grid = g;
    }
    if let Some(t) = args.tolerance {
        config.tolerances = Tolerances {
            empirical_identity: t,
            population_identity: t,
            closed_form: t,
            lower_bound: t,
            lrp: t,
            weighted_lrp: t,
            jump_bound: t,
            certificate: t,
        };
    }
    let report = run_verification_suite(&config)?;
    report.save(out)?;
    print!("{}", report.table());
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    write_manifest(out, "verify", &config, &["verify.json"], report.passed)?;
    Ok(report.passed)
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| Failure::Usage(format!("{}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Fit(a) => cmd_fit(out, a),
        Command::Predict(a) => cmd_predict(out, a),
        Command::SidCheck(a) => cmd_sid(out, a),
        Command::LrpCheck(a) => cmd_lrp(out, a),
        Command::Rate(a) => cmd_rate(out, a),
        Command::Xor(a) => cmd_xor(out, a),
        Command::Verify(a) => cmd_verify(out, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(lib_code(&e))
        }
    }
}
