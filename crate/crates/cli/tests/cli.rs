use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cartlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CARTLAB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn fit_four_points_splits_at_the_middle() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x1,y\n0.1,0\n0.2,0\n0.8,1\n0.9,1\n");
    let o = run(dir.path(), &["fit", "--data", data.to_str().unwrap(), "--depth", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tree = json(&dir.path().join("tree.json"));
    assert_eq!(tree["nodes"][0]["feature"], 1);
    assert_eq!(tree["nodes"][0]["threshold"], 0.5);
    let summary = json(&dir.path().join("fit_summary.json"));
    assert_eq!(summary["leaf_count"], 2);
    assert_eq!(summary["training_sse"], 0.0);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["config"]["depth"], 1);

    let o = run(
        dir.path(),
        &["predict", "--tree", dir.path().join("tree.json").to_str().unwrap(), "--data", data.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0);
    let preds = std::fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    let last: Vec<f64> = preds.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(last, vec![0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn depth_zero_gives_a_single_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x1,y\n0.1,0\n0.2,0\n0.8,1\n0.9,1\n");
    let o = run(dir.path(), &["fit", "--data", data.to_str().unwrap(), "--depth", "0"]);
    assert_eq!(code(&o), 0);
    let tree = json(&dir.path().join("tree.json"));
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 1);
    assert_eq!(tree["nodes"][0]["prediction"], 0.5);
}

#[test]
fn fit_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.csv", "");
    let o = run(dir.path(), &["fit", "--data", empty.to_str().unwrap(), "--depth", "1"]);
    assert_eq!(code(&o), 2);

    let bad = write(dir.path(), "b.csv", "x1,y\n0.1,0\n0.2,oops\n");
    let o = run(dir.path(), &["fit", "--data", bad.to_str().unwrap(), "--depth", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let good = write(dir.path(), "g.csv", "x1,y\n0.1,0\n");
    let o = run(dir.path(), &["fit", "--data", good.to_str().unwrap(), "--depth", "-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sid_check_reports_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let linear = configs().join("signals/linear.toml");
    let o = run(dir.path(), &["sid-check", "--signal", linear.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let lambda = json(&dir.path().join("sid_report.json"))["lambda_hat"].as_f64().unwrap();
    assert!((lambda - 0.75).abs() < 1e-6, "{lambda}");
    assert!(dir.path().join("sid_cells.csv").exists());

    let xor = configs().join("signals/xor.toml");
    let o = run(dir.path(), &["sid-check", "--signal", xor.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let lambda = json(&dir.path().join("sid_report.json"))["lambda_hat"].as_f64().unwrap();
    assert!(lambda < 1e-9, "{lambda}");

    let o = run(dir.path(), &["sid-check", "--signal", "/does/not/exist.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sid_check_accepts_json_and_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write(
        dir.path(),
        "dist.toml",
        "[[coordinates]]\nkind = \"uniform\"\n[[coordinates]]\nkind = \"piecewise-constant\"\nbreakpoints = [0.0, 0.5, 1.0]\ndensities = [1.5, 0.5]\n",
    );
    let signal = configs().join("signals/additive2d.json");
    let o = run(
        dir.path(),
        &[
            "sid-check",
            "--signal",
            signal.to_str().unwrap(),
            "--distribution",
            dist.to_str().unwrap(),
            "--family",
            "random",
            "--count",
            "40",
            "--grid",
            "64",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("sid_report.json"));
    assert_eq!(report["cells_searched"], 40);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["family"]["kind"], "random-cells");
}

#[test]
fn lrp_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["lrp-check", "--component", configs().join("components/linear.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let cert = json(&dir.path().join("lrp_certificate.json"));
    assert!((cert["tau_measured"].as_f64().unwrap() - 3.4641).abs() < 1e-4);

    let o = run(dir.path(), &["lrp-check", "--component", configs().join("components/convex.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let cert = json(&dir.path().join("lrp_certificate.json"));
    assert!((cert["tau_closed_form"].as_f64().unwrap() - 220.0).abs() < 1e-9);

    let o = run(dir.path(), &["lrp-check", "--component", configs().join("components/sawtooth.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let cert = json(&dir.path().join("lrp_certificate.json"));
    assert!(cert["unbounded_interval"].is_array());
    assert_eq!(cert["passed"], false);
}

#[test]
fn rate_on_the_bundled_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--threads", "2", "rate", "--config", configs().join("rate_linear.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rate.csv", "rate_summary.csv", "rate_fit.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let slope = json(&dir.path().join("rate_fit.json"))["slope"].as_f64().unwrap();
    assert!((-0.80..=-0.55).contains(&slope), "{slope}");
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["config"]["replicates"], 20);
    assert_eq!(manifest["config"]["noise"]["m"], 0.25);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "rate",
            "--config",
            configs().join("rate_linear.toml").to_str().unwrap(),
            "--n-grid",
            "64,128,256",
            "--replicates",
            "3",
            "--depth",
            "2",
        ],
    );
    assert_eq!(code(&o), 0);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["replicates"], 3);
    assert_eq!(manifest["config"]["depth"]["kind"], "fixed");
    let rows = std::fs::read_to_string(dir.path().join("rate.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 9);

    let o = run(dir.path(), &["rate", "--replicates", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn xor_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["xor", "--config", configs().join("xor.toml").to_str().unwrap(), "--replicates", "3", "--mc-samples", "500"],
    );
    assert_eq!(code(&o), 0);
    let lines = std::fs::read_to_string(dir.path().join("xor.csv")).unwrap().lines().count();
    assert_eq!(lines, 1 + 9);
    assert!(dir.path().join("xor_summary.json").exists());
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("verify.toml");
    let o = run(dir.path(), &["verify", "--config", config.to_str().unwrap(), "--cases", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&dir.path().join("verify.json"))["passed"], true);

    let zero = write(dir.path(), "zero.toml", "signals = [\"linear\"]\ncases = 20\n[tolerances]\nempirical_identity = 0.0\npopulation_identity = 0.0\nclosed_form = 0.0\n");
    let o = run(dir.path(), &["verify", "--config", zero.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&dir.path().join("manifest.json"))["passed"], false);
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested/out");
    let o = Command::new(env!("CARGO_BIN_EXE_cartlab"))
        .args(["lrp-check", "--component"])
        .arg(configs().join("components/linear.toml"))
        .env("CARTLAB_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(target.join("lrp_certificate.json").exists());
    assert!(target.join("manifest.json").exists());
}
