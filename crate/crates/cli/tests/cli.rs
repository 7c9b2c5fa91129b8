use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn calibrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calibrate"))
        .args(args)
        .env("CAL_LOG", "error")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = calibrate(args);
    assert!(
        out.status.success(),
        "calibrate {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_run(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--replicates", "2", "--m", "10", "--n", "20", "--seed", "5", "--out", out];
    args.extend_from_slice(extra);
    run_ok(&args);
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn first_line(path: impl AsRef<Path>) -> String {
    read(path).lines().next().unwrap().to_owned()
}

fn column(csv: &str, j: usize) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.split(',').nth(j).unwrap().to_owned()).collect()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn golden_headers_and_row_order() {
    let dir = TempDir::new().unwrap();
    small_run(dir.path(), &["--model", "gaussian"]);
    let root = dir.path();
    let summary = read(root.join("summary.csv"));
    assert_eq!(summary.lines().next().unwrap(), "parameter,method,mse,bias,sd,coverage90");
    assert_eq!(column(&summary, 1), ["approx", "adjust(1)", "true"]);
    assert_eq!(first_line(root.join("coverage.csv")), "parameter,rho,cc,m_count");
    assert_eq!(first_line(root.join("draws_0.csv")), "mu");
    assert_eq!(first_line(root.join("diagnostics_1.csv")), "dataset,role,mu");
    assert!(!summary.contains('\r'));

    let doc: serde_json::Value = serde_json::from_str(&read(root.join("replicate_0.json"))).unwrap();
    let keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        [
            "adjusted_draws",
            "alpha",
            "diagnostics_inputs",
            "effective_sample_size",
            "importance_resampled",
            "optimizer",
            "transform"
        ]
    );
    assert_eq!(doc["diagnostics_inputs"], "diagnostics_0.csv");
    assert_eq!(doc["adjusted_draws"], "draws_0.csv");
    assert!(doc["transform"]["b"].is_array() && doc["transform"]["L"].is_array());

    let manifest: serde_json::Value = serde_json::from_str(&read(root.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["parameters"], serde_json::json!(["mu"]));
    assert_eq!(manifest["config"]["m"], 10);
    assert!(manifest["versions"]["scorecal"].is_string());
}

#[test]
fn bivariate_headers() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["run", "--model", "ou2d", "--replicates", "1", "--m", "4", "--n", "20", "--out", out]);
    assert_eq!(first_line(dir.path().join("draws_0.csv")), "mu,D,rho");
    let corr = read(dir.path().join("correlations.csv"));
    assert_eq!(corr.lines().next().unwrap(), "first,second,method,correlation");
    assert_eq!(column(&corr, 0)[..3], ["mu", "mu", "D"]);
    assert_eq!(column(&corr, 1)[..3], ["D", "rho", "rho"]);
    let summary = read(dir.path().join("summary.csv"));
    assert_eq!(column(&summary, 0), ["mu", "mu", "mu", "D", "D", "D", "rho", "rho", "rho"]);
}

#[test]
fn identical_bytes_across_runs_and_worker_counts() {
    let runs: Vec<TempDir> = ["1", "1", "3"]
        .iter()
        .map(|w| {
            let dir = TempDir::new().unwrap();
            small_run(dir.path(), &["--model", "ou1d", "--alpha", "1,0.5", "--workers", w]);
            dir
        })
        .collect();
    let reference = files(runs[0].path());
    assert!(reference.len() > 10);
    for other in &runs[1..] {
        let got = files(other.path());
        assert_eq!(got.len(), reference.len());
        for (a, b) in reference.iter().zip(&got) {
            assert_eq!(a.strip_prefix(runs[0].path()).unwrap(), b.strip_prefix(other.path()).unwrap());
            assert!(fs::read(a).unwrap() == fs::read(b).unwrap(), "{} differs", a.display());
        }
    }
}

#[test]
fn alpha_labels_are_distinct() {
    let dir = TempDir::new().unwrap();
    small_run(dir.path(), &["--model", "gaussian", "--alpha", "0,1"]);
    let summary = read(dir.path().join("summary.csv"));
    assert_eq!(column(&summary, 1), ["approx", "adjust(0)", "adjust(1)", "true"]);
    assert!(dir.path().join("replicate_0.json").is_file());
    assert!(dir.path().join("alpha_1").join("replicate_0.json").is_file());
    let primary: serde_json::Value = serde_json::from_str(&read(dir.path().join("replicate_0.json"))).unwrap();
    assert_eq!(primary["alpha"], 0.0);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "model = \"gaussian\"\nm = 7\nn = 30\nalpha = 0.5\n\n[gaussian]\nn_obs = 20\n").unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "6",
        "--replicates",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["m"], 6);
    assert_eq!(manifest["config"]["n"], 30);
    assert_eq!(manifest["config"]["alpha"], serde_json::json!([0.5]));
    assert_eq!(manifest["config"]["gaussian"]["n_obs"], 20);

    let printed = run_ok(&["config", "--config", cfg.to_str().unwrap(), "--m", "6"]);
    let reparsed = dir.path().join("printed.toml");
    fs::write(&reparsed, &printed).unwrap();
    assert_eq!(run_ok(&["config", "--config", reparsed.to_str().unwrap()]), printed);
    assert!(printed.contains("m = 6\n"));
}

#[test]
fn config_errors_exit_2_with_field() {
    let out = calibrate(&["run", "--model", "custom"]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "config");
    assert_eq!(rec["field"], "model");

    let out = calibrate(&["run", "--inflate", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "inflate");

    let out = calibrate(&["run", "--alpha", "0.5,2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "alpha");

    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "replicats = 3\n").unwrap();
    let out = calibrate(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "replicats");

    fs::write(&cfg, "[ou1d.process]\ngamma = -1.0\n").unwrap();
    let out = calibrate(&["run", "--model", "ou1d", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "ou1d.process.gamma");
}

#[test]
fn diagnose_null_case_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("null.toml");
    fs::write(&cfg, "model = \"gaussian\"\nwell_specified = true\nm = 50\nn = 100\nreplicates = 4\nseed = 11\n").unwrap();
    let out = dir.path().join("out");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report = run_ok(&["diagnose", out.to_str().unwrap()]);
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("grid: 0.05,0.10,"));
    assert!(lines[0].ends_with(",0.95"));
    assert_eq!(lines[1], "band: 0.1");
    assert_eq!(lines[2], "datasets: 200");
    assert!(lines[3].starts_with("PASS mu "), "{report}");
    assert_eq!(first_line(out.join("diagnose_coverage.csv")), "parameter,rho,cc,m_count");

    let single = run_ok(&["diagnose", out.join("replicate_0.json").to_str().unwrap()]);
    assert!(single.contains("datasets: 50"));
}

#[test]
fn diagnose_warns_on_shifted_draws() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("dataset,role,a,b\n");
    for m in 0..20 {
        csv.push_str(&format!("{m},theta,{},{}\n", m as f64 * 0.1, 1.0));
        for j in 0..30 {
            let d = m as f64 * 0.1 + (j as f64 - 15.0) * 0.05;
            csv.push_str(&format!("{m},draw,{},{}\n", d + 100.0, 1.0 + (j as f64 - 15.0) * 0.05));
        }
    }
    let path = dir.path().join("shifted.csv");
    fs::write(&path, csv).unwrap();
    let target = dir.path().join("cov.csv");
    let report = run_ok(&["diagnose", path.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    let warn = report.lines().find(|l| l.starts_with("WARN a ")).expect("a flagged");
    assert!(warn.contains("cc=0.00,0.00"));
    let cov = read(&target);
    assert!(cov.lines().filter(|l| l.starts_with("a,")).all(|l| l.split(',').nth(2) == Some("0")));
}

#[test]
fn diagnose_missing_inputs() {
    let dir = TempDir::new().unwrap();
    let out = calibrate(&["diagnose", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "input");
}
