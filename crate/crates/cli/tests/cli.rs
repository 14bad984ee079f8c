use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ordmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordmi")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, config: Option<&str>, seed: u64) -> PathBuf {
    let out = dir.join("sim");
    let mut args = vec!["simulate".to_string(), "--out".into(), path(&out).into(), "--seed".into(), seed.to_string()];
    if let Some(text) = config {
        let cfg = dir.join("sim.toml");
        fs::write(&cfg, text).unwrap();
        args.extend(["--config".into(), path(&cfg).into()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ordmi(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn small_scenario(n_clusters: usize, missing_rate: f64, mechanism: &str) -> String {
    let mut s = format!(
        "n_clusters = {n_clusters}\ncluster_size_min = 5\ncluster_size_max = 15\nmechanism = \"{mechanism}\"\n"
    );
    for (k, effects) in [(1, "[0.0, 0.0, 0.8, 0.8]"), (2, "[]"), (3, "[]")] {
        s += &format!(
            "\n[[items]]\nname = \"q{k}\"\ncategories = 4\neffects = {effects}\nmissing_rate = {missing_rate}\n"
        );
    }
    s
}

/// Column `name` of a small CSV file, as strings.
fn column(file: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(file).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().to_string()).collect()
}

#[test]
fn simulate_then_describe() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), None, 11);
    for f in ["level1.csv", "level2.csv", "schema.toml", "truth.json", "run.toml"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let out = dir.path().join("desc");
    let o = ordmi(&["describe", "--config", path(&sim.join("run.toml")), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("q5"));
    assert_eq!(column(&out.join("variables.csv"), "variable"), ["y", "x1", "x2", "z1", "cluster_size"]);
    assert!(out.join("item_frequencies.csv").exists());
}

#[test]
fn missing_rate_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), Some(&small_scenario(1000, 0.5, "mcar")), 3);
    let level2 = sim.join("level2.csv");
    let (mut missing, mut total) = (0, 0);
    for item in ["q1", "q2", "q3"] {
        for v in column(&level2, item) {
            total += 1;
            missing += usize::from(v == "NA" || v.is_empty());
        }
    }
    let pct = 100.0 * missing as f64 / total as f64;
    assert!((pct - 50.0).abs() <= 2.0, "{pct}");
}

#[test]
fn full_run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), Some(&small_scenario(150, 0.3, "mar")), 5);
    let out = dir.path().join("res");
    let o = ordmi(&[
        "run",
        "--config",
        path(&sim.join("run.toml")),
        "--out",
        path(&out),
        "--m",
        "4",
        "--kpercent",
        "50",
        "--write-paths",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "pooled_estimates.csv",
        "selection_frequency.csv",
        "refinement.csv",
        "variance_summary.csv",
        "mi_category_report.csv",
        "coefficient_profiles.csv",
        "summary.txt",
        "manifest.json",
        "level2_imp1.csv",
        "level2_imp4.csv",
        "lasso_paths/imputation_1.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    for stage in ["impute", "select", "threshold", "refine", "summarize"] {
        assert!(manifest.contains(&format!("\"{stage}\"")), "{stage}");
    }
    assert!(manifest.contains("\"seed\": 5"));
    assert!(manifest.contains("config_sha256"));
    assert_eq!(column(&out.join("variance_summary.csv"), "model"), ["null", "covariates", "final"]);
    assert!(column(&out.join("pooled_estimates.csv"), "parameter").contains(&"(Intercept)".to_string()));
}

#[test]
fn complete_items_give_zero_missing_information() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), Some(&small_scenario(120, 0.0, "mcar")), 8);
    let out = dir.path().join("res");
    let o = ordmi(&["run", "--config", path(&sim.join("run.toml")), "--out", path(&out), "--m", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for (fmi, re) in column(&out.join("pooled_estimates.csv"), "fmi")
        .iter()
        .zip(column(&out.join("pooled_estimates.csv"), "re"))
    {
        assert!(fmi.parse::<f64>().unwrap().abs() < 1e-12, "{fmi}");
        assert!((re.parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn impute_writes_completed_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), Some(&small_scenario(80, 0.4, "mar")), 9);
    let out = dir.path().join("imp");
    let o = ordmi(&["impute", "--config", path(&sim.join("run.toml")), "--out", path(&out), "--m", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let completed = column(&out.join("level2_imp2.csv"), "q1");
    assert_eq!(completed.len(), 80);
    assert!(completed.iter().all(|v| matches!(v.as_str(), "1" | "2" | "3" | "4")));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ordmi(&["--bogus"]).status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(ordmi(&["run", "--config", path(&missing)]).status.code(), Some(1));

    let sim = simulate(dir.path(), Some(&small_scenario(60, 0.2, "mcar")), 1);
    let cfg = path(&sim.join("run.toml")).to_string();
    assert_eq!(ordmi(&["--threads", "0", "run", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(ordmi(&["run", "--config", &cfg, "--alpha", "2"]).status.code(), Some(1));
    assert_eq!(ordmi(&["run", "--config", &cfg, "--m", "1"]).status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_clusters = 0\n").unwrap();
    let o = ordmi(&["simulate", "--config", path(&bad), "--out", path(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn degenerate_response_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), Some(&small_scenario(60, 0.2, "mcar")), 2);
    // Constant response: nothing left to explain.
    let level1 = sim.join("level1.csv");
    let text = fs::read_to_string(&level1).unwrap();
    let mut lines = text.lines();
    let mut flat = format!("{}\n", lines.next().unwrap());
    for l in lines {
        let mut f: Vec<&str> = l.split(',').collect();
        f[1] = "3.5";
        flat += &f.join(",");
        flat.push('\n');
    }
    fs::write(&level1, flat).unwrap();
    let out = dir.path().join("res");
    let o = ordmi(&["run", "--config", path(&sim.join("run.toml")), "--out", path(&out), "--m", "2"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("failed_stage"));
}
