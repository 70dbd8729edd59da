use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn dsample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsample"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dsample(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// All files of a run directory except the metadata block.
fn primary_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "metadata.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn check_mnar_example_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("check", &fixture("mnar.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS identification"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    let dir = tmp.path().join("run-001");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("check.json")).unwrap()).unwrap();
    for c in report["checks"].as_array().unwrap() {
        if let Some(d) = c["discrepancy"].as_f64() {
            assert!(d < 1e-10);
        }
    }
    assert!(dir.join("metadata.json").is_file());
}

#[test]
fn check_reports_positivity_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("check", &fixture("positivity_violation.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(5), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.contains("identification")).expect("identification line");
    assert!(line.starts_with("FAIL"), "{text}");
    assert!(line.contains("positivity") && line.contains("stratum"), "{line}");
}

#[test]
fn check_without_coarsening_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("check", &fixture("no_coarsening.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn run_directories_are_never_reused() {
    let tmp = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let o = run("check", &fixture("no_coarsening.toml"), tmp.path(), &[]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert!(tmp.path().join("run-001").is_dir());
    assert!(tmp.path().join("run-002").is_dir());
    assert_eq!(
        primary_outputs(&tmp.path().join("run-001")),
        primary_outputs(&tmp.path().join("run-002"))
    );
}

#[test]
fn malformed_config_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[simulate.scenario]\nn = 100\nreplicatoins = 3\n").unwrap();
    let out = tmp.path().join("runs");
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicatoins"), "{}", stderr(&o));
    assert!(!out.exists());

    std::fs::write(&cfg, "[simulate.scenario]\nn = 100\n[check]\nlaw = \"x.json\"\n").unwrap();
    assert_eq!(run("simulate", &cfg, &out, &[]).status.code(), Some(2));
    std::fs::write(&cfg, "[simulate.scenario]\np0 = 1.5\n").unwrap();
    assert_eq!(run("simulate", &cfg, &out, &[]).status.code(), Some(2));
    std::fs::write(&cfg, "[check]\nlaw = \"missing.json\"\n").unwrap();
    assert_eq!(run("check", &cfg, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

fn small_simulation(dir: &Path) -> PathBuf {
    let cfg = dir.join("sim.toml");
    std::fs::write(
        &cfg,
        "[simulate]\nbeta_ra = [0.0, 0.016, 0.032]\nexport = [1]\n\n[simulate.scenario]\nn = 3000\nreplications = 3\nseed = 11\n",
    )
    .unwrap();
    cfg
}

#[test]
fn simulate_is_reproducible_and_replays_through_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_simulation(tmp.path());
    let out = tmp.path().join("runs");
    for threads in ["1", "2"] {
        let o = run("simulate", &cfg, &out, &["--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    }
    let first = primary_outputs(&out.join("run-001"));
    assert_eq!(first, primary_outputs(&out.join("run-002")));
    for b in ["0", "0.016", "0.032"] {
        assert!(first.contains_key(&format!("summary_beta_ra_{b}.json")), "{:?}", first.keys());
        assert!(first.contains_key(&format!("replications_beta_ra_{b}.csv")));
    }
    assert!(first.contains_key("errors.csv") && first.contains_key("grid.csv"));

    // the exported replication reproduces the harness estimates
    let run1 = out.join("run-001");
    let replay = run1.join("replay_beta_ra_0.016_rep_1.toml");
    let est_out = tmp.path().join("est");
    let o = run("estimate", &replay, &est_out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(est_out.join("run-001/estimates.json")).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(run1.join("replications_beta_ra_0.016.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut matched = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[col("replication")] != "1" || !["", "correct"].contains(&&rec[col("variant")]) {
            continue;
        }
        let estimand = match &rec[col("estimand")] {
            "arm0" => serde_json::json!({"arm": "0"}),
            "arm1" => serde_json::json!({"arm": "1"}),
            _ => serde_json::json!("contrast"),
        };
        let r = reports
            .iter()
            .find(|r| r["estimator"].as_str() == Some(&rec[col("estimator")]) && r["estimand"] == estimand)
            .unwrap_or_else(|| panic!("no report for {:?}", rec));
        let harness: f64 = rec[col("estimate")].parse().unwrap();
        assert_eq!(r["estimate"].as_f64().unwrap(), harness, "{:?}", rec);
        matched += 1;
    }
    assert_eq!(matched, 21);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    std::fs::write(&cfg, "[simulate.scenario]\nn = 400\nreplications = 2\nseed = 1\n").unwrap();
    let out = tmp.path().join("runs");
    for seed in ["1", "2"] {
        assert_eq!(run("simulate", &cfg, &out, &["--seed", seed]).status.code(), Some(0));
    }
    assert_eq!(run("simulate", &cfg, &out, &[]).status.code(), Some(0));
    let a = primary_outputs(&out.join("run-001"));
    assert_ne!(a, primary_outputs(&out.join("run-002")));
    assert_eq!(a, primary_outputs(&out.join("run-003")));
}

fn write_estimate_config(dir: &Path, data: &str) -> PathBuf {
    let cfg = dir.join("est.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"[estimate]
data = "{data}"
estimators = ["IF-DS"]

[estimate.specs]
clip = 0.01
propensity = {{ target = "pi", terms = ["1", "L"] }}
observation = {{ target = "gamma", terms = ["1", "L", "A"] }}
follow_up = {{ estimated = {{ target = "eta", terms = ["1", "L"] }} }}
outcome_initial = {{ target = "mu_r", terms = ["1", "L"], stratify = "by_arm" }}
outcome_follow_up = {{ target = "mu_s", terms = ["1"], stratify = "by_arm" }}
"#
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn estimate_rejects_invalid_records() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = String::from("L,A,R,S,Y\n");
    for i in 0..40 {
        let (a, r) = (i % 2, (i / 2) % 2);
        let s = if i == 7 { 1 } else { (1 - r) * ((i / 4) % 2) };
        let y = if r + s > 0 { format!("{}", i as f64 / 10.0) } else { String::new() };
        rows.push_str(&format!("{},{a},{r},{s},{y}\n", i % 3));
    }
    std::fs::write(tmp.path().join("d.csv"), &rows).unwrap();
    let cfg = write_estimate_config(tmp.path(), "d.csv");
    let out = tmp.path().join("runs");
    let o = run("estimate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("row 8"), "{}", stderr(&o));

    let valid = rows.replace("\n1,1,1,1,0.7\n", "\n1,1,1,0,0.7\n");
    assert_ne!(valid, rows);
    std::fs::write(tmp.path().join("d.csv"), &valid).unwrap();
    let o = run("estimate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(out.join("run-002/estimates.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 3);
}

#[test]
fn estimate_requires_existing_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_estimate_config(tmp.path(), "nowhere.csv");
    let out = tmp.path().join("runs");
    let o = run("estimate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"));
    assert!(!out.exists());
}
