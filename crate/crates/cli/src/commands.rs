use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dsample::coarsening::CoarsenedLawFile;
use dsample::data::{read_csv_path, validate_dataset, write_csv_path};
use dsample::estimators::{estimate_all, EstimateOptions, EstimateReport};
use dsample::oracle::{run_checks, CheckReport};
use dsample::sim::{
    generate_dataset, run_grid, write_errors_csv, write_grid_csv, write_replications_csv, write_summary_json,
    ScenarioConfig,
};

use crate::config::{CheckSection, EstimateSection, RunConfig, SimulateSection};
use crate::failure::Failure;

/// Creates `out/run-NNN` with the first free number.
pub fn create_run_dir(out: &Path) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;
    for i in 1..100_000 {
        let dir = out.join(format!("run-{i:03}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Failure::io(format!("{}: {e}", dir.display()))),
        }
    }
    Err(Failure::Io(format!("no free run directory under {}", out.display())))
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    /// Seconds since the Unix epoch.
    timestamp: u64,
    threads: usize,
    config: &'a RunConfig,
}

/// The only output that differs between identical invocations.
pub fn write_metadata(dir: &Path, command: &str, threads: usize, cfg: &RunConfig) -> Result<(), Failure> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        timestamp,
        threads,
        config: cfg,
    };
    write_json(&dir.join("metadata.json"), &meta)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::io)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn tag(beta_ra: f64) -> String {
    format!("beta_ra_{beta_ra}")
}

pub fn simulate(s: &SimulateSection, dir: &Path) -> Result<String, Failure> {
    let grid = s.grid();
    let run = run_grid(&s.scenario, &grid).map_err(Failure::from_estimation)?;
    let mut text = String::new();
    for r in &run.runs {
        let b = r.summary.config.beta_ra;
        write_replications_csv(&r.rows, dir.join(format!("replications_{}.csv", tag(b)))).map_err(Failure::io)?;
        write_summary_json(&r.summary, dir.join(format!("summary_{}.json", tag(b)))).map_err(Failure::io)?;
        let _ = writeln!(
            text,
            "beta_ra = {b}: true ATE {:.6}, {} replications, {} failed",
            r.summary.true_ate, r.summary.replications, r.summary.failures
        );
        for e in r.summary.estimators.iter().filter(|e| e.estimand == "contrast") {
            let label = if e.variant.is_empty() {
                e.estimator.name().to_string()
            } else {
                format!("{}[{}]", e.estimator.name(), e.variant)
            };
            let _ = writeln!(
                text,
                "  {label:<22} bias {:+.5}  sd {:.5}  coverage {:.3}",
                e.bias,
                e.variance.sqrt(),
                e.coverage
            );
        }
    }
    write_errors_csv(run.runs.iter().flat_map(|r| &r.rows), dir.join("errors.csv")).map_err(Failure::io)?;
    write_grid_csv(&run.curves, dir.join("grid.csv")).map_err(Failure::io)?;
    for &b in &grid {
        let cfg = ScenarioConfig {
            beta_ra: b,
            ..s.scenario.clone()
        };
        for &rep in &s.export {
            export_replication(&cfg, rep, dir)?;
        }
    }
    Ok(text)
}

/// Writes the dataset of one replication and an `estimate` config that
/// reproduces the harness estimates on it.
fn export_replication(cfg: &ScenarioConfig, rep: u64, dir: &Path) -> Result<(), Failure> {
    let sim = generate_dataset(cfg, rep).map_err(Failure::from_estimation)?;
    let stem = format!("{}_rep_{rep}", tag(cfg.beta_ra));
    let data = format!("data_{stem}.csv");
    write_csv_path(&sim.dataset, dir.join(&data)).map_err(Failure::io)?;
    let replay = RunConfig {
        out: None,
        threads: None,
        verbosity: "warn".into(),
        simulate: None,
        estimate: Some(EstimateSection {
            data: PathBuf::from(data),
            estimators: cfg.estimators.clone(),
            k: cfg.k,
            seed: sim.fold_seed,
            level: cfg.level,
            specs: cfg.true_specs(),
        }),
        check: None,
    };
    let text = toml::to_string(&replay).map_err(Failure::io)?;
    std::fs::write(dir.join(format!("replay_{stem}.toml")), text).map_err(Failure::io)
}

pub fn estimate(e: &EstimateSection, dir: &Path) -> Result<String, Failure> {
    let d = read_csv_path::<f64>(&e.data).map_err(|err| Failure::Data(format!("{}: {err}", e.data.display())))?;
    let report = validate_dataset(&d);
    if !report.is_valid() {
        let mut msg = format!("{} invalid records in {}", report.violations.len(), e.data.display());
        for v in report.violations.iter().take(20) {
            let _ = write!(msg, "\n  row {}: {}", v.index + 1, v.kind.message());
        }
        if report.violations.len() > 20 {
            msg.push_str("\n  ...");
        }
        return Err(Failure::Data(msg));
    }
    let opts = EstimateOptions {
        estimators: e.estimators.clone(),
        k: e.k,
        seed: e.seed,
        level: e.level,
    };
    let reports: Vec<EstimateReport<f64>> = estimate_all(&d, &e.specs, &opts).map_err(Failure::from_estimation)?;
    write_json(&dir.join("estimates.json"), &reports)?;
    let mut text = format!("n = {}, K = {}\n", d.len(), e.k);
    for r in &reports {
        let _ = writeln!(
            text,
            "{:<12} {:<9} {:+.6}  se {:.6}  [{:+.6}, {:+.6}]",
            r.estimator.name(),
            r.estimand.to_string(),
            r.estimate,
            r.standard_error(),
            r.ci.lower,
            r.ci.upper
        );
    }
    Ok(text)
}

pub fn check(c: &CheckSection, dir: &Path) -> Result<(String, bool), Failure> {
    let mut law = CoarsenedLawFile::read(&c.law).map_err(|e| Failure::Config(format!("{}: {e}", c.law.display())))?;
    if let Some(g) = &c.g {
        law.g = Some(g.clone());
    }
    let report: CheckReport = run_checks(&law).map_err(|e| Failure::Config(format!("{}: {e}", c.law.display())))?;
    write_json(&dir.join("check.json"), &report)?;
    let mut text = String::new();
    for r in &report.checks {
        let disc = r.discrepancy.map(|d| format!("max discrepancy {d:.3e}")).unwrap_or_default();
        let _ = writeln!(
            text,
            "{} {:<20} {disc} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    Ok((text, report.passed()))
}
