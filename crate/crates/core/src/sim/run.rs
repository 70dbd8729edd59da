use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{assign_folds, Arm};
use crate::error::{Error, Result};
use crate::estimators::{crossfit_streams, estimate_all, EstimateOptions, EstimateReport, Estimand, EstimatorId, Flavor};

use super::config::{ModelScenario, ScenarioConfig};
use super::generate::generate_dataset;

pub const SCHEMA_VERSION: u32 = 1;

pub fn estimand_label(e: Estimand) -> &'static str {
    match e {
        Estimand::Arm(Arm::Control) => "arm0",
        Estimand::Arm(Arm::Treated) => "arm1",
        Estimand::Contrast => "contrast",
        Estimand::Functional => "functional",
    }
}

/// One estimate from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub schema_version: u32,
    pub beta_ra: f64,
    pub replication: u64,
    pub estimator: EstimatorId,
    /// Model scenario of IF-DS; empty for the other estimators.
    pub variant: String,
    pub estimand: String,
    pub truth: f64,
    pub estimate: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// For ADAPTIVE and ADHOC: base estimators selected, arm 0 then arm 1.
    pub selected: String,
}

impl ReplicationRow {
    pub fn covered(&self) -> bool {
        self.ci_lower <= self.truth && self.truth <= self.ci_upper
    }

    /// Share of arms for which the MAR-efficient estimator was selected.
    pub fn mar_share(&self) -> Option<f64> {
        if self.selected.is_empty() {
            return None;
        }
        let picks: Vec<&str> = self.selected.split('|').collect();
        let mar = picks.iter().filter(|&&s| s == EstimatorId::IfMarEff.name()).count();
        Some(mar as f64 / picks.len() as f64)
    }

    fn key(&self) -> (EstimatorId, String, String) {
        (self.estimator, self.variant.clone(), self.estimand.clone())
    }
}

fn truth(cfg: &ScenarioConfig, e: Estimand) -> f64 {
    match e {
        Estimand::Arm(a) => cfg.true_mean(a),
        _ => cfg.true_ate(),
    }
}

fn to_row(cfg: &ScenarioConfig, replication: u64, r: &EstimateReport<f64>) -> ReplicationRow {
    let selected = r
        .selection
        .as_ref()
        .map(|s| s.arms.iter().map(|a| a.selected.name()).collect::<Vec<_>>().join("|"))
        .unwrap_or_default();
    ReplicationRow {
        schema_version: SCHEMA_VERSION,
        beta_ra: cfg.beta_ra,
        replication,
        estimator: r.estimator,
        variant: r.variant.clone().unwrap_or_default(),
        estimand: estimand_label(r.estimand).to_string(),
        truth: truth(cfg, r.estimand),
        estimate: r.estimate,
        variance: r.variance,
        ci_lower: r.ci.lower,
        ci_upper: r.ci.upper,
        selected,
    }
}

/// Generates replication `replication` and runs every configured estimator.
pub fn run_replication(cfg: &ScenarioConfig, replication: u64) -> Result<Vec<ReplicationRow>> {
    let sim = generate_dataset(cfg, replication)?;
    let d = &sim.dataset;
    let opts = EstimateOptions {
        estimators: cfg.estimators.clone(),
        k: cfg.k,
        seed: sim.fold_seed,
        level: cfg.level,
    };
    let mut reports = estimate_all(d, &cfg.true_specs(), &opts)?;
    let keep_correct = cfg.scenarios.contains(&ModelScenario::Correct);
    reports.retain(|r| keep_correct || r.estimator != EstimatorId::IfDs);
    for r in reports.iter_mut().filter(|r| r.estimator == EstimatorId::IfDs) {
        r.variant = Some(ModelScenario::Correct.name().into());
    }
    if cfg.estimators.contains(&EstimatorId::IfDs) {
        let folds = assign_folds(d.len(), cfg.k, sim.fold_seed)?;
        for &scenario in cfg.scenarios.iter().filter(|&&s| s != ModelScenario::Correct) {
            let cf = crossfit_streams(d, &cfg.specs(scenario)?, &folds, &[Flavor::Nonparametric])?;
            let contrast = cf.contrast(Flavor::Nonparametric)?;
            let streams = Arm::BOTH
                .map(|arm| (cf.stream(Flavor::Nonparametric, arm).expect("flavour computed"), Estimand::Arm(arm)));
            for (stream, estimand) in streams.into_iter().chain([(&contrast, Estimand::Contrast)]) {
                let mut r = stream.report(EstimatorId::IfDs, estimand, cfg.level)?;
                r.variant = Some(scenario.name().into());
                reports.push(r);
            }
        }
    }
    Ok(reports.iter().map(|r| to_row(cfg, replication, r)).collect())
}

/// Monte Carlo summary of one estimator for one estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorId,
    pub variant: String,
    pub estimand: String,
    pub truth: f64,
    pub replications: usize,
    pub mean: f64,
    pub bias: f64,
    pub bias_mcse: f64,
    /// Empirical variance of the estimates, divisor `R`.
    pub variance: f64,
    pub variance_mcse: f64,
    pub mse: f64,
    pub mse_mcse: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub mean_ci_length: f64,
    pub ci_length_mcse: f64,
    /// Average share of arms on which the MAR-efficient estimator was selected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mar_selection: Option<f64>,
}

fn moments(x: &[f64]) -> (f64, f64) {
    let r = x.len() as f64;
    let mean = x.iter().sum::<f64>() / r;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
    (mean, var)
}

impl EstimatorSummary {
    pub fn from_rows(rows: &[&ReplicationRow]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("no replications to summarise"))?;
        let r = rows.len() as f64;
        let truth = first.truth;
        let est: Vec<f64> = rows.iter().map(|x| x.estimate).collect();
        let (mean, variance) = moments(&est);
        let centred_sq: Vec<f64> = est.iter().map(|v| (v - mean).powi(2)).collect();
        let (_, var_of_sq) = moments(&centred_sq);
        let sq_err: Vec<f64> = est.iter().map(|v| (v - truth).powi(2)).collect();
        let (mse, mse_var) = moments(&sq_err);
        let coverage = rows.iter().filter(|x| x.covered()).count() as f64 / r;
        let lengths: Vec<f64> = rows.iter().map(|x| x.ci_upper - x.ci_lower).collect();
        let (mean_ci_length, length_var) = moments(&lengths);
        let shares: Vec<f64> = rows.iter().filter_map(|x| x.mar_share()).collect();
        Ok(EstimatorSummary {
            estimator: first.estimator,
            variant: first.variant.clone(),
            estimand: first.estimand.clone(),
            truth,
            replications: rows.len(),
            mean,
            bias: mean - truth,
            bias_mcse: (variance / r).sqrt(),
            variance,
            variance_mcse: (var_of_sq / r).sqrt(),
            mse,
            mse_mcse: (mse_var / r).sqrt(),
            coverage,
            coverage_mcse: (coverage * (1.0 - coverage) / r).sqrt(),
            mean_ci_length,
            ci_length_mcse: (length_var / r).sqrt(),
            mar_selection: (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub true_ate: f64,
    /// Analytic `tau*_1 - tau*_0 - (tau_1 - tau_0)`.
    pub mar_gap: f64,
    pub replications: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_messages: Vec<String>,
    pub estimators: Vec<EstimatorSummary>,
}

impl MCSummary {
    /// Summarises rows of successful replications; `failures` counts the rest.
    pub fn from_rows(cfg: &ScenarioConfig, rows: &[ReplicationRow], failures: Vec<String>) -> Result<Self> {
        let mut groups: BTreeMap<(EstimatorId, String, String), Vec<&ReplicationRow>> = BTreeMap::new();
        for row in rows {
            groups.entry(row.key()).or_default().push(row);
        }
        let estimators = groups
            .values()
            .map(|g| EstimatorSummary::from_rows(g))
            .collect::<Result<Vec<_>>>()?;
        let mut reps: Vec<u64> = rows.iter().map(|r| r.replication).collect();
        reps.dedup();
        Ok(MCSummary {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            true_ate: cfg.true_ate(),
            mar_gap: cfg.mar_gap_contrast()?,
            replications: reps.len(),
            failures: failures.len(),
            failure_messages: failures.into_iter().take(10).collect(),
            estimators,
        })
    }

    pub fn get(&self, estimator: EstimatorId, variant: &str, estimand: &str) -> Option<&EstimatorSummary> {
        self.estimators
            .iter()
            .find(|s| s.estimator == estimator && s.variant == variant && s.estimand == estimand)
    }

    /// Contrast summary; `variant` only matters for IF-DS.
    pub fn contrast(&self, estimator: EstimatorId, variant: &str) -> Option<&EstimatorSummary> {
        self.get(estimator, variant, "contrast")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub summary: MCSummary,
    pub rows: Vec<ReplicationRow>,
}

impl ScenarioRun {
    /// Summary of the first `replications` replications only.
    pub fn truncated(&self, replications: u64) -> Result<MCSummary> {
        let rows: Vec<ReplicationRow> = self.rows.iter().filter(|r| r.replication < replications).cloned().collect();
        MCSummary::from_rows(&self.summary.config, &rows, vec![])
    }
}

/// Runs all replications in parallel. Results do not depend on scheduling:
/// each replication has its own random stream and rows are kept in
/// replication order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let results: Vec<(u64, Result<Vec<ReplicationRow>>)> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| (rep, run_replication(cfg, rep)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push(Error::Replication {
                    replication: rep as usize,
                    source: Box::new(e),
                }
                .to_string());
            }
        }
    }
    let summary = MCSummary::from_rows(cfg, &rows, failures)?;
    Ok(ScenarioRun { summary, rows })
}

/// One point of a grid curve, for contrasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub schema_version: u32,
    pub beta_ra: f64,
    pub estimator: EstimatorId,
    pub variant: String,
    pub truth: f64,
    pub bias: f64,
    pub bias_mcse: f64,
    pub variance: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    /// MSE relative to IF-DS with correct models.
    pub rel_mse: f64,
    /// Variance relative to IF-DS with correct models.
    pub rel_variance: f64,
    pub mar_selection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub runs: Vec<ScenarioRun>,
    pub curves: Vec<GridRow>,
}

/// Runs `base` at each `beta_ra` in the grid.
pub fn run_grid(base: &ScenarioConfig, grid: &[f64]) -> Result<GridRun> {
    if grid.is_empty() {
        return Err(Error::invalid("the beta_ra grid is empty"));
    }
    let mut runs = Vec::with_capacity(grid.len());
    let mut curves = Vec::new();
    for &beta_ra in grid {
        let cfg = ScenarioConfig {
            beta_ra,
            ..base.clone()
        };
        let run = run_scenario(&cfg)?;
        let reference = run.summary.contrast(EstimatorId::IfDs, ModelScenario::Correct.name());
        for s in run.summary.estimators.iter().filter(|s| s.estimand == "contrast") {
            let (rel_mse, rel_variance) = match reference {
                Some(r) => (s.mse / r.mse, s.variance / r.variance),
                None => (f64::NAN, f64::NAN),
            };
            curves.push(GridRow {
                schema_version: SCHEMA_VERSION,
                beta_ra,
                estimator: s.estimator,
                variant: s.variant.clone(),
                truth: s.truth,
                bias: s.bias,
                bias_mcse: s.bias_mcse,
                variance: s.variance,
                mse: s.mse,
                coverage: s.coverage,
                mean_ci_length: s.mean_ci_length,
                rel_mse,
                rel_variance,
                mar_selection: s.mar_selection,
            });
        }
        runs.push(run);
    }
    Ok(GridRun { runs, curves })
}
