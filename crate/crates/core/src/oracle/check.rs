use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::coarsening::{
    brute_force_functional, identify_complete, influence_moments, marginalize_observed, transform_if,
    CoarsenedLawFile, DiscreteCompleteDistribution, DiscreteObservedDistribution, GeneralIfContext, MissingOutcomeLayout,
};
use crate::data::Arm;
use crate::error::Result;
use crate::estimators::{if_mar, if_np, IfContext};
use crate::scalar::Field;

use super::missing::{MissingOutcomeCoordinates, MissingOutcomeLaw};

/// Exact-arithmetic discrepancies must be below this to pass.
pub const CHECK_TOLERANCE: f64 = 1e-10;
/// Pointwise tolerance for the floating-point specialisation check.
pub const POINTWISE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest absolute discrepancy, when the check got that far.
    pub discrepancy: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn f(p: &BigRational) -> f64 {
    p.to_f64().unwrap_or(f64::NAN)
}

fn measured(name: &str, discrepancy: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: discrepancy < tolerance,
        discrepancy: Some(discrepancy),
        detail,
    }
}

fn outcome(name: &str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| CheckResult {
        name: name.into(),
        passed: false,
        discrepancy: None,
        detail: e.to_string(),
    })
}

/// Runs every applicable oracle check on a law file. Errors inside a check
/// (positivity failures in particular) are reported as failed checks.
pub fn run_checks(file: &CoarsenedLawFile) -> Result<CheckReport> {
    let complete = file.complete::<BigRational>()?;
    let observed = marginalize_observed(&complete);
    let g = file.g_values::<BigRational>()?;
    let mut checks = vec![outcome("identification", check_identification(&complete, &observed))];
    if let Some(g) = &g {
        checks.push(outcome("functional", check_functional(&complete, g)));
        checks.push(outcome("mean_zero", check_mean_zero(&observed, g)));
    }
    if let Some(layout) = &file.missing_outcome {
        checks.extend(check_missing_outcome(&complete, &observed, layout));
    }
    Ok(CheckReport { checks })
}

fn check_identification(
    complete: &DiscreteCompleteDistribution<BigRational>,
    observed: &DiscreteObservedDistribution<BigRational>,
) -> Result<CheckResult> {
    let recovered = identify_complete(observed)?;
    let d = f(&complete.max_discrepancy(&recovered));
    Ok(measured(
        "identification",
        d,
        CHECK_TOLERANCE,
        "complete law recovered from its observed part".into(),
    ))
}

fn check_functional(complete: &DiscreteCompleteDistribution<BigRational>, g: &[BigRational]) -> Result<CheckResult> {
    let v = brute_force_functional(complete, g)?;
    Ok(measured(
        "functional",
        f(&v.discrepancy()),
        CHECK_TOLERANCE,
        format!("E[g(X)] = {} from the full law, {} from the observed law", f(&v.full_law), f(&v.observed_law)),
    ))
}

fn check_mean_zero(observed: &DiscreteObservedDistribution<BigRational>, g: &[BigRational]) -> Result<CheckResult> {
    let ctx = GeneralIfContext::for_mean(observed, g)?;
    let (mean, second) = influence_moments(observed, &ctx)?;
    Ok(measured(
        "mean_zero",
        f(&mean).abs(),
        CHECK_TOLERANCE,
        format!("observed-data influence function has variance {}", f(&second)),
    ))
}

fn check_missing_outcome(
    complete: &DiscreteCompleteDistribution<BigRational>,
    observed: &DiscreteObservedDistribution<BigRational>,
    layout: &MissingOutcomeLayout,
) -> Vec<CheckResult> {
    let names = ["arm_identification", "arm_mean_zero", "specialization"];
    let setup = MissingOutcomeCoordinates::new(complete.scheme(), layout).and_then(|coords| {
        let law = MissingOutcomeLaw::from_coarsened(complete, layout)?;
        Ok((coords, law))
    });
    let (coords, law) = match setup {
        Ok(v) => v,
        Err(e) => {
            return names
                .iter()
                .map(|n| CheckResult {
                    name: (*n).into(),
                    passed: false,
                    discrepancy: None,
                    detail: e.to_string(),
                })
                .collect()
        }
    };
    vec![
        outcome(names[0], arm_identification(complete, &coords, &law)),
        outcome(names[1], arm_mean_zero(&law)),
        outcome(names[2], specialization(observed, &coords, &law)),
    ]
}

/// `E[mu_a(L)]` from the identified nuisances against `E[E(Y | L, A = a)]`
/// from the complete law.
fn arm_identification(
    complete: &DiscreteCompleteDistribution<BigRational>,
    coords: &MissingOutcomeCoordinates,
    law: &MissingOutcomeLaw<BigRational>,
) -> Result<CheckResult> {
    use std::collections::BTreeMap;
    let zero = || BigRational::from_ratio(0, 1);
    // per L: mass of L, and per arm (mass, sum of Y * mass)
    let mut cells: BTreeMap<Vec<i64>, (BigRational, [(BigRational, BigRational); 2])> = BTreeMap::new();
    for (a, p) in complete.atoms() {
        let (l, arm, y) = coords.split(complete.scheme().point(a.point))?;
        let c = cells.entry(l).or_insert_with(|| (zero(), [(zero(), zero()), (zero(), zero())]));
        c.0 += p;
        let slot = &mut c.1[arm.index()];
        slot.0 += p;
        slot.1 += p * BigRational::from_integer(y.into());
    }
    let mut worst = 0.0f64;
    for arm in Arm::BOTH {
        let truth = cells
            .values()
            .fold(zero(), |acc, (w, arms)| acc + w * &arms[arm.index()].1 / &arms[arm.index()].0);
        worst = worst.max(f(&(truth - law.tau(arm))).abs());
    }
    Ok(measured(
        "arm_identification",
        worst,
        CHECK_TOLERANCE,
        "tau_a from the observed law against E[Y(a)] from the complete law".into(),
    ))
}

/// Both arm-level influence functions average to zero at the true law.
fn arm_mean_zero(law: &MissingOutcomeLaw<BigRational>) -> Result<CheckResult> {
    let nuisance = law.nuisance();
    let records = law.observed_records();
    let mut worst = 0.0f64;
    for arm in Arm::BOTH {
        let np = IfContext::new(arm, &nuisance, f(&law.tau(arm)));
        let mar = IfContext::new(arm, &nuisance, f(&law.tau_mar(arm)));
        let (mut m_np, mut m_mar) = (0.0, 0.0);
        for (o, p) in &records {
            m_np += f(p) * if_np(o, &np)?;
            m_mar += f(p) * if_mar(o, &mar)?;
        }
        worst = worst.max(m_np.abs()).max(m_mar.abs());
    }
    Ok(measured(
        "arm_mean_zero",
        worst,
        CHECK_TOLERANCE,
        "nonparametric and MAR-efficient influence functions".into(),
    ))
}

/// The general transformation applied to the full-data AIPW influence
/// function reproduces the nonparametric arm-level influence function.
fn specialization(
    observed: &DiscreteObservedDistribution<BigRational>,
    coords: &MissingOutcomeCoordinates,
    law: &MissingOutcomeLaw<BigRational>,
) -> Result<CheckResult> {
    let nuisance = law.nuisance();
    let scheme = observed.scheme();
    let mut worst = 0.0f64;
    for arm in Arm::BOTH {
        let tau = law.tau(arm);
        let chi_dot = scheme
            .support()
            .iter()
            .map(|x| {
                let (l, a, y) = coords.split(x)?;
                let s = law
                    .strata
                    .iter()
                    .find(|s| s.covariates == l)
                    .expect("every support point has a stratum");
                let mu = s.arms[arm.index()].mu_composite();
                let mut v = &mu - &tau;
                if a == arm {
                    v += (BigRational::from_integer(y.into()) - &mu) / s.propensity(arm);
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let ctx = GeneralIfContext::at_law(observed, chi_dot)?;
        let arm_ctx = IfContext::new(arm, &nuisance, f(&tau));
        for atom in observed.atoms().keys() {
            let general = f(&transform_if(atom, &ctx)?);
            let specific = if_np(&coords.record(atom)?, &arm_ctx)?;
            worst = worst.max((general - specific).abs());
        }
    }
    Ok(measured(
        "specialization",
        worst,
        POINTWISE_TOLERANCE,
        "pointwise over observed atoms, both arms".into(),
    ))
}
