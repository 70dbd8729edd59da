use serde::{Deserialize, Serialize};

use crate::data::{assign_folds, Arm, Dataset};
use crate::error::{Error, Result};
use crate::glm::SpecSet;
use crate::scalar::{two_sided_z, Real};

use super::comparators::mar_comparators;
use super::crossfit::{crossfit_streams, CrossFit, InfluenceStream};
use super::inference::{adaptive_select, ate_contrast, decide, estimate_q, wald_ci};
use super::influence::Flavor;
use super::{ArmSelection, EstimateReport, Estimand, EstimatorId, SelectionInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_k() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            estimators: EstimatorId::ALL.to_vec(),
            k: default_k(),
            seed: 0,
            level: default_level(),
        }
    }
}

/// Runs the requested estimators and returns reports for arm 0, arm 1 and
/// the contrast of each, in the requested order.
pub fn estimate_all<T: Real>(d: &Dataset<T>, specs: &SpecSet, opts: &EstimateOptions) -> Result<Vec<EstimateReport<T>>> {
    if opts.estimators.is_empty() {
        return Err(Error::invalid("no estimators requested"));
    }
    if let Some(id) = opts.estimators.iter().find(|&&e| e == EstimatorId::IfCoarsened) {
        return Err(Error::invalid(format!("{id} applies to coarsened discrete data, not to this dataset")));
    }
    let wants = |ids: &[EstimatorId]| opts.estimators.iter().any(|e| ids.contains(e));
    let mut flavors = Vec::new();
    if wants(&[EstimatorId::IfDs, EstimatorId::Adaptive, EstimatorId::Adhoc]) {
        flavors.push(Flavor::Nonparametric);
    }
    if wants(&[EstimatorId::IfMarEff, EstimatorId::Adaptive, EstimatorId::Adhoc]) {
        flavors.push(Flavor::MarEfficient);
    }
    let crossfit = if flavors.is_empty() {
        None
    } else {
        let folds = assign_folds(d.len(), opts.k, opts.seed)?;
        Some(crossfit_streams(d, specs, &folds, &flavors)?)
    };
    let comparators = if wants(&[EstimatorId::OrMar, EstimatorId::IpwMar, EstimatorId::AipwMar]) {
        Some(mar_comparators(d, specs)?)
    } else {
        None
    };

    let mut out = Vec::new();
    for &id in &opts.estimators {
        match id {
            EstimatorId::IfDs | EstimatorId::IfMarEff => {
                let flavor = if id == EstimatorId::IfDs {
                    Flavor::Nonparametric
                } else {
                    Flavor::MarEfficient
                };
                let cf = crossfit.as_ref().expect("cross-fit computed");
                for arm in Arm::BOTH {
                    out.push(cf.stream(flavor, arm).expect("flavour computed").report(id, Estimand::Arm(arm), opts.level)?);
                }
                out.push(cf.contrast(flavor)?.report(id, Estimand::Contrast, opts.level)?);
            }
            EstimatorId::Adaptive | EstimatorId::Adhoc => {
                let cf = crossfit.as_ref().expect("cross-fit computed");
                out.extend(select(cf, id, opts.level)?);
            }
            EstimatorId::OrMar | EstimatorId::IpwMar | EstimatorId::AipwMar => {
                let c = comparators.as_ref().expect("comparators computed");
                for estimand in [Estimand::Arm(Arm::Control), Estimand::Arm(Arm::Treated), Estimand::Contrast] {
                    out.push(c.report(id, estimand, opts.level)?);
                }
            }
            EstimatorId::IfCoarsened => unreachable!("rejected above"),
        }
    }
    Ok(out)
}

/// Applies the ADAPTIVE or ADHOC rule to each arm and forms the contrast of
/// the selected estimators.
///
/// ADHOC attaches the naive Wald interval of what it selected. ADAPTIVE uses
/// a conservative stand-in for a selection-aware interval: the Wald interval
/// of the selection, widened to also cover the Wald intervals of both base
/// estimators whenever the MAR test does not reject for some arm.
fn select<T: Real>(cf: &CrossFit<T>, id: EstimatorId, level: f64) -> Result<Vec<EstimateReport<T>>> {
    let alpha = 1.0 - level;
    let z = T::lit(two_sided_z(level));
    let mut chosen: Vec<InfluenceStream<T>> = Vec::with_capacity(2);
    let mut selections = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let np = cf.stream(Flavor::Nonparametric, arm).expect("flavour computed");
        let mar = cf.stream(Flavor::MarEfficient, arm).expect("flavour computed");
        let n = np.values.len();
        let q = estimate_q(&np.values, &mar.values)?;
        let statistic = (q.value > T::zero())
            .then(|| T::from_count(n).sqrt() * (np.estimate - mar.estimate).abs() / q.value.sqrt());
        let rejected = statistic.is_some_and(|s| s > z);
        let selected = match id {
            EstimatorId::Adaptive => {
                adaptive_select(np.estimate, mar.estimate, np.variance(), mar.variance(), q.value, n).selected
            }
            _ => match statistic {
                Some(s) => decide(np.estimate, mar.estimate, s, alpha).selected,
                None => EstimatorId::IfMarEff,
            },
        };
        chosen.push(if selected == EstimatorId::IfDs { np.clone() } else { mar.clone() });
        selections.push(ArmSelection {
            arm,
            selected,
            q: q.value,
            q_floored: q.floored,
            statistic,
            rejected,
        });
    }

    let widen = id == EstimatorId::Adaptive;
    let contrast = ate_contrast(&chosen[1], &chosen[0])?;
    let mut reports = Vec::with_capacity(3);
    for arm in Arm::BOTH {
        let sel = &selections[arm.index()];
        let mut r = chosen[arm.index()].report(id, Estimand::Arm(arm), level)?;
        let widened = widen && !sel.rejected;
        if widened {
            for flavor in [Flavor::Nonparametric, Flavor::MarEfficient] {
                let s = cf.stream(flavor, arm).expect("flavour computed");
                r.ci = r.ci.hull(&wald_ci(s.estimate, s.variance(), s.values.len(), level)?);
            }
        }
        r.selection = Some(SelectionInfo {
            arms: vec![sel.clone()],
            widened,
        });
        reports.push(r);
    }
    let mut r = contrast.report(id, Estimand::Contrast, level)?;
    let widened = widen && selections.iter().any(|s| !s.rejected);
    if widened {
        for flavor in [Flavor::Nonparametric, Flavor::MarEfficient] {
            let s = cf.contrast(flavor)?;
            r.ci = r.ci.hull(&wald_ci(s.estimate, s.variance(), s.values.len(), level)?);
        }
    }
    r.selection = Some(SelectionInfo {
        arms: selections,
        widened,
    });
    reports.push(r);
    Ok(reports)
}
