//! Estimators that use the initially observed data `(L, A, R, RY)` only and
//! assume the outcome is missing at random.

use crate::data::{Arm, Dataset};
use crate::error::{Error, Result};
use crate::glm::{fit_nuisance_bundle, Nuisance, SpecSet};
use crate::scalar::{mean, Real};

use super::crossfit::InfluenceStream;
use super::inference::ate_contrast;
use super::{EstimateReport, Estimand, EstimatorId};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSet<T> {
    /// g-formula average of `mu_{a,R}`.
    pub outcome_regression: [InfluenceStream<T>; 2],
    /// Weights `1 / (pi_a gamma_a)`.
    pub ipw: [InfluenceStream<T>; 2],
    pub aipw: [InfluenceStream<T>; 2],
}

impl<T: Real> ComparatorSet<T> {
    pub fn stream(&self, id: EstimatorId, arm: Arm) -> Option<&InfluenceStream<T>> {
        let pair = match id {
            EstimatorId::OrMar => &self.outcome_regression,
            EstimatorId::IpwMar => &self.ipw,
            EstimatorId::AipwMar => &self.aipw,
            _ => return None,
        };
        Some(&pair[arm.index()])
    }

    /// Reports for one arm or the contrast. The OR-MAR variance is the naive
    /// plug-in one and is flagged as such.
    pub fn report(&self, id: EstimatorId, estimand: Estimand, level: f64) -> Result<EstimateReport<T>> {
        let missing = || Error::invalid(format!("{id} is not a MAR comparator"));
        let stream = match estimand {
            Estimand::Arm(a) => self.stream(id, a).ok_or_else(missing)?.clone(),
            Estimand::Contrast => ate_contrast(
                self.stream(id, Arm::Treated).ok_or_else(missing)?,
                self.stream(id, Arm::Control).ok_or_else(missing)?,
            )?,
            Estimand::Functional => return Err(Error::invalid("MAR comparators target arm means")),
        };
        let mut r = stream.report(id, estimand, level)?;
        r.naive_variance = id == EstimatorId::OrMar;
        Ok(r)
    }
}

fn centred<T: Real>(terms: Vec<T>) -> InfluenceStream<T> {
    let estimate = mean(&terms);
    InfluenceStream {
        estimate,
        fold_estimates: vec![estimate],
        values: terms.into_iter().map(|t| t - estimate).collect(),
    }
}

/// OR-, IPW- and AIPW-MAR estimates for both arms, with `pi`, `gamma` and
/// `mu_{a,R}` fitted on the whole sample. Follow-up data are ignored.
pub fn mar_comparators<T: Real>(d: &Dataset<T>, specs: &SpecSet) -> Result<ComparatorSet<T>> {
    if specs.observation.is_none() || specs.outcome_initial.is_none() {
        return Err(Error::MissingNuisance("gamma and mu_r are required by the MAR comparators".into()));
    }
    let all: Vec<usize> = (0..d.len()).collect();
    let nuisance = fit_nuisance_bundle(d, &all, &specs.initial_only())?;
    let per_arm = |arm: Arm| -> Result<[InfluenceStream<T>; 3]> {
        let mut or = Vec::with_capacity(d.len());
        let mut ipw = Vec::with_capacity(d.len());
        let mut aipw = Vec::with_capacity(d.len());
        for (i, r) in d.records().iter().enumerate() {
            let l = &r.covariates[..];
            let m = nuisance.outcome_initial(arm, l)?;
            let (w_y, w_resid) = if r.treatment == arm && r.initial {
                let y = r.outcome.ok_or_else(|| Error::DataIntegrity {
                    index: i,
                    reason: "outcome missing although R = 1".into(),
                })?;
                let w = nuisance.propensity(arm, l)? * nuisance.observation(arm, l)?;
                (y / w, (y - m) / w)
            } else {
                (T::zero(), T::zero())
            };
            or.push(m);
            ipw.push(w_y);
            aipw.push(m + w_resid);
        }
        Ok([centred(or), centred(ipw), centred(aipw)])
    };
    let [or0, ipw0, aipw0] = per_arm(Arm::Control)?;
    let [or1, ipw1, aipw1] = per_arm(Arm::Treated)?;
    Ok(ComparatorSet {
        outcome_regression: [or0, or1],
        ipw: [ipw0, ipw1],
        aipw: [aipw0, aipw1],
    })
}
