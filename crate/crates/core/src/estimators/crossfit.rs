use rayon::prelude::*;

use crate::data::{Arm, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::glm::{fit_nuisance_bundle, SpecSet};
use crate::scalar::{mean, mean_square, Real};

use super::inference::{ate_contrast, wald_ci};
use super::influence::{influence, regression, Flavor, IfContext};
use super::{EstimateReport, Estimand, EstimatorId};

/// A point estimate with its estimated influence function at every record.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceStream<T> {
    pub estimate: T,
    pub fold_estimates: Vec<T>,
    /// Influence function value per record, in dataset order.
    pub values: Vec<T>,
}

impl<T: Real> InfluenceStream<T> {
    /// `(1/n) sum IF^2`, the variance of the root-n scaled estimator.
    pub fn variance(&self) -> T {
        mean_square(&self.values)
    }

    pub fn report(&self, estimator: EstimatorId, estimand: Estimand, level: f64) -> Result<EstimateReport<T>> {
        let n = self.values.len();
        let variance = self.variance();
        Ok(EstimateReport {
            estimator,
            variant: None,
            estimand,
            estimate: self.estimate,
            variance,
            ci: wald_ci(self.estimate, variance, n, level)?,
            n,
            k: self.fold_estimates.len(),
            fold_estimates: self.fold_estimates.clone(),
            selection: None,
            naive_variance: false,
        })
    }
}

/// Cross-fitted influence-function estimates for both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit<T> {
    pub folds: FoldAssignment,
    nonparametric: Option<[InfluenceStream<T>; 2]>,
    mar: Option<[InfluenceStream<T>; 2]>,
}

impl<T: Real> CrossFit<T> {
    pub fn stream(&self, flavor: Flavor, arm: Arm) -> Option<&InfluenceStream<T>> {
        let pair = match flavor {
            Flavor::Nonparametric => self.nonparametric.as_ref(),
            Flavor::MarEfficient => self.mar.as_ref(),
        };
        pair.map(|p| &p[arm.index()])
    }

    pub fn contrast(&self, flavor: Flavor) -> Result<InfluenceStream<T>> {
        let missing = || Error::invalid(format!("{flavor:?} estimates were not computed"));
        let t = self.stream(flavor, Arm::Treated).ok_or_else(missing)?;
        let c = self.stream(flavor, Arm::Control).ok_or_else(missing)?;
        ate_contrast(t, c)
    }
}

struct FoldOutput<T> {
    members: Vec<usize>,
    /// Indexed by `[flavor slot][arm]`.
    estimates: Vec<[T; 2]>,
    values: Vec<[Vec<T>; 2]>,
}

fn at_record(e: Error, index: usize) -> Error {
    match e {
        Error::DataIntegrity { index: usize::MAX, reason } => Error::DataIntegrity { index, reason },
        other => other,
    }
}

fn run_fold<T: Real>(
    d: &Dataset<T>,
    specs: &SpecSet,
    folds: &FoldAssignment,
    fold: usize,
    flavors: &[Flavor],
) -> Result<FoldOutput<T>> {
    let members = folds.members(fold);
    if members.is_empty() {
        return Err(Error::invalid("empty fold"));
    }
    let nuisance = fit_nuisance_bundle(d, &folds.training(fold), specs)?;
    let mut estimates = Vec::with_capacity(flavors.len());
    let mut values = Vec::with_capacity(flavors.len());
    for &flavor in flavors {
        let mut est = [T::zero(); 2];
        let mut vals: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        for arm in Arm::BOTH {
            let fitted = members
                .iter()
                .map(|&i| regression(flavor, &d.record(i).covariates, arm, &nuisance).map_err(|e| at_record(e, i)))
                .collect::<Result<Vec<T>>>()?;
            let plugin = mean(&fitted);
            let ctx = IfContext::new(arm, &nuisance, plugin);
            let v = members
                .iter()
                .map(|&i| influence(flavor, d.record(i), &ctx).map_err(|e| at_record(e, i)))
                .collect::<Result<Vec<T>>>()?;
            est[arm.index()] = plugin + mean(&v);
            vals[arm.index()] = v;
        }
        estimates.push(est);
        values.push(vals);
    }
    Ok(FoldOutput {
        members,
        estimates,
        values,
    })
}

/// Fits the nuisances once per fold on the fold complement and evaluates the
/// requested influence functions on the held-out fold, for both arms.
///
/// Fold `k` yields `plugin_k + mean_{I_k} IF`, where `plugin_k` is the mean of
/// the fitted regression over `I_k`; the estimate is the average over folds.
pub fn crossfit_streams<T: Real>(
    d: &Dataset<T>,
    specs: &SpecSet,
    folds: &FoldAssignment,
    flavors: &[Flavor],
) -> Result<CrossFit<T>> {
    if folds.n() != d.len() {
        return Err(Error::invalid(format!(
            "fold assignment covers {} records, dataset has {}",
            folds.n(),
            d.len()
        )));
    }
    let outputs = (0..folds.k())
        .into_par_iter()
        .map(|k| run_fold(d, specs, folds, k, flavors).map_err(|e| e.in_fold(k)))
        .collect::<Result<Vec<_>>>()?;

    let k = T::from_count(folds.k());
    let mut streams = Vec::with_capacity(flavors.len());
    for slot in 0..flavors.len() {
        let pair = Arm::BOTH.map(|arm| {
            let a = arm.index();
            let mut values = vec![T::zero(); d.len()];
            let mut fold_estimates = Vec::with_capacity(outputs.len());
            for out in &outputs {
                for (&i, &v) in out.members.iter().zip(&out.values[slot][a]) {
                    values[i] = v;
                }
                fold_estimates.push(out.estimates[slot][a]);
            }
            InfluenceStream {
                estimate: fold_estimates.iter().copied().sum::<T>() / k,
                fold_estimates,
                values,
            }
        });
        streams.push(pair);
    }

    let mut nonparametric = None;
    let mut mar = None;
    for (flavor, pair) in flavors.iter().zip(streams) {
        match flavor {
            Flavor::Nonparametric => nonparametric = Some(pair),
            Flavor::MarEfficient => mar = Some(pair),
        }
    }
    Ok(CrossFit {
        folds: folds.clone(),
        nonparametric,
        mar,
    })
}

/// Single-arm cross-fit estimate as a report.
pub fn estimate_crossfit<T: Real>(
    d: &Dataset<T>,
    arm: Arm,
    specs: &SpecSet,
    folds: &FoldAssignment,
    flavor: Flavor,
    level: f64,
) -> Result<EstimateReport<T>> {
    let fit = crossfit_streams(d, specs, folds, &[flavor])?;
    let id = match flavor {
        Flavor::Nonparametric => EstimatorId::IfDs,
        Flavor::MarEfficient => EstimatorId::IfMarEff,
    };
    fit.stream(flavor, arm)
        .expect("requested flavour computed")
        .report(id, Estimand::Arm(arm), level)
}
