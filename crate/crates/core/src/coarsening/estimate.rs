use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::assign_folds;
use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, Estimand, EstimatorId, InfluenceStream};

use super::distribution::{check_observed_atom, DiscreteObservedDistribution, ObservedAtom, StratumKey};
use super::scheme::{CoarseningScheme, Level};

/// Draws `n` i.i.d. observations from a discrete observed law.
pub fn sample_observed<R: Rng + ?Sized>(law: &DiscreteObservedDistribution<f64>, n: usize, rng: &mut R) -> Vec<ObservedAtom> {
    let atoms: Vec<(&ObservedAtom, f64)> = law.atoms().iter().map(|(a, &p)| (a, p)).collect();
    let dist = WeightedIndex::new(atoms.iter().map(|(_, p)| *p)).expect("validated law has positive mass");
    (0..n).map(|_| atoms[dist.sample(rng)].0.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralCrossFitOptions {
    pub k: usize,
    pub seed: u64,
    pub level: f64,
    /// Additive smoothing per cell for the empirical `eta` and fragment laws.
    pub smoothing: f64,
}

impl Default for GeneralCrossFitOptions {
    fn default() -> Self {
        GeneralCrossFitOptions {
            k: 2,
            seed: 0,
            level: 0.95,
            smoothing: 0.5,
        }
    }
}

#[derive(Default)]
struct StratumCounts {
    total: f64,
    followed: f64,
    /// Count of S = 1 observations per support point.
    fragments: HashMap<usize, f64>,
}

/// Empirical nuisances of one training fold.
struct FoldNuisance<'a> {
    scheme: &'a CoarseningScheme,
    counts: BTreeMap<StratumKey, StratumCounts>,
    alpha: f64,
}

impl<'a> FoldNuisance<'a> {
    fn fit(scheme: &'a CoarseningScheme, training: impl Iterator<Item = &'a ObservedAtom>, alpha: f64) -> Self {
        let mut counts: BTreeMap<StratumKey, StratumCounts> = BTreeMap::new();
        for a in training {
            let Level::Finite(k) = a.level else { continue };
            let c = counts.entry((k, a.sigma.clone())).or_default();
            c.total += 1.0;
            if let (true, Some(bar)) = (a.follow_up, &a.sigma_bar) {
                c.followed += 1.0;
                let i = scheme.reconstruct(a.level, &a.sigma, bar).expect("validated atom");
                *c.fragments.entry(i).or_default() += 1.0;
            }
        }
        FoldNuisance { scheme, counts, alpha }
    }

    /// `(eta_hat, nu_hat^g)` for a stratum.
    fn predict(&self, k: u32, sigma: &[i64], g: &[f64]) -> Result<(f64, f64)> {
        let empty = StratumCounts::default();
        let c = self.counts.get(&(k, sigma.to_vec())).unwrap_or(&empty);
        let members = self.scheme.stratum(k, sigma);
        let positivity = || Error::Positivity {
            stratum: format!("C={k}, sigma={sigma:?} has no follow-up in the training folds"),
        };
        let eta = (c.followed + self.alpha) / (c.total + 2.0 * self.alpha);
        let denom = c.followed + self.alpha * members.len() as f64;
        if !(eta > 0.0) || !(denom > 0.0) {
            return Err(positivity());
        }
        let nu = members
            .iter()
            .map(|&i| (c.fragments.get(&i).copied().unwrap_or(0.0) + self.alpha) / denom * g[i])
            .sum();
        Ok((eta, nu))
    }
}

/// Cross-fitted one-step estimator of `E[g(X)]` from coarsened observations,
/// with empirical-frequency nuisances fitted on each fold complement.
pub fn crossfit_general(
    samples: &[ObservedAtom],
    scheme: &CoarseningScheme,
    g: &[f64],
    opts: &GeneralCrossFitOptions,
) -> Result<EstimateReport<f64>> {
    if g.len() != scheme.support().len() {
        return Err(Error::invalid("g must have one value per support point"));
    }
    if opts.smoothing < 0.0 {
        return Err(Error::invalid("smoothing must be non-negative"));
    }
    for a in samples {
        check_observed_atom(scheme, a)?;
    }
    let folds = assign_folds(samples.len(), opts.k, opts.seed)?;
    let per_fold = (0..folds.k())
        .into_par_iter()
        .map(|k| {
            let training = folds.training(k);
            let nuisance = FoldNuisance::fit(scheme, training.iter().map(|&i| &samples[i]), opts.smoothing);
            let members = folds.members(k);
            // m(O) is the regression averaged by the plug-in; the one-step
            // value adds the weighted residual of followed-up observations.
            let mut regression = Vec::with_capacity(members.len());
            let mut one_step = Vec::with_capacity(members.len());
            for &i in &members {
                let a = &samples[i];
                match a.level {
                    Level::Full => {
                        let v = g[scheme.position(&a.sigma).expect("validated atom")];
                        regression.push(v);
                        one_step.push(v);
                    }
                    Level::Finite(lk) => {
                        let (eta, nu) = nuisance.predict(lk, &a.sigma, g).map_err(|e| e.in_fold(k))?;
                        let v = match (&a.sigma_bar, a.follow_up) {
                            (Some(bar), true) => {
                                let x = scheme.reconstruct(a.level, &a.sigma, bar).expect("validated atom");
                                nu + (g[x] - nu) / eta
                            }
                            _ => nu,
                        };
                        regression.push(nu);
                        one_step.push(v);
                    }
                }
            }
            let plugin = regression.iter().sum::<f64>() / members.len() as f64;
            let values: Vec<f64> = one_step.iter().map(|v| v - plugin).collect();
            let estimate = plugin + values.iter().sum::<f64>() / members.len() as f64;
            Ok((members, estimate, values))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = vec![0.0; samples.len()];
    let mut fold_estimates = Vec::with_capacity(per_fold.len());
    for (members, estimate, v) in per_fold {
        for (i, x) in members.into_iter().zip(v) {
            values[i] = x;
        }
        fold_estimates.push(estimate);
    }
    let stream = InfluenceStream {
        estimate: fold_estimates.iter().sum::<f64>() / fold_estimates.len() as f64,
        fold_estimates,
        values,
    };
    stream.report(EstimatorId::IfCoarsened, Estimand::Functional, opts.level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn full_only() -> (Arc<CoarseningScheme>, DiscreteObservedDistribution<f64>) {
        let scheme = Arc::new(
            CoarseningScheme::from_projections(vec!["X".into()], vec![vec![0], vec![1], vec![2]], &[(0, vec![])]).unwrap(),
        );
        let atom = |x| ObservedAtom {
            level: Level::Full,
            sigma: vec![x],
            follow_up: false,
            sigma_bar: Some(vec![]),
        };
        let law = DiscreteObservedDistribution::new(scheme.clone(), vec![(atom(0), 0.2), (atom(1), 0.5), (atom(2), 0.3)]).unwrap();
        (scheme, law)
    }

    #[test]
    fn without_coarsening_estimate_is_sample_mean() {
        let (scheme, law) = full_only();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = sample_observed(&law, 1000, &mut rng);
        let g = [0.0, 1.0, 4.0];
        let opts = GeneralCrossFitOptions {
            k: 1,
            ..GeneralCrossFitOptions::default()
        };
        let r = crossfit_general(&samples, &scheme, &g, &opts).unwrap();
        let vals: Vec<f64> = samples.iter().map(|a| g[a.sigma[0] as usize]).collect();
        let mean = vals.iter().sum::<f64>() / 1000.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!((r.estimate - mean).abs() < 1e-12);
        assert!((r.variance - var).abs() < 1e-12);
    }

    #[test]
    fn unsmoothed_empty_stratum_is_positivity_error() {
        let scheme = Arc::new(
            CoarseningScheme::from_projections(vec!["X".into()], vec![vec![0], vec![1]], &[(0, vec![])]).unwrap(),
        );
        let lost = ObservedAtom {
            level: Level::Finite(0),
            sigma: vec![],
            follow_up: false,
            sigma_bar: None,
        };
        let samples = vec![lost; 10];
        let opts = GeneralCrossFitOptions {
            k: 2,
            smoothing: 0.0,
            ..GeneralCrossFitOptions::default()
        };
        match crossfit_general(&samples, &scheme, &[0.0, 1.0], &opts).unwrap_err() {
            Error::Fold { source, .. } => assert!(matches!(*source, Error::Positivity { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }
}
