//! Closed-form population quantities: the difference between the MAR and the
//! double-sampling estimands, and the first-order remainders of both
//! one-step estimators at misspecified nuisances.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nuisance values at one covariate stratum for one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow<T> {
    /// Probability of the stratum.
    pub weight: T,
    pub gamma: T,
    pub eta: T,
    pub mu_initial: T,
    pub mu_follow_up: T,
}

fn check_weights<T: Real>(weights: impl Iterator<Item = T>) -> Result<()> {
    let total: T = weights.sum();
    if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
        return Err(Error::invalid(format!("stratum weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `tau* - tau = E[gamma (1-gamma)(1-eta) / {1 - (1-gamma)(1-eta)} (mu_R - mu_S)]`.
pub fn bias_gap<T: Real>(rows: &[GapRow<T>]) -> Result<T> {
    check_weights(rows.iter().map(|r| r.weight))?;
    let one = T::one();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let miss = (one - r.gamma) * (one - r.eta);
            let denom = one - miss;
            if denom == T::zero() {
                return Err(Error::DivisionByZero(format!(
                    "stratum {i}: (1 - gamma)(1 - eta) = 1"
                )));
            }
            Ok(r.weight * r.gamma * miss / denom * (r.mu_initial - r.mu_follow_up))
        })
        .sum()
}

/// Full set of nuisance values at one stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceValues<T> {
    pub pi: T,
    pub gamma: T,
    pub eta: T,
    pub mu_initial: T,
    pub mu_follow_up: T,
    pub mu_combined: T,
}

impl<T: Real> NuisanceValues<T> {
    pub fn mu_composite(&self) -> T {
        self.mu_initial * self.gamma + self.mu_follow_up * (T::one() - self.gamma)
    }

    /// Probability that the outcome is observed at some stage.
    pub fn observed(&self) -> T {
        self.gamma + (T::one() - self.gamma) * self.eta
    }

    /// `mu_MAR` implied by the other regressions.
    pub fn implied_combined(&self) -> T {
        (self.gamma * self.mu_initial + (T::one() - self.gamma) * self.eta * self.mu_follow_up) / self.observed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderRow<T> {
    pub weight: T,
    pub truth: NuisanceValues<T>,
    pub fitted: NuisanceValues<T>,
}

/// Remainder of the nonparametric one-step estimator:
/// `E[(1 - pi/pi~)(mu~ - mu)] + E[(1-gamma)(pi/pi~)(1 - eta/eta~)(mu~_S - mu_S)]`.
pub fn np_remainder<T: Real>(rows: &[RemainderRow<T>]) -> Result<T> {
    check_weights(rows.iter().map(|r| r.weight))?;
    let one = T::one();
    Ok(rows
        .iter()
        .map(|r| {
            let (p, q) = (&r.truth, &r.fitted);
            let ratio = p.pi / q.pi;
            r.weight
                * ((one - ratio) * (q.mu_composite() - p.mu_composite())
                    + (one - p.gamma) * ratio * (one - p.eta / q.eta) * (q.mu_follow_up - p.mu_follow_up))
        })
        .sum())
}

/// Remainder of the MAR-efficient one-step estimator:
/// `E[(1 - pi D / (pi~ D~))(mu~_MAR - mu_MAR)]` with `D = gamma + (1-gamma) eta`.
pub fn mar_remainder<T: Real>(rows: &[RemainderRow<T>]) -> Result<T> {
    check_weights(rows.iter().map(|r| r.weight))?;
    Ok(rows
        .iter()
        .map(|r| {
            let (p, q) = (&r.truth, &r.fitted);
            let ratio = p.pi * p.observed() / (q.pi * q.observed());
            r.weight * (T::one() - ratio) * (q.mu_combined - p.mu_combined)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(gamma: f64, eta: f64, diff: f64) -> GapRow<f64> {
        GapRow {
            weight: 1.0,
            gamma,
            eta,
            mu_initial: diff,
            mu_follow_up: 0.0,
        }
    }

    #[test]
    fn single_stratum_one_sixth() {
        assert!((bias_gap(&[row(0.5, 0.5, 1.0)]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mar_and_full_follow_up_have_no_gap() {
        assert_eq!(bias_gap(&[row(0.3, 0.2, 0.0)]).unwrap(), 0.0);
        assert_eq!(bias_gap(&[row(0.3, 1.0, 5.0)]).unwrap(), 0.0);
    }

    #[test]
    fn never_observed_stratum_divides_by_zero() {
        assert!(matches!(bias_gap(&[row(0.0, 0.0, 1.0)]), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut r = row(0.5, 0.5, 1.0);
        r.weight = 0.5;
        assert!(bias_gap(&[r]).is_err());
    }

    fn values(pi: f64, gamma: f64, eta: f64, mu_r: f64, mu_s: f64) -> NuisanceValues<f64> {
        let mut v = NuisanceValues {
            pi,
            gamma,
            eta,
            mu_initial: mu_r,
            mu_follow_up: mu_s,
            mu_combined: 0.0,
        };
        v.mu_combined = v.implied_combined();
        v
    }

    #[test]
    fn remainders_vanish_at_truth() {
        let t = values(0.3, 0.4, 0.2, 1.0, -1.0);
        let rows = [RemainderRow {
            weight: 1.0,
            truth: t,
            fitted: t,
        }];
        assert_eq!(np_remainder(&rows).unwrap(), 0.0);
        assert_eq!(mar_remainder(&rows).unwrap(), 0.0);
    }
}
