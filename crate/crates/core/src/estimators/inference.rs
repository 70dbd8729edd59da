use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{two_sided_z, Real};

use super::crossfit::InfluenceStream;
use super::EstimatorId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
    pub level: f64,
}

impl<T: Real> Interval<T> {
    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn length(&self) -> T {
        self.upper - self.lower
    }

    /// Smallest interval covering both.
    pub fn hull(&self, other: &Interval<T>) -> Interval<T> {
        Interval {
            lower: self.lower.min(other.lower),
            upper: self.upper.max(other.upper),
            level: self.level,
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence level {level} not in (0, 1)")))
    }
}

/// `point +- z_{1-alpha/2} sqrt(V / n)`.
pub fn wald_ci<T: Real>(point: T, variance: T, n: usize, level: f64) -> Result<Interval<T>> {
    check_level(level)?;
    if !(variance >= T::zero()) {
        return Err(Error::invalid(format!("variance {variance} is negative")));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let half = T::lit(two_sided_z(level)) * (variance / T::from_count(n)).sqrt();
    Ok(Interval {
        lower: point - half,
        upper: point + half,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QStatistic<T> {
    /// Value after flooring at zero.
    pub value: T,
    pub raw: T,
    pub floored: bool,
}

/// `Q = V + V* - (2/n) sum IF IF*`, an estimate of `Var(IF - IF*)`.
pub fn estimate_q<T: Real>(np: &[T], mar: &[T]) -> Result<QStatistic<T>> {
    if np.len() != mar.len() {
        return Err(Error::invalid(format!(
            "influence streams have lengths {} and {}",
            np.len(),
            mar.len()
        )));
    }
    if np.is_empty() {
        return Err(Error::invalid("empty influence streams"));
    }
    let n = T::from_count(np.len());
    let v: T = np.iter().map(|&x| x * x).sum::<T>() / n;
    let v_star: T = mar.iter().map(|&x| x * x).sum::<T>() / n;
    let cross: T = np.iter().zip(mar).map(|(&x, &y)| x * y).sum::<T>() / n;
    let raw = v + v_star - (cross + cross);
    let floored = raw < T::zero();
    Ok(QStatistic {
        value: if floored { T::zero() } else { raw },
        raw,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveDecision<T> {
    pub selected: EstimatorId,
    pub estimate: T,
    /// Right-hand side `max{n (tau - tau*)^2 - Q, 0} + V*`.
    pub threshold: T,
}

/// Chooses `tau` when `V < max{n (tau - tau*)^2 - Q, 0} + V*`, else `tau*`.
pub fn adaptive_select<T: Real>(tau: T, tau_star: T, v: T, v_star: T, q: T, n: usize) -> AdaptiveDecision<T> {
    let d = tau - tau_star;
    let threshold = (T::from_count(n) * d * d - q).max(T::zero()) + v_star;
    if v < threshold {
        AdaptiveDecision {
            selected: EstimatorId::IfDs,
            estimate: tau,
            threshold,
        }
    } else {
        AdaptiveDecision {
            selected: EstimatorId::IfMarEff,
            estimate: tau_star,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdhocDecision<T> {
    pub selected: EstimatorId,
    pub estimate: T,
    /// Absent when `Q = 0` and the test is undefined.
    pub statistic: Option<T>,
    pub rejected: bool,
}

/// Chooses `tau` when the MAR test `sqrt(n)|tau - tau*| / sqrt(Q) > z_{1-alpha/2}`
/// rejects. A zero `Q` makes the test undefined and selects `tau*`.
pub fn adhoc_select<T: Real>(tau: T, tau_star: T, q: T, n: usize, alpha: f64) -> Result<AdhocDecision<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} not in (0, 1)")));
    }
    if !(q > T::zero()) {
        return Ok(AdhocDecision {
            selected: EstimatorId::IfMarEff,
            estimate: tau_star,
            statistic: None,
            rejected: false,
        });
    }
    let stat = T::from_count(n).sqrt() * (tau - tau_star).abs() / q.sqrt();
    Ok(decide(tau, tau_star, stat, alpha))
}

pub(crate) fn decide<T: Real>(tau: T, tau_star: T, stat: T, alpha: f64) -> AdhocDecision<T> {
    let rejected = stat > T::lit(two_sided_z(1.0 - alpha));
    AdhocDecision {
        selected: if rejected { EstimatorId::IfDs } else { EstimatorId::IfMarEff },
        estimate: if rejected { tau } else { tau_star },
        statistic: Some(stat),
        rejected,
    }
}

/// Arm 1 minus arm 0, with the influence function of the contrast taken
/// record by record.
pub fn ate_contrast<T: Real>(treated: &InfluenceStream<T>, control: &InfluenceStream<T>) -> Result<InfluenceStream<T>> {
    if treated.values.len() != control.values.len() || treated.fold_estimates.len() != control.fold_estimates.len() {
        return Err(Error::invalid("arm estimates come from different samples or folds"));
    }
    Ok(InfluenceStream {
        estimate: treated.estimate - control.estimate,
        fold_estimates: treated
            .fold_estimates
            .iter()
            .zip(&control.fold_estimates)
            .map(|(&a, &b)| a - b)
            .collect(),
        values: treated.values.iter().zip(&control.values).map(|(&a, &b)| a - b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_examples() {
        // sqrt(V / n) = 0.1
        let ci = wald_ci(0.5_f64, 1.0, 100, 0.95).unwrap();
        assert!((ci.lower - 0.304).abs() < 1e-4 && (ci.upper - 0.696).abs() < 1e-4);
        let ci = wald_ci(0.0_f64, 1.0, 100, 0.5).unwrap();
        assert!((ci.upper - 0.067449).abs() < 1e-6);
        let ci = wald_ci(0.3, 0.0, 10, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.3, 0.3));
        assert!(wald_ci(0.0, 1.0, 10, 1.0).is_err());
        assert!(wald_ci(0.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn q_examples() {
        let a = [1.0, -2.0, 0.5, 0.5];
        assert_eq!(estimate_q(&a, &a).unwrap().value, 0.0);
        let b = [2.0_f64, -2.0, 2.0, -2.0];
        assert!((estimate_q(&b, &[0.0; 4]).unwrap().value - 4.0).abs() < 1e-15);
        assert!(estimate_q(&a, &b[..3]).is_err());
    }

    #[test]
    fn q_cross_moment_half() {
        // cross moment 0.5 with both second moments 1
        let u = [1.0_f64, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let w = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0];
        let q = estimate_q(&u, &w).unwrap();
        assert!((q.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rounding_never_yields_negative_q() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 1e3).collect();
        let q = estimate_q(&x, &x).unwrap();
        assert!(q.value >= 0.0);
        assert_eq!(q.floored, q.raw < 0.0);
    }

    #[test]
    fn adaptive_examples() {
        let d = adaptive_select(0.5, 0.5, 2.0, 1.0, 0.5, 100);
        assert_eq!(d.selected, EstimatorId::IfMarEff);
        assert_eq!(d.threshold, 1.0);
        let d = adaptive_select(1.0, 0.0, 2.0, 1.0, 1.0, 100);
        assert_eq!(d.selected, EstimatorId::IfDs);
        assert_eq!(d.threshold, 100.0);
        assert_eq!(d.estimate, 1.0);
        let d = adaptive_select(0.2, 0.2, 1.5, 1.5, 0.0, 100);
        assert_eq!(d.selected, EstimatorId::IfMarEff);
    }

    #[test]
    fn adhoc_examples() {
        // sqrt(100) * 0.3 / sqrt(1) = 3
        let d = adhoc_select(0.3, 0.0, 1.0, 100, 0.05).unwrap();
        assert!(d.rejected);
        assert_eq!(d.selected, EstimatorId::IfDs);
        let d = adhoc_select(0.3, 0.3, 1.0, 100, 0.05).unwrap();
        assert_eq!(d.selected, EstimatorId::IfMarEff);
        let d = decide(1.0, 0.0, 1.959, 0.05);
        assert!(!d.rejected);
        let d = adhoc_select(1.0, 0.0, 0.0, 100, 0.05).unwrap();
        assert_eq!((d.selected, d.statistic), (EstimatorId::IfMarEff, None));
        assert!(adhoc_select(1.0, 0.0, 1.0, 100, 1.5).is_err());
    }

    fn stream(estimate: f64, values: Vec<f64>) -> InfluenceStream<f64> {
        InfluenceStream {
            estimate,
            fold_estimates: vec![estimate],
            values,
        }
    }

    #[test]
    fn contrast_uses_record_differences() {
        let s = stream(0.4, vec![1.0, -1.0, 2.0, -2.0]);
        let c = ate_contrast(&s, &s).unwrap();
        assert_eq!(c.estimate, 0.0);
        assert_eq!(c.variance(), 0.0);
        let zero = stream(0.1, vec![0.0; 4]);
        let c = ate_contrast(&s, &zero).unwrap();
        assert!((c.variance() - s.variance()).abs() < 1e-15);
        assert!(ate_contrast(&s, &stream(0.0, vec![0.0; 3])).is_err());
    }
}
