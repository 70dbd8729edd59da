use crate::data::{Arm, ObservedRecord};
use crate::error::{Error, Result};
use crate::glm::Nuisance;
use crate::scalar::Real;

/// Which influence function an estimator is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// Nonparametric influence function, valid without MAR.
    Nonparametric,
    /// Efficient influence function under MAR.
    MarEfficient,
}

/// Nuisances and plug-in value at which the influence function of arm `arm`
/// is evaluated.
#[derive(Clone, Copy)]
pub struct IfContext<'a, T, N: ?Sized> {
    pub arm: Arm,
    pub nuisance: &'a N,
    pub tau_plugin: T,
}

impl<'a, T: Real, N: Nuisance<T> + ?Sized> IfContext<'a, T, N> {
    pub fn new(arm: Arm, nuisance: &'a N, tau_plugin: T) -> Self {
        IfContext {
            arm,
            nuisance,
            tau_plugin,
        }
    }
}

/// `mu_a(L) = mu_{a,R}(L) gamma_a(L) + mu_{a,S}(L) (1 - gamma_a(L))`.
pub fn mu_composite<T: Real, N: Nuisance<T> + ?Sized>(l: &[T], arm: Arm, nuisance: &N) -> Result<T> {
    let g = nuisance.observation(arm, l)?;
    let mr = nuisance.outcome_initial(arm, l)?;
    let ms = nuisance.outcome_follow_up(arm, l)?;
    Ok(mr * g + ms * (T::one() - g))
}

/// Regression averaged by the plug-in estimator of the given flavour.
pub fn regression<T: Real, N: Nuisance<T> + ?Sized>(flavor: Flavor, l: &[T], arm: Arm, nuisance: &N) -> Result<T> {
    match flavor {
        Flavor::Nonparametric => mu_composite(l, arm, nuisance),
        Flavor::MarEfficient => nuisance.outcome_combined(arm, l),
    }
}

fn positive<T: Real>(v: T, what: &str, arm: Arm) -> Result<T> {
    if v > T::zero() {
        Ok(v)
    } else {
        Err(Error::Positivity {
            stratum: format!("{what}[A={arm}] = {v}"),
        })
    }
}

fn outcome<T: Real>(o: &ObservedRecord<T>) -> Result<T> {
    o.outcome.ok_or_else(|| Error::DataIntegrity {
        index: usize::MAX,
        reason: "outcome missing although R + S = 1".into(),
    })
}

/// Nonparametric influence function
/// `mu_a - tau + 1(A=a)/pi_a {(R + S/eta) Y - mu_a + (1 - R)(1 - S/eta) mu_{a,S}}`.
pub fn if_np<T: Real, N: Nuisance<T> + ?Sized>(o: &ObservedRecord<T>, ctx: &IfContext<'_, T, N>) -> Result<T> {
    let (arm, nu) = (ctx.arm, ctx.nuisance);
    let l = &o.covariates[..];
    let g = nu.observation(arm, l)?;
    let mr = nu.outcome_initial(arm, l)?;
    let ms = nu.outcome_follow_up(arm, l)?;
    let mu = mr * g + ms * (T::one() - g);
    let base = mu - ctx.tau_plugin;
    if o.treatment != arm {
        return Ok(base);
    }
    let pi = positive(nu.propensity(arm, l)?, "pi", arm)?;
    let aug = if o.initial {
        outcome(o)? - mu
    } else {
        let eta = positive(nu.follow_up(arm, l)?, "eta", arm)?;
        if o.follow_up {
            let w = T::one() / eta;
            w * outcome(o)? - mu + (T::one() - w) * ms
        } else {
            ms - mu
        }
    };
    Ok(base + aug / pi)
}

/// Efficient influence function under MAR
/// `mu_MAR - tau* + 1(A=a)(R+S)/(pi_a {gamma_a + (1 - gamma_a) eta}) (Y - mu_MAR)`.
pub fn if_mar<T: Real, N: Nuisance<T> + ?Sized>(o: &ObservedRecord<T>, ctx: &IfContext<'_, T, N>) -> Result<T> {
    let (arm, nu) = (ctx.arm, ctx.nuisance);
    let l = &o.covariates[..];
    let m = nu.outcome_combined(arm, l)?;
    let base = m - ctx.tau_plugin;
    if o.treatment != arm || !(o.initial || o.follow_up) {
        return Ok(base);
    }
    let pi = nu.propensity(arm, l)?;
    let g = nu.observation(arm, l)?;
    let eta = nu.follow_up(arm, l)?;
    let denom = positive(pi * (g + (T::one() - g) * eta), "pi(gamma + (1 - gamma) eta)", arm)?;
    Ok(base + (outcome(o)? - m) / denom)
}

pub fn influence<T: Real, N: Nuisance<T> + ?Sized>(
    flavor: Flavor,
    o: &ObservedRecord<T>,
    ctx: &IfContext<'_, T, N>,
) -> Result<T> {
    match flavor {
        Flavor::Nonparametric => if_np(o, ctx),
        Flavor::MarEfficient => if_mar(o, ctx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Constant nuisances, for evaluating the displayed formulas by hand.
    struct Fixed {
        pi: f64,
        gamma: f64,
        eta: f64,
        mu_r: f64,
        mu_s: f64,
        mu_mar: f64,
    }

    impl Nuisance<f64> for Fixed {
        fn propensity(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.pi)
        }
        fn observation(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.gamma)
        }
        fn follow_up(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.eta)
        }
        fn outcome_initial(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.mu_r)
        }
        fn outcome_follow_up(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.mu_s)
        }
        fn outcome_combined(&self, _: Arm, _: &[f64]) -> Result<f64> {
            Ok(self.mu_mar)
        }
    }

    fn fixed() -> Fixed {
        Fixed {
            pi: 1.0,
            gamma: 0.5,
            eta: 0.5,
            mu_r: 1.0,
            mu_s: 1.0,
            mu_mar: 1.0,
        }
    }

    fn rec(a: Arm, r: bool, s: bool, y: Option<f64>) -> ObservedRecord<f64> {
        ObservedRecord {
            covariates: vec![0.0],
            treatment: a,
            initial: r,
            follow_up: s,
            outcome: y,
        }
    }

    #[test]
    fn composite_mixes_by_gamma() {
        let mut n = fixed();
        n.mu_s = 3.0;
        assert_eq!(mu_composite(&[0.0], Arm::Treated, &n).unwrap(), 2.0);
        n.gamma = 1.0;
        assert_eq!(mu_composite(&[0.0], Arm::Treated, &n).unwrap(), 1.0);
        n.gamma = 0.0;
        assert_eq!(mu_composite(&[0.0], Arm::Treated, &n).unwrap(), 3.0);
    }

    #[test]
    fn np_initially_observed() {
        let n = Fixed { mu_r: 7.0, mu_s: -1.0, ..fixed() };
        let ctx = IfContext::new(Arm::Treated, &n, 2.0);
        assert!((if_np(&rec(Arm::Treated, true, false, Some(3.0)), &ctx).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn np_double_sampled() {
        let n = fixed();
        let ctx = IfContext::new(Arm::Treated, &n, 0.5);
        assert!((if_np(&rec(Arm::Treated, false, true, Some(1.0)), &ctx).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn np_other_arm() {
        let n = Fixed { mu_r: 2.0, mu_s: 2.0, ..fixed() };
        let ctx = IfContext::new(Arm::Treated, &n, 1.5);
        assert_eq!(if_np(&rec(Arm::Control, true, false, Some(100.0)), &ctx).unwrap(), 0.5);
    }

    #[test]
    fn np_never_reads_missing_outcome() {
        let n = fixed();
        let ctx = IfContext::new(Arm::Treated, &n, 0.0);
        assert!(if_np(&rec(Arm::Treated, false, false, None), &ctx).is_ok());
        assert!(matches!(
            if_np(&rec(Arm::Treated, true, false, None), &ctx),
            Err(Error::DataIntegrity { .. })
        ));
    }

    #[test]
    fn mar_unobserved_is_regression() {
        let n = fixed();
        let ctx = IfContext::new(Arm::Treated, &n, 0.8);
        assert!((if_mar(&rec(Arm::Treated, false, false, None), &ctx).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mar_unit_weight() {
        let n = Fixed { gamma: 1.0, mu_mar: 0.3, ..fixed() };
        let ctx = IfContext::new(Arm::Treated, &n, 0.1);
        let v = if_mar(&rec(Arm::Treated, true, false, Some(2.0)), &ctx).unwrap();
        assert!((v - ((0.3 - 0.1) + (2.0 - 0.3))).abs() < 1e-15);
    }

    #[test]
    fn mar_weight_eight_thirds() {
        let n = Fixed { pi: 0.5, mu_mar: 0.0, ..fixed() };
        let ctx = IfContext::new(Arm::Treated, &n, 0.0);
        let v = if_mar(&rec(Arm::Treated, false, true, Some(1.0)), &ctx).unwrap();
        assert!((v - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_propensity_is_positivity_error() {
        let n = Fixed { pi: 0.0, ..fixed() };
        let ctx = IfContext::new(Arm::Treated, &n, 0.0);
        assert!(matches!(
            if_np(&rec(Arm::Treated, true, false, Some(1.0)), &ctx),
            Err(Error::Positivity { .. })
        ));
    }
}
