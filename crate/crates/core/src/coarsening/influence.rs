use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Field;

use super::distribution::{marginalize_observed, DiscreteCompleteDistribution, DiscreteObservedDistribution, ObservedAtom, StratumKey};
use super::scheme::{CoarseningScheme, Level};

/// `nu_k(sigma) = E[chi_dot(X) | C = k, sigma_C = sigma, S = 1]` for every
/// finite-level stratum with positive mass. `chi_dot` is indexed by support point.
pub fn compute_nu<P: Field>(observed: &DiscreteObservedDistribution<P>, chi_dot: &[P]) -> Result<BTreeMap<StratumKey, P>> {
    if chi_dot.len() != observed.scheme().support().len() {
        return Err(Error::invalid("full-data influence function must have one value per support point"));
    }
    observed
        .stratum_masses()
        .into_keys()
        .map(|key| {
            let law = observed.fragment_law(&key)?;
            let nu = law
                .into_iter()
                .fold(P::zero(), |acc, (i, lam)| acc + lam * chi_dot[i].clone());
            Ok((key, nu))
        })
        .collect()
}

/// Ingredients of the observed-data influence function.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralIfContext<P> {
    scheme: Arc<CoarseningScheme>,
    /// Full-data influence function per support point.
    pub chi_dot: Vec<P>,
    pub eta: BTreeMap<StratumKey, P>,
    pub nu: BTreeMap<StratumKey, P>,
}

impl<P: Field> GeneralIfContext<P> {
    pub fn new(scheme: Arc<CoarseningScheme>, chi_dot: Vec<P>, eta: BTreeMap<StratumKey, P>, nu: BTreeMap<StratumKey, P>) -> Self {
        GeneralIfContext {
            scheme,
            chi_dot,
            eta,
            nu,
        }
    }

    /// Exact context at `observed` for a given full-data influence function.
    pub fn at_law(observed: &DiscreteObservedDistribution<P>, chi_dot: Vec<P>) -> Result<Self> {
        let nu = compute_nu(observed, &chi_dot)?;
        Ok(GeneralIfContext {
            scheme: observed.scheme().clone(),
            chi_dot,
            eta: observed.follow_up_probabilities(),
            nu,
        })
    }

    /// Context for the mean functional `E[g(X)]`, whose full-data influence
    /// function is `g - E[g]`.
    pub fn for_mean(observed: &DiscreteObservedDistribution<P>, g: &[P]) -> Result<Self> {
        let target = observed_representation(observed, g)?;
        GeneralIfContext::at_law(observed, g.iter().map(|v| v.clone() - target.clone()).collect())
    }

    pub fn scheme(&self) -> &Arc<CoarseningScheme> {
        &self.scheme
    }
}

/// `nu_C + (S / eta(C, sigma_C)) (chi_dot(X) - nu_C)`, equal to `chi_dot(X)`
/// when `C` is the full level. With `S = 0` the second term is dropped.
pub fn transform_if<P: Field>(atom: &ObservedAtom, ctx: &GeneralIfContext<P>) -> Result<P> {
    let scheme = &ctx.scheme;
    let chi = |bar: &[i64]| -> Result<P> {
        let i = scheme
            .reconstruct(atom.level, &atom.sigma, bar)
            .ok_or_else(|| Error::invalid(format!("atom {atom:?} does not reconstruct a support point")))?;
        Ok(ctx.chi_dot[i].clone())
    };
    let k = match atom.level {
        Level::Full => return chi(&[]),
        Level::Finite(k) => k,
    };
    let key = (k, atom.sigma.clone());
    let positivity = || Error::Positivity {
        stratum: format!("C={k}, sigma={:?}", atom.sigma),
    };
    let eta = ctx.eta.get(&key).cloned().ok_or_else(positivity)?;
    if eta <= P::zero() {
        return Err(positivity());
    }
    let nu = ctx.nu.get(&key).cloned().ok_or_else(positivity)?;
    match (&atom.sigma_bar, atom.follow_up) {
        (Some(bar), true) => Ok(nu.clone() + (chi(bar)? - nu) / eta),
        _ => Ok(nu),
    }
}

/// `E_P[f(O)]` by enumeration.
pub fn expectation<P: Field>(observed: &DiscreteObservedDistribution<P>, mut f: impl FnMut(&ObservedAtom) -> Result<P>) -> Result<P> {
    observed
        .atoms()
        .iter()
        .try_fold(P::zero(), |acc, (a, p)| Ok(acc + p.clone() * f(a)?))
}

/// `E_P[E_P(g(X) | C, sigma_C, S = 1)]`, with `g(X)` itself on full-level atoms.
pub fn observed_representation<P: Field>(observed: &DiscreteObservedDistribution<P>, g: &[P]) -> Result<P> {
    let scheme = observed.scheme();
    let nu = compute_nu(observed, g)?;
    expectation(observed, |a| match a.level {
        Level::Full => Ok(g[scheme.position(&a.sigma).expect("validated atom")].clone()),
        Level::Finite(k) => Ok(nu[&(k, a.sigma.clone())].clone()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalValue<P> {
    /// `E_{P*}[g(X)]` from the complete law.
    pub full_law: P,
    /// Observed-data representation, equal to `full_law` when the follow-up
    /// is independent of the unobserved fragment.
    pub observed_law: P,
}

impl<P: Field> FunctionalValue<P> {
    pub fn discrepancy(&self) -> P {
        self.full_law.abs_diff(&self.observed_law)
    }
}

pub fn brute_force_functional<P: Field>(complete: &DiscreteCompleteDistribution<P>, g: &[P]) -> Result<FunctionalValue<P>> {
    if g.len() != complete.scheme().support().len() {
        return Err(Error::invalid("g must have one value per support point"));
    }
    let full_law = complete
        .atoms()
        .iter()
        .fold(P::zero(), |acc, (a, p)| acc + p.clone() * g[a.point].clone());
    let observed_law = observed_representation(&marginalize_observed(complete), g)?;
    Ok(FunctionalValue { full_law, observed_law })
}

/// `E_P[tau_dot]` and `E_P[tau_dot^2]` at a context.
pub fn influence_moments<P: Field>(observed: &DiscreteObservedDistribution<P>, ctx: &GeneralIfContext<P>) -> Result<(P, P)> {
    let mean = expectation(observed, |a| transform_if(a, ctx))?;
    let second = expectation(observed, |a| {
        let v = transform_if(a, ctx)?;
        Ok(v.clone() * v)
    })?;
    Ok((mean, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsening::distribution::CompleteAtom;
    use num_rational::BigRational;

    fn q(n: u64, d: u64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    fn scheme() -> Arc<CoarseningScheme> {
        Arc::new(
            CoarseningScheme::from_projections(
                vec!["X1".into(), "X2".into()],
                vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
                &[(0, vec![0])],
            )
            .unwrap(),
        )
    }

    /// X2 uniform given X1 within the C = 0 strata, independent of S.
    fn law() -> DiscreteCompleteDistribution<BigRational> {
        let atom = |level, point, follow_up| CompleteAtom { level, point, follow_up };
        DiscreteCompleteDistribution::new(
            scheme(),
            vec![
                (atom(Level::Finite(0), 0, true), q(1, 10)),
                (atom(Level::Finite(0), 1, true), q(1, 10)),
                (atom(Level::Finite(0), 0, false), q(1, 10)),
                (atom(Level::Finite(0), 1, false), q(1, 10)),
                (atom(Level::Finite(0), 2, true), q(1, 20)),
                (atom(Level::Finite(0), 3, true), q(3, 20)),
                (atom(Level::Finite(0), 2, false), q(1, 10)),
                (atom(Level::Finite(0), 3, false), q(3, 10)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_chi_gives_constant_nu() {
        let o = marginalize_observed(&law());
        let nu = compute_nu(&o, &vec![q(2, 1); 4]).unwrap();
        assert!(nu.values().all(|v| *v == q(2, 1)));
    }

    #[test]
    fn symmetric_stratum_has_half() {
        let o = marginalize_observed(&law());
        let g: Vec<BigRational> = [0, 1, 0, 1].iter().map(|&v| q(v, 1)).collect();
        let nu = compute_nu(&o, &g).unwrap();
        assert_eq!(nu[&(0, vec![0])], q(1, 2));
        // weighted stratum X1 = 1: S = 1 masses 1/20 and 3/20
        assert_eq!(nu[&(0, vec![1])], q(3, 4));
    }

    #[test]
    fn transform_examples() {
        let s = scheme();
        let mut eta = BTreeMap::new();
        eta.insert((0, vec![0]), q(1, 2));
        let mut nu = BTreeMap::new();
        nu.insert((0, vec![0]), q(1, 1));
        let chi = vec![q(2, 1); 4];
        let ctx = GeneralIfContext::new(s, chi, eta, nu);
        let full = ObservedAtom {
            level: Level::Full,
            sigma: vec![1, 1],
            follow_up: false,
            sigma_bar: Some(vec![]),
        };
        assert_eq!(transform_if(&full, &ctx).unwrap(), q(2, 1));
        let followed = ObservedAtom {
            level: Level::Finite(0),
            sigma: vec![0],
            follow_up: true,
            sigma_bar: Some(vec![1]),
        };
        assert_eq!(transform_if(&followed, &ctx).unwrap(), q(3, 1));
        let lost = ObservedAtom {
            follow_up: false,
            sigma_bar: None,
            ..followed.clone()
        };
        assert_eq!(transform_if(&lost, &ctx).unwrap(), q(1, 1));
        let unknown = ObservedAtom {
            sigma: vec![1],
            ..lost
        };
        assert!(matches!(transform_if(&unknown, &ctx), Err(Error::Positivity { .. })));
    }

    #[test]
    fn functional_normalisation_and_indicator() {
        let p = law();
        let ones = vec![q(1, 1); 4];
        assert_eq!(brute_force_functional(&p, &ones).unwrap().full_law, q(1, 1));
        let ind: Vec<BigRational> = [0, 0, 0, 1].iter().map(|&v| q(v, 1)).collect();
        let v = brute_force_functional(&p, &ind).unwrap();
        assert_eq!(v.full_law, q(9, 20));
        assert_eq!(v.discrepancy(), q(0, 1));
    }

    #[test]
    fn influence_function_has_mean_zero() {
        let o = marginalize_observed(&law());
        let g: Vec<BigRational> = [1, 5, 2, 7].iter().map(|&v| q(v, 1)).collect();
        let ctx = GeneralIfContext::for_mean(&o, &g).unwrap();
        let (m, v) = influence_moments(&o, &ctx).unwrap();
        assert_eq!(m, q(0, 1));
        assert!(v > q(0, 1));
    }
}
