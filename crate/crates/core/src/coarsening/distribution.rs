use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Field;

use super::scheme::{CoarseningScheme, Level, Point};

/// `(C, X, S)` with `X` given by its support index. At the full level `S` is
/// irrelevant and stored as `false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompleteAtom {
    pub level: Level,
    pub point: usize,
    pub follow_up: bool,
}

/// `(C, sigma_C(X), S, S sigma_bar_C(X))`. The complement fragment is present
/// iff `S = 1` or `C` is the full level (where it is empty).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObservedAtom {
    pub level: Level,
    pub sigma: Point,
    pub follow_up: bool,
    pub sigma_bar: Option<Point>,
}

/// `(level k, sigma)` identifying a stratum of coarsened observations.
pub type StratumKey = (u32, Point);

fn check_mass<'a, P: Field>(probs: impl Iterator<Item = &'a P>) -> Result<()> {
    let mut total = P::zero();
    for p in probs {
        if *p < P::zero() {
            return Err(Error::invalid(format!("negative probability {p:?}")));
        }
        total = total + p.clone();
    }
    if total.abs_diff(&P::one()) > P::tolerance() {
        return Err(Error::invalid(format!("probabilities sum to {total:?}, not 1")));
    }
    Ok(())
}

fn add<K: Ord, P: Field>(map: &mut BTreeMap<K, P>, key: K, p: P) {
    let slot = map.entry(key).or_insert_with(P::zero);
    *slot = slot.clone() + p;
}

/// Law of the complete data `(C, sigma_C(X), S, sigma_bar_C(X))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCompleteDistribution<P> {
    scheme: Arc<CoarseningScheme>,
    atoms: BTreeMap<CompleteAtom, P>,
}

impl<P: Field> DiscreteCompleteDistribution<P> {
    pub fn new(scheme: Arc<CoarseningScheme>, atoms: Vec<(CompleteAtom, P)>) -> Result<Self> {
        check_mass(atoms.iter().map(|(_, p)| p))?;
        let mut map = BTreeMap::new();
        for (mut a, p) in atoms {
            if a.point >= scheme.support().len() {
                return Err(Error::invalid(format!("atom refers to support point {}", a.point)));
            }
            if !scheme.has_level(a.level) {
                return Err(Error::invalid(format!("atom at undefined level {}", a.level)));
            }
            if a.level == Level::Full {
                a.follow_up = false;
            }
            if p > P::zero() {
                add(&mut map, a, p);
            }
        }
        Ok(DiscreteCompleteDistribution { scheme, atoms: map })
    }

    pub fn scheme(&self) -> &Arc<CoarseningScheme> {
        &self.scheme
    }

    pub fn atoms(&self) -> &BTreeMap<CompleteAtom, P> {
        &self.atoms
    }

    pub fn probability(&self, atom: &CompleteAtom) -> P {
        self.atoms.get(atom).cloned().unwrap_or_else(P::zero)
    }

    /// Marginal law of `X` as a vector over the support.
    pub fn full_data_law(&self) -> Vec<P> {
        let mut p = vec![P::zero(); self.scheme.support().len()];
        for (a, q) in &self.atoms {
            p[a.point] = p[a.point].clone() + q.clone();
        }
        p
    }

    /// Largest atom-wise absolute difference; both laws must share a scheme.
    pub fn max_discrepancy(&self, other: &Self) -> P {
        let mut worst = P::zero();
        for key in self.atoms.keys().chain(other.atoms.keys()) {
            let d = self.probability(key).abs_diff(&other.probability(key));
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    pub fn map_probabilities<Q: Field>(&self, f: impl Fn(&P) -> Q) -> Result<DiscreteCompleteDistribution<Q>> {
        DiscreteCompleteDistribution::new(self.scheme.clone(), self.atoms.iter().map(|(a, p)| (*a, f(p))).collect())
    }
}

/// Law of the observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObservedDistribution<P> {
    scheme: Arc<CoarseningScheme>,
    atoms: BTreeMap<ObservedAtom, P>,
}

pub(crate) fn check_observed_atom(scheme: &CoarseningScheme, a: &ObservedAtom) -> Result<()> {
    let bad = |why: &str| Err(Error::invalid(format!("observed atom {a:?}: {why}")));
    match a.level {
        Level::Full => {
            if a.follow_up || a.sigma_bar.as_ref().is_none_or(|b| !b.is_empty()) {
                return bad("full-level atoms carry S = 0 and an empty complement");
            }
            if scheme.position(&a.sigma).is_none() {
                return bad("not a support point");
            }
        }
        Level::Finite(k) => {
            if !scheme.has_level(a.level) {
                return bad("undefined level");
            }
            if scheme.stratum(k, &a.sigma).is_empty() {
                return bad("fragment not produced by any support point");
            }
            match (&a.sigma_bar, a.follow_up) {
                (Some(b), true) => {
                    if scheme.reconstruct(a.level, &a.sigma, b).is_none() {
                        return bad("fragments do not reconstruct a support point");
                    }
                }
                (None, false) => {}
                _ => return bad("complement fragment must be present exactly when S = 1"),
            }
        }
    }
    Ok(())
}

impl<P: Field> DiscreteObservedDistribution<P> {
    pub fn new(scheme: Arc<CoarseningScheme>, atoms: Vec<(ObservedAtom, P)>) -> Result<Self> {
        check_mass(atoms.iter().map(|(_, p)| p))?;
        let mut map = BTreeMap::new();
        for (a, p) in atoms {
            check_observed_atom(&scheme, &a)?;
            if p > P::zero() {
                add(&mut map, a, p);
            }
        }
        Ok(DiscreteObservedDistribution { scheme, atoms: map })
    }

    pub fn scheme(&self) -> &Arc<CoarseningScheme> {
        &self.scheme
    }

    pub fn atoms(&self) -> &BTreeMap<ObservedAtom, P> {
        &self.atoms
    }

    /// `P[C = k, sigma_C = sigma]` and `P[C = k, sigma_C = sigma, S = 1]` per stratum.
    pub fn stratum_masses(&self) -> BTreeMap<StratumKey, (P, P)> {
        let mut out: BTreeMap<StratumKey, (P, P)> = BTreeMap::new();
        for (a, p) in &self.atoms {
            if let Level::Finite(k) = a.level {
                let slot = out.entry((k, a.sigma.clone())).or_insert_with(|| (P::zero(), P::zero()));
                slot.0 = slot.0.clone() + p.clone();
                if a.follow_up {
                    slot.1 = slot.1.clone() + p.clone();
                }
            }
        }
        out
    }

    /// `eta(k, sigma) = P[S = 1 | C = k, sigma_C = sigma]`.
    pub fn follow_up_probabilities(&self) -> BTreeMap<StratumKey, P> {
        self.stratum_masses()
            .into_iter()
            .map(|(key, (all, s1))| (key, s1 / all))
            .collect()
    }

    /// `lambda_k(sigma_bar | sigma) = P[sigma_bar | C = k, sigma, S = 1]` as a
    /// law over the support points of the stratum.
    pub fn fragment_law(&self, key: &StratumKey) -> Result<Vec<(usize, P)>> {
        let (k, sigma) = key;
        let level = Level::Finite(*k);
        let mut total = P::zero();
        let mut rows = Vec::new();
        for &i in self.scheme.stratum(*k, sigma) {
            let atom = ObservedAtom {
                level,
                sigma: sigma.clone(),
                follow_up: true,
                sigma_bar: Some(self.scheme.sigma_bar(level, i)?.to_vec()),
            };
            let p = self.atoms.get(&atom).cloned().unwrap_or_else(P::zero);
            total = total + p.clone();
            rows.push((i, p));
        }
        if total == P::zero() {
            return Err(Error::Positivity {
                stratum: format!("C={k}, sigma={sigma:?} has no S=1 mass"),
            });
        }
        Ok(rows.into_iter().map(|(i, p)| (i, p / total.clone())).collect())
    }
}

/// Drops the complement fragments of atoms with `S = 0` and aggregates.
pub fn marginalize_observed<P: Field>(complete: &DiscreteCompleteDistribution<P>) -> DiscreteObservedDistribution<P> {
    let scheme = complete.scheme();
    let mut atoms = BTreeMap::new();
    for (a, p) in complete.atoms() {
        let sigma = scheme.sigma(a.level, a.point).expect("validated level").to_vec();
        let bar = scheme.sigma_bar(a.level, a.point).expect("validated level").to_vec();
        let observed = ObservedAtom {
            level: a.level,
            sigma,
            follow_up: a.follow_up,
            sigma_bar: (a.follow_up || a.level == Level::Full).then_some(bar),
        };
        add(&mut atoms, observed, p.clone());
    }
    DiscreteObservedDistribution {
        scheme: scheme.clone(),
        atoms,
    }
}

/// Reconstructs the complete law as `p(C, sigma_C, S) p(sigma_bar_C | C, sigma_C, S = 1)`.
pub fn identify_complete<P: Field>(observed: &DiscreteObservedDistribution<P>) -> Result<DiscreteCompleteDistribution<P>> {
    let scheme = observed.scheme();
    let mut atoms = BTreeMap::new();
    // p(C, sigma_C, S) per finite-level stratum and S.
    let mut masses: BTreeMap<(StratumKey, bool), P> = BTreeMap::new();
    for (a, p) in observed.atoms() {
        match a.level {
            Level::Full => {
                let point = scheme.position(&a.sigma).expect("validated atom");
                let atom = CompleteAtom {
                    level: Level::Full,
                    point,
                    follow_up: false,
                };
                add(&mut atoms, atom, p.clone());
            }
            Level::Finite(k) => add(&mut masses, ((k, a.sigma.clone()), a.follow_up), p.clone()),
        }
    }
    let mut laws: BTreeMap<StratumKey, Vec<(usize, P)>> = BTreeMap::new();
    for ((key, follow_up), mass) in masses {
        if !laws.contains_key(&key) {
            let law = observed.fragment_law(&key)?;
            laws.insert(key.clone(), law);
        }
        for (point, lam) in &laws[&key] {
            if *lam > P::zero() {
                let atom = CompleteAtom {
                    level: Level::Finite(key.0),
                    point: *point,
                    follow_up,
                };
                add(&mut atoms, atom, mass.clone() * lam.clone());
            }
        }
    }
    Ok(DiscreteCompleteDistribution {
        scheme: scheme.clone(),
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

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

    fn q(n: u64, d: u64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn full_level_only_is_identity() {
        let atoms = (0..4)
            .map(|i| {
                (
                    CompleteAtom {
                        level: Level::Full,
                        point: i,
                        follow_up: false,
                    },
                    q(1, 4),
                )
            })
            .collect();
        let p = DiscreteCompleteDistribution::new(scheme(), atoms).unwrap();
        let o = marginalize_observed(&p);
        assert_eq!(o.atoms().len(), 4);
        assert_eq!(identify_complete(&o).unwrap(), p);
    }

    #[test]
    fn hand_enumerated_marginal() {
        let atom = |level, point, follow_up| CompleteAtom { level, point, follow_up };
        let p = DiscreteCompleteDistribution::new(
            scheme(),
            vec![
                (atom(Level::Finite(0), 0, false), q(1, 8)),
                (atom(Level::Finite(0), 1, false), q(1, 8)),
                (atom(Level::Finite(0), 0, true), q(1, 4)),
                (atom(Level::Finite(0), 1, true), q(1, 4)),
                (atom(Level::Full, 3, false), q(1, 4)),
            ],
        )
        .unwrap();
        let o = marginalize_observed(&p);
        let s0 = ObservedAtom {
            level: Level::Finite(0),
            sigma: vec![0],
            follow_up: false,
            sigma_bar: None,
        };
        assert_eq!(o.atoms()[&s0], q(1, 4));
        assert_eq!(o.atoms().len(), 4);
        assert_eq!(o.follow_up_probabilities()[&(0, vec![0])], q(2, 3));
        assert_eq!(identify_complete(&o).unwrap(), p);
    }

    #[test]
    fn missing_follow_up_mass_is_positivity_violation() {
        let atom = |level, point, follow_up| CompleteAtom { level, point, follow_up };
        let p = DiscreteCompleteDistribution::new(
            scheme(),
            vec![
                (atom(Level::Finite(0), 2, false), q(1, 2)),
                (atom(Level::Finite(0), 0, true), q(1, 2)),
            ],
        )
        .unwrap();
        match identify_complete(&marginalize_observed(&p)).unwrap_err() {
            Error::Positivity { stratum } => assert!(stratum.contains("C=0, sigma=[1]"), "{stratum}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mass_must_sum_to_one() {
        let a = CompleteAtom {
            level: Level::Full,
            point: 0,
            follow_up: false,
        };
        assert!(DiscreteCompleteDistribution::new(scheme(), vec![(a, q(1, 2))]).is_err());
    }
}
