use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;

use crate::coarsening::{
    CompleteAtom, CoarseningScheme, DiscreteCompleteDistribution, Level, LevelTable, MissingOutcomeLayout, ObservedAtom,
};
use crate::data::{Arm, ObservedRecord};
use crate::error::{Error, Result};
use crate::estimators::NuisanceValues;
use crate::glm::Nuisance;
use crate::scalar::Field;

/// Outcome law within one `(L, A)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeCell<P> {
    /// `P[R = 1 | L, A]`.
    pub gamma: P,
    /// `P[S = 1 | L, A, R = 0]`.
    pub eta: P,
    /// Law of `Y` given `R = 1`.
    pub initial: Vec<(i64, P)>,
    /// Law of `Y` given `R = 0`, shared by both follow-up outcomes.
    pub follow_up: Vec<(i64, P)>,
}

impl<P: Field> OutcomeCell<P> {
    fn mean(dist: &[(i64, P)]) -> P {
        dist.iter()
            .fold(P::zero(), |acc, (y, p)| acc + p.clone() * P::from_i64(*y).expect("integer representable"))
    }

    pub fn mu_initial(&self) -> P {
        Self::mean(&self.initial)
    }

    pub fn mu_follow_up(&self) -> P {
        Self::mean(&self.follow_up)
    }

    /// `E[Y | L, A]`.
    pub fn mu_composite(&self) -> P {
        self.gamma.clone() * self.mu_initial() + (P::one() - self.gamma.clone()) * self.mu_follow_up()
    }

    /// `P[R + S = 1 | L, A]`.
    pub fn observed(&self) -> P {
        self.gamma.clone() + (P::one() - self.gamma.clone()) * self.eta.clone()
    }

    /// `E[Y | L, A, R + S = 1]`.
    pub fn mu_combined(&self) -> P {
        let miss = (P::one() - self.gamma.clone()) * self.eta.clone();
        (self.gamma.clone() * self.mu_initial() + miss * self.mu_follow_up()) / self.observed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateStratum<P> {
    pub covariates: Vec<i64>,
    pub weight: P,
    /// `P[A = 1 | L]`.
    pub treated: P,
    pub arms: [OutcomeCell<P>; 2],
}

impl<P: Field> CovariateStratum<P> {
    pub fn propensity(&self, arm: Arm) -> P {
        match arm {
            Arm::Treated => self.treated.clone(),
            Arm::Control => P::one() - self.treated.clone(),
        }
    }
}

/// Discrete law of `(L, A, R, S, Y)` for a double-sampled missing-outcome
/// study in which follow-up is randomised given `(L, A, R = 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingOutcomeLaw<P> {
    pub covariate_names: Vec<String>,
    pub strata: Vec<CovariateStratum<P>>,
}

fn to_f64<P: Field>(p: &P) -> f64 {
    p.to_f64().unwrap_or(f64::NAN)
}

fn random_weights<R: Rng + ?Sized>(rng: &mut R, n: usize, max: u64) -> Vec<u64> {
    loop {
        let w: Vec<u64> = (0..n).map(|_| rng.random_range(0..=max)).collect();
        if w.iter().any(|&x| x > 0) {
            return w;
        }
    }
}

fn normalised<P: Field>(w: &[u64]) -> Vec<P> {
    let total: u64 = w.iter().sum();
    w.iter().map(|&x| P::from_ratio(x, total)).collect()
}

impl<P: Field> MissingOutcomeLaw<P> {
    pub fn validate(&self) -> Result<()> {
        let unit = |p: &P, what: &str| {
            if *p < P::zero() || *p > P::one() {
                Err(Error::invalid(format!("{what} {p:?} is not a probability")))
            } else {
                Ok(())
            }
        };
        let sums_to_one = |it: &mut dyn Iterator<Item = P>, what: &str| {
            let total = it.fold(P::zero(), |a, b| a + b);
            if total.abs_diff(&P::one()) > P::tolerance() {
                Err(Error::invalid(format!("{what} sums to {total:?}")))
            } else {
                Ok(())
            }
        };
        sums_to_one(&mut self.strata.iter().map(|s| s.weight.clone()), "covariate law")?;
        for s in &self.strata {
            if s.covariates.len() != self.covariate_names.len() {
                return Err(Error::invalid("stratum covariates do not match the names"));
            }
            unit(&s.treated, "treatment probability")?;
            for c in &s.arms {
                unit(&c.gamma, "gamma")?;
                unit(&c.eta, "eta")?;
                if c.gamma > P::zero() {
                    sums_to_one(&mut c.initial.iter().map(|(_, p)| p.clone()), "initial outcome law")?;
                }
                if c.gamma < P::one() {
                    sums_to_one(&mut c.follow_up.iter().map(|(_, p)| p.clone()), "follow-up outcome law")?;
                }
            }
        }
        Ok(())
    }

    /// `tau_a = E_L[mu_a(L)]`.
    pub fn tau(&self, arm: Arm) -> P {
        self.strata
            .iter()
            .fold(P::zero(), |acc, s| acc + s.weight.clone() * s.arms[arm.index()].mu_composite())
    }

    /// `tau*_a = E_L[mu_{a,MAR}(L)]`.
    pub fn tau_mar(&self, arm: Arm) -> P {
        self.strata
            .iter()
            .fold(P::zero(), |acc, s| acc + s.weight.clone() * s.arms[arm.index()].mu_combined())
    }

    pub fn values(&self, stratum: usize, arm: Arm) -> NuisanceValues<f64> {
        let s = &self.strata[stratum];
        let c = &s.arms[arm.index()];
        NuisanceValues {
            pi: to_f64(&s.propensity(arm)),
            gamma: to_f64(&c.gamma),
            eta: to_f64(&c.eta),
            mu_initial: to_f64(&c.mu_initial()),
            mu_follow_up: to_f64(&c.mu_follow_up()),
            mu_combined: to_f64(&c.mu_combined()),
        }
    }

    /// Exact nuisances as a lookup table.
    pub fn nuisance(&self) -> TableNuisance {
        TableNuisance {
            cells: self
                .strata
                .iter()
                .enumerate()
                .map(|(i, s)| (s.covariates.clone(), [self.values(i, Arm::Control), self.values(i, Arm::Treated)]))
                .collect(),
        }
    }

    /// Every observable record with its probability.
    pub fn observed_records(&self) -> Vec<(ObservedRecord<f64>, P)> {
        let mut out = Vec::new();
        for s in &self.strata {
            let l: Vec<f64> = s.covariates.iter().map(|&x| x as f64).collect();
            for arm in Arm::BOTH {
                let c = &s.arms[arm.index()];
                let base = s.weight.clone() * s.propensity(arm);
                let record = |initial, follow_up, y: Option<i64>| ObservedRecord {
                    covariates: l.clone(),
                    treatment: arm,
                    initial,
                    follow_up,
                    outcome: y.map(|y| y as f64),
                };
                for (y, p) in &c.initial {
                    out.push((record(true, false, Some(*y)), base.clone() * c.gamma.clone() * p.clone()));
                }
                let miss = base.clone() * (P::one() - c.gamma.clone());
                for (y, p) in &c.follow_up {
                    out.push((record(false, true, Some(*y)), miss.clone() * c.eta.clone() * p.clone()));
                }
                out.push((record(false, false, None), miss * (P::one() - c.eta.clone())));
            }
        }
        out.retain(|(_, p)| *p > P::zero());
        out
    }

    /// The same law as a coarsened-data law: `X = (L, A, Y)`, `C = inf` iff
    /// `R = 1`, and level 0 observes `(L, A)`.
    pub fn to_coarsened(&self) -> Result<(DiscreteCompleteDistribution<P>, MissingOutcomeLayout)> {
        let mut points = BTreeSet::new();
        for s in &self.strata {
            for arm in Arm::BOTH {
                let c = &s.arms[arm.index()];
                for (y, _) in c.initial.iter().chain(&c.follow_up) {
                    let mut x = s.covariates.clone();
                    x.extend([arm.index() as i64, *y]);
                    points.insert(x);
                }
            }
        }
        let support: Vec<Vec<i64>> = points.into_iter().collect();
        let width = self.covariate_names.len() + 2;
        let mut coordinates = self.covariate_names.clone();
        coordinates.extend(["A".to_string(), "Y".to_string()]);
        let scheme = Arc::new(CoarseningScheme::from_projections(
            coordinates,
            support,
            &[(0, (0..width - 1).collect())],
        )?);
        let mut atoms = Vec::new();
        for s in &self.strata {
            for arm in Arm::BOTH {
                let c = &s.arms[arm.index()];
                let base = s.weight.clone() * s.propensity(arm);
                let point = |y: i64| {
                    let mut x = s.covariates.clone();
                    x.extend([arm.index() as i64, y]);
                    scheme.position(&x).expect("point enumerated above")
                };
                for (y, p) in &c.initial {
                    let atom = CompleteAtom {
                        level: Level::Full,
                        point: point(*y),
                        follow_up: false,
                    };
                    atoms.push((atom, base.clone() * c.gamma.clone() * p.clone()));
                }
                let miss = base.clone() * (P::one() - c.gamma.clone());
                for (y, p) in &c.follow_up {
                    for (follow_up, q) in [(true, c.eta.clone()), (false, P::one() - c.eta.clone())] {
                        let atom = CompleteAtom {
                            level: Level::Finite(0),
                            point: point(*y),
                            follow_up,
                        };
                        atoms.push((atom, miss.clone() * q * p.clone()));
                    }
                }
            }
        }
        let layout = MissingOutcomeLayout {
            treatment: "A".into(),
            outcome: "Y".into(),
        };
        Ok((DiscreteCompleteDistribution::new(scheme, atoms)?, layout))
    }

    /// Reads the missing-outcome structure off a coarsened law. The
    /// follow-up outcome law is taken among `S = 1`, so this is the
    /// identified law.
    pub fn from_coarsened(complete: &DiscreteCompleteDistribution<P>, layout: &MissingOutcomeLayout) -> Result<Self> {
        let coords = MissingOutcomeCoordinates::new(complete.scheme(), layout)?;
        struct Masses<P> {
            initial: BTreeMap<i64, P>,
            lost: P,
            followed: BTreeMap<i64, P>,
        }
        let zero_masses = || {
            [0, 1].map(|_| Masses {
                initial: BTreeMap::new(),
                lost: P::zero(),
                followed: BTreeMap::new(),
            })
        };
        let bump = |m: &mut BTreeMap<i64, P>, y: i64, p: &P| {
            let slot = m.entry(y).or_insert_with(P::zero);
            *slot = slot.clone() + p.clone();
        };
        let mut cells: BTreeMap<Vec<i64>, [Masses<P>; 2]> = BTreeMap::new();
        for (a, p) in complete.atoms() {
            let (l, arm, y) = coords.split(complete.scheme().point(a.point))?;
            let m = &mut cells.entry(l).or_insert_with(zero_masses)[arm.index()];
            match (a.level, a.follow_up) {
                (Level::Full, _) => bump(&mut m.initial, y, p),
                (Level::Finite(_), true) => bump(&mut m.followed, y, p),
                (Level::Finite(_), false) => m.lost = m.lost.clone() + p.clone(),
            }
        }
        let total = |m: &BTreeMap<i64, P>| m.values().fold(P::zero(), |a, b| a + b.clone());
        let conditional = |m: &BTreeMap<i64, P>, t: &P| m.iter().map(|(y, p)| (*y, p.clone() / t.clone())).collect();
        let mut strata = Vec::with_capacity(cells.len());
        for (l, masses) in cells {
            let arm_mass: Vec<P> = masses
                .iter()
                .map(|m| total(&m.initial) + total(&m.followed) + m.lost.clone())
                .collect();
            if arm_mass.iter().any(|m| *m == P::zero()) {
                return Err(Error::Positivity {
                    stratum: format!("L={l:?} has a treatment arm with no mass"),
                });
            }
            let weight = arm_mass[0].clone() + arm_mass[1].clone();
            let treated = arm_mass[1].clone() / weight.clone();
            let cell = |a: usize| -> Result<OutcomeCell<P>> {
                let m = &masses[a];
                let (r1, s1) = (total(&m.initial), total(&m.followed));
                let r0 = s1.clone() + m.lost.clone();
                let gamma = r1.clone() / arm_mass[a].clone();
                let eta = if r0 == P::zero() {
                    P::one()
                } else if s1 == P::zero() {
                    return Err(Error::Positivity {
                        stratum: format!("L={l:?}, A={a}, R=0 has no follow-up mass"),
                    });
                } else {
                    s1.clone() / r0
                };
                Ok(OutcomeCell {
                    gamma,
                    eta,
                    initial: if r1 == P::zero() { vec![] } else { conditional(&m.initial, &r1) },
                    follow_up: if s1 == P::zero() { vec![] } else { conditional(&m.followed, &s1) },
                })
            };
            strata.push(CovariateStratum {
                covariates: l.clone(),
                weight,
                treated,
                arms: [cell(0)?, cell(1)?],
            });
        }
        Ok(MissingOutcomeLaw {
            covariate_names: coords.covariate_names,
            strata,
        })
    }

    /// A random law with two binary covariates and outcomes on `{-2..=3}`.
    /// Every probability is a ratio of small integers, so the law is exact
    /// for rational `P`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let ys: Vec<i64> = (-2..=3).collect();
        let covs = [[0i64, 0], [0, 1], [1, 0], [1, 1]];
        let w: Vec<u64> = (0..covs.len()).map(|_| rng.random_range(1..=6)).collect();
        let weights: Vec<P> = normalised(&w);
        let ratio = |rng: &mut R, lo: u64, hi: u64, den: u64| P::from_ratio(rng.random_range(lo..=hi), den);
        let dist = |rng: &mut R| -> Vec<(i64, P)> {
            let w = random_weights(rng, ys.len(), 4);
            ys.iter().copied().zip(normalised::<P>(&w)).filter(|(_, p)| *p > P::zero()).collect()
        };
        let strata = covs
            .iter()
            .zip(weights)
            .map(|(l, weight)| {
                let treated = ratio(rng, 1, 9, 10);
                let cell = |rng: &mut R| OutcomeCell {
                    gamma: ratio(rng, 1, 7, 8),
                    eta: ratio(rng, 1, 5, 5),
                    initial: dist(rng),
                    follow_up: dist(rng),
                };
                let arms = [cell(rng), cell(rng)];
                CovariateStratum {
                    covariates: l.to_vec(),
                    weight,
                    treated,
                    arms,
                }
            })
            .collect();
        MissingOutcomeLaw {
            covariate_names: vec!["L1".into(), "L2".into()],
            strata,
        }
    }
}

/// Positions of `L`, `A` and `Y` within the full data `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingOutcomeCoordinates {
    pub covariates: Vec<usize>,
    pub covariate_names: Vec<String>,
    pub treatment: usize,
    pub outcome: usize,
}

impl MissingOutcomeCoordinates {
    /// Resolves the layout and checks that the scheme has the single finite
    /// level 0 with `sigma_0(X) = (L, A)` and `sigma_bar_0(X) = Y`.
    pub fn new(scheme: &CoarseningScheme, layout: &MissingOutcomeLayout) -> Result<Self> {
        let names = scheme.coordinates();
        let find = |name: &str| {
            names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::invalid(format!("coordinate {name:?} not found")))
        };
        let (treatment, outcome) = (find(&layout.treatment)?, find(&layout.outcome)?);
        if treatment == outcome {
            return Err(Error::invalid("treatment and outcome must be distinct coordinates"));
        }
        let covariates: Vec<usize> = (0..names.len()).filter(|&j| j != treatment && j != outcome).collect();
        let keep: Vec<usize> = (0..names.len()).filter(|&j| j != outcome).collect();
        let expected = LevelTable {
            level: 0,
            sigma: scheme.support().iter().map(|x| keep.iter().map(|&j| x[j]).collect()).collect(),
            sigma_bar: scheme.support().iter().map(|x| vec![x[outcome]]).collect(),
        };
        if scheme.tables() != vec![expected] {
            return Err(Error::invalid(
                "a missing-outcome law needs exactly one finite level, observing every coordinate but the outcome",
            ));
        }
        if scheme.support().iter().any(|x| !(0..=1).contains(&x[treatment])) {
            return Err(Error::invalid("treatment coordinate must be 0 or 1"));
        }
        Ok(MissingOutcomeCoordinates {
            covariate_names: covariates.iter().map(|&j| names[j].clone()).collect(),
            covariates,
            treatment,
            outcome,
        })
    }

    /// `(L, A, Y)` of a support point.
    pub fn split(&self, x: &[i64]) -> Result<(Vec<i64>, Arm, i64)> {
        let l = self.covariates.iter().map(|&j| x[j]).collect();
        Ok((l, Arm::from_bit(x[self.treatment] == 1), x[self.outcome]))
    }

    /// The missing-outcome record represented by an observed atom.
    pub fn record(&self, atom: &ObservedAtom) -> Result<ObservedRecord<f64>> {
        let (x, initial) = match atom.level {
            Level::Full => (atom.sigma.clone(), true),
            Level::Finite(_) => {
                // sigma_0 lists every coordinate but the outcome, in order
                let mut x = atom.sigma.clone();
                x.insert(self.outcome, atom.sigma_bar.as_ref().map_or(0, |b| b[0]));
                (x, false)
            }
        };
        let (l, arm, y) = self.split(&x)?;
        ObservedRecord::new(
            l.into_iter().map(|v| v as f64).collect(),
            arm,
            initial,
            atom.follow_up,
            (initial || atom.follow_up).then_some(y as f64),
        )
    }
}

/// Nuisances read from a table keyed by integer covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TableNuisance {
    pub cells: HashMap<Vec<i64>, [NuisanceValues<f64>; 2]>,
}

impl TableNuisance {
    fn cell(&self, arm: Arm, l: &[f64]) -> Result<&NuisanceValues<f64>> {
        let key: Vec<i64> = l.iter().map(|v| v.round() as i64).collect();
        self.cells
            .get(&key)
            .map(|c| &c[arm.index()])
            .ok_or_else(|| Error::invalid(format!("no nuisance values at L={key:?}")))
    }

    /// Applies `f` to every cell, e.g. to perturb some nuisances.
    pub fn map(&self, f: impl Fn(&[i64], Arm, NuisanceValues<f64>) -> NuisanceValues<f64>) -> TableNuisance {
        TableNuisance {
            cells: self
                .cells
                .iter()
                .map(|(l, c)| (l.clone(), [f(l, Arm::Control, c[0]), f(l, Arm::Treated, c[1])]))
                .collect(),
        }
    }
}

impl Nuisance<f64> for TableNuisance {
    fn propensity(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.pi)
    }

    fn observation(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.gamma)
    }

    fn follow_up(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.eta)
    }

    fn outcome_initial(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.mu_initial)
    }

    fn outcome_follow_up(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.mu_follow_up)
    }

    fn outcome_combined(&self, arm: Arm, l: &[f64]) -> Result<f64> {
        Ok(self.cell(arm, l)?.mu_combined)
    }
}
