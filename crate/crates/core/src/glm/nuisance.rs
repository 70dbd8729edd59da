//! The bundle of nuisance regressions needed by the influence-function
//! estimators, fitted on one training subset.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::design::EvalPoint;
use super::model::FittedModel;
use super::{ModelSpec, Stratify, Target, Term};

/// Nuisance functions evaluated at covariates `l` for treatment level `arm`.
pub trait Nuisance<T: Real>: Sync {
    /// `pi_a(L)`.
    fn propensity(&self, arm: Arm, l: &[T]) -> Result<T>;
    /// `gamma_a(L)`.
    fn observation(&self, arm: Arm, l: &[T]) -> Result<T>;
    /// `eta_{a,0}(L)`.
    fn follow_up(&self, arm: Arm, l: &[T]) -> Result<T>;
    /// `mu_{a,R}(L)`.
    fn outcome_initial(&self, arm: Arm, l: &[T]) -> Result<T>;
    /// `mu_{a,S}(L)`.
    fn outcome_follow_up(&self, arm: Arm, l: &[T]) -> Result<T>;
    /// `mu_{a,MAR}(L)`.
    fn outcome_combined(&self, arm: Arm, l: &[T]) -> Result<T>;
}

/// A logistic selection model with coefficients fixed in advance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownModel {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    /// Follow-up probabilities known by design.
    Known(KnownModel),
    Estimated(ModelSpec),
}

/// Model specification for every nuisance target. Targets left out are not
/// fitted; estimators that need them fail with [`Error::MissingNuisance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSet {
    pub propensity: ModelSpec,
    #[serde(default)]
    pub observation: Option<ModelSpec>,
    #[serde(default)]
    pub follow_up: Option<EtaSource>,
    #[serde(default)]
    pub outcome_initial: Option<ModelSpec>,
    #[serde(default)]
    pub outcome_follow_up: Option<ModelSpec>,
    #[serde(default)]
    pub outcome_combined: Option<ModelSpec>,
    #[serde(default = "default_clip")]
    pub clip: f64,
}

fn default_clip() -> f64 {
    0.01
}

impl SpecSet {
    /// Keeps only the models that use initially observed data `(L, A, R, RY)`.
    pub fn initial_only(&self) -> SpecSet {
        SpecSet {
            propensity: self.propensity.clone(),
            observation: self.observation.clone(),
            follow_up: None,
            outcome_initial: self.outcome_initial.clone(),
            outcome_follow_up: None,
            outcome_combined: None,
            clip: self.clip,
        }
    }

    fn check_targets(&self) -> Result<()> {
        let check = |spec: &Option<ModelSpec>, target: Target| match spec {
            Some(s) if s.target != target => Err(Error::invalid(format!(
                "model supplied for {target} declares target {}",
                s.target
            ))),
            _ => Ok(()),
        };
        check(&Some(self.propensity.clone()), Target::Propensity)?;
        check(&self.observation, Target::Observation)?;
        check(&self.outcome_initial, Target::OutcomeInitial)?;
        check(&self.outcome_follow_up, Target::OutcomeFollowUp)?;
        check(&self.outcome_combined, Target::OutcomeCombined)?;
        if let Some(EtaSource::Estimated(s)) = &self.follow_up {
            check(&Some(s.clone()), Target::FollowUp)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StratifiedFit<T> {
    Pooled(FittedModel<T>),
    ByArm([FittedModel<T>; 2]),
}

impl<T: Real> StratifiedFit<T> {
    fn fit(spec: &ModelSpec, d: &Dataset<T>, training: &[usize], clip: T) -> Result<Self> {
        let one = |arm| {
            let m = FittedModel::fit(spec, d, training, arm)?;
            if !m.converged() {
                return Err(Error::NotConverged {
                    target: super::design::target_label(spec.target, arm),
                    iterations: m.iterations(),
                    separation: true,
                });
            }
            m.with_clip(clip)
        };
        Ok(match spec.stratify {
            Stratify::Pooled => StratifiedFit::Pooled(one(None)?),
            Stratify::ByArm => StratifiedFit::ByArm([one(Some(Arm::Control))?, one(Some(Arm::Treated))?]),
        })
    }

    pub fn model(&self, arm: Arm) -> &FittedModel<T> {
        match self {
            StratifiedFit::Pooled(m) => m,
            StratifiedFit::ByArm(ms) => &ms[arm.index()],
        }
    }

    pub fn predict(&self, arm: Arm, l: &[T]) -> Result<T> {
        let m = self.model(arm);
        m.predict(&EvalPoint {
            covariates: l,
            treatment: arm,
            initial: m.spec().target.evaluation_initial(),
        })
    }
}

/// Fitted nuisance regressions for both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit<T> {
    clip: T,
    propensity: FittedModel<T>,
    swap_arms: bool,
    observation: Option<StratifiedFit<T>>,
    follow_up: Option<StratifiedFit<T>>,
    outcome_initial: Option<StratifiedFit<T>>,
    outcome_follow_up: Option<StratifiedFit<T>>,
    outcome_combined: Option<StratifiedFit<T>>,
}

impl<T: Real> NuisanceFit<T> {
    pub fn clip(&self) -> T {
        self.clip
    }

    pub fn propensity_model(&self) -> &FittedModel<T> {
        &self.propensity
    }

    pub fn stratified(&self, target: Target) -> Option<&StratifiedFit<T>> {
        match target {
            Target::Propensity => None,
            Target::Observation => self.observation.as_ref(),
            Target::FollowUp => self.follow_up.as_ref(),
            Target::OutcomeInitial => self.outcome_initial.as_ref(),
            Target::OutcomeFollowUp => self.outcome_follow_up.as_ref(),
            Target::OutcomeCombined => self.outcome_combined.as_ref(),
        }
    }

    fn eval(&self, target: Target, arm: Arm, l: &[T]) -> Result<T> {
        self.stratified(target)
            .ok_or_else(|| Error::MissingNuisance(target.to_string()))?
            .predict(arm, l)
    }
}

impl<T: Real> Nuisance<T> for NuisanceFit<T> {
    fn propensity(&self, arm: Arm, l: &[T]) -> Result<T> {
        let treated = self.propensity.predict(&EvalPoint::new(l, Arm::Treated))?;
        let arm = if self.swap_arms { arm.other() } else { arm };
        Ok(match arm {
            Arm::Treated => treated,
            Arm::Control => T::one() - treated,
        })
    }

    fn observation(&self, arm: Arm, l: &[T]) -> Result<T> {
        self.eval(Target::Observation, arm, l)
    }

    fn follow_up(&self, arm: Arm, l: &[T]) -> Result<T> {
        self.eval(Target::FollowUp, arm, l)
    }

    fn outcome_initial(&self, arm: Arm, l: &[T]) -> Result<T> {
        self.eval(Target::OutcomeInitial, arm, l)
    }

    fn outcome_follow_up(&self, arm: Arm, l: &[T]) -> Result<T> {
        self.eval(Target::OutcomeFollowUp, arm, l)
    }

    fn outcome_combined(&self, arm: Arm, l: &[T]) -> Result<T> {
        self.eval(Target::OutcomeCombined, arm, l)
    }
}

/// Fits every model in `specs` on the `training` records of `d`.
pub fn fit_nuisance_bundle<T: Real>(d: &Dataset<T>, training: &[usize], specs: &SpecSet) -> Result<NuisanceFit<T>> {
    if training.is_empty() {
        return Err(Error::invalid("no training records"));
    }
    specs.check_targets()?;
    let clip = T::lit(specs.clip);
    let optional = |spec: &Option<ModelSpec>| {
        spec.as_ref()
            .map(|s| StratifiedFit::fit(s, d, training, clip))
            .transpose()
    };

    let propensity = StratifiedFit::fit(&specs.propensity, d, training, clip)?;
    let StratifiedFit::Pooled(propensity) = propensity else {
        return Err(Error::invalid("the propensity model cannot be fitted within arms"));
    };

    let follow_up = match &specs.follow_up {
        None => None,
        Some(EtaSource::Estimated(spec)) => Some(StratifiedFit::fit(spec, d, training, clip)?),
        Some(EtaSource::Known(known)) => {
            let spec = ModelSpec::new(Target::FollowUp, known.terms.clone(), Stratify::Pooled);
            let coefficients = known.coefficients.iter().map(|&c| T::lit(c)).collect();
            let model = FittedModel::from_coefficients(&spec, d.covariate_names(), coefficients)?.with_clip(clip)?;
            Some(StratifiedFit::Pooled(model))
        }
    };

    Ok(NuisanceFit {
        clip,
        propensity,
        swap_arms: specs.propensity.swap_arms,
        observation: optional(&specs.observation)?,
        follow_up,
        outcome_initial: optional(&specs.outcome_initial)?,
        outcome_follow_up: optional(&specs.outcome_follow_up)?,
        outcome_combined: optional(&specs.outcome_combined)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservedRecord;
    use crate::glm::{misspecify, Misspecification};

    fn rec(l: f64, a: bool, r: bool, s: bool, y: Option<f64>) -> ObservedRecord<f64> {
        ObservedRecord {
            covariates: vec![l],
            treatment: Arm::from_bit(a),
            initial: r,
            follow_up: s,
            outcome: y,
        }
    }

    /// P[A=1 | Lg=1] = 0.34 exactly, P[A=1 | Lg=0] = 0.2.
    fn propensity_data() -> Dataset<f64> {
        let mut records = Vec::new();
        for i in 0..50 {
            records.push(rec(1.0, i < 17, true, false, Some(0.0)));
        }
        for i in 0..50 {
            records.push(rec(0.0, i < 10, true, false, Some(0.0)));
        }
        Dataset::new(vec!["Lg".into()], records).unwrap()
    }

    fn pi_only(spec: ModelSpec) -> SpecSet {
        SpecSet {
            propensity: spec,
            observation: None,
            follow_up: None,
            outcome_initial: None,
            outcome_follow_up: None,
            outcome_combined: None,
            clip: 0.01,
        }
    }

    #[test]
    fn flipped_propensity_reports_the_complement() {
        let d = propensity_data();
        let all: Vec<usize> = (0..d.len()).collect();
        let spec = ModelSpec::parse(Target::Propensity, &["1", "Lg"], Stratify::Pooled).unwrap();
        let fit = fit_nuisance_bundle(&d, &all, &pi_only(spec.clone())).unwrap();
        let p1 = fit.propensity(Arm::Treated, &[1.0]).unwrap();
        assert!((p1 - 0.34).abs() < 1e-9);
        assert!((fit.propensity(Arm::Control, &[1.0]).unwrap() + p1 - 1.0).abs() < 1e-15);

        let flipped = misspecify(&spec, Misspecification::FlipTreatment).unwrap();
        let fit = fit_nuisance_bundle(&d, &all, &pi_only(flipped)).unwrap();
        assert!((fit.propensity(Arm::Treated, &[1.0]).unwrap() - 0.66).abs() < 1e-9);
    }

    #[test]
    fn missing_models_are_reported() {
        let d = propensity_data();
        let all: Vec<usize> = (0..d.len()).collect();
        let spec = ModelSpec::parse(Target::Propensity, &["1", "Lg"], Stratify::Pooled).unwrap();
        let fit = fit_nuisance_bundle(&d, &all, &pi_only(spec)).unwrap();
        assert!(matches!(fit.outcome_follow_up(Arm::Treated, &[0.0]), Err(Error::MissingNuisance(_))));
    }

    #[test]
    fn empty_follow_up_stratum_names_target() {
        let d = Dataset::new(
            vec!["Lg".into()],
            vec![
                rec(0.0, true, true, false, Some(1.0)),
                rec(0.0, false, false, true, Some(1.0)),
                rec(1.0, true, false, false, None),
            ],
        )
        .unwrap();
        let mut specs = pi_only(ModelSpec::parse(Target::Propensity, &["1"], Stratify::Pooled).unwrap());
        specs.outcome_follow_up = Some(ModelSpec::parse(Target::OutcomeFollowUp, &["1"], Stratify::ByArm).unwrap());
        match fit_nuisance_bundle(&d, &[0, 1, 2], &specs).unwrap_err() {
            Error::FitImpossible { target, .. } => assert_eq!(target, "mu_s[A=1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn known_eta_is_used_verbatim() {
        let d = propensity_data();
        let all: Vec<usize> = (0..d.len()).collect();
        let mut specs = pi_only(ModelSpec::parse(Target::Propensity, &["1"], Stratify::Pooled).unwrap());
        specs.follow_up = Some(EtaSource::Known(KnownModel {
            terms: crate::glm::parse_terms(&["1", "Lg", "A", "Lg:A"]).unwrap(),
            coefficients: vec![-2.2, 0.4, 0.3, 0.25],
        }));
        let fit = fit_nuisance_bundle(&d, &all, &specs).unwrap();
        let eta = fit.follow_up(Arm::Treated, &[1.0]).unwrap();
        assert!((eta - crate::scalar::expit(-2.2 + 0.4 + 0.3 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn mismatched_target_rejected() {
        let d = propensity_data();
        let mut specs = pi_only(ModelSpec::parse(Target::Propensity, &["1"], Stratify::Pooled).unwrap());
        specs.outcome_initial = Some(ModelSpec::parse(Target::OutcomeFollowUp, &["1"], Stratify::ByArm).unwrap());
        assert!(fit_nuisance_bundle(&d, &[0, 1], &specs).is_err());
    }
}
