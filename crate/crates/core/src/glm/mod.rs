//! Parametric nuisance models: logistic and Gaussian-linear regressions over
//! design terms built from covariates, treatment and their interactions.

mod design;
mod fit;
pub mod linalg;
mod model;
mod nuisance;

use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{build_design, Design, EvalPoint};
pub use fit::{fit_linear, fit_logistic, IrlsOptions, RegressionFit};
pub use model::FittedModel;
pub use nuisance::{
    fit_nuisance_bundle, EtaSource, KnownModel, Nuisance, NuisanceFit, SpecSet, StratifiedFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Linear,
}

/// Which nuisance function a model estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    /// `pi_a(L) = P[A = a | L]`.
    #[serde(rename = "pi")]
    Propensity,
    /// `gamma_a(L) = P[R = 1 | L, A = a]`.
    #[serde(rename = "gamma")]
    Observation,
    /// `eta_{a,0}(L) = P[S = 1 | L, A = a, R = 0]`.
    #[serde(rename = "eta")]
    FollowUp,
    /// `mu_{a,R}(L) = E[Y | L, A = a, R = 1]`.
    #[serde(rename = "mu_r")]
    OutcomeInitial,
    /// `mu_{a,S}(L) = E[Y | L, A = a, S = 1]`.
    #[serde(rename = "mu_s")]
    OutcomeFollowUp,
    /// `mu_{a,MAR}(L) = E[Y | L, A = a, R + S = 1]`.
    #[serde(rename = "mu_mar")]
    OutcomeCombined,
}

impl Target {
    pub fn family(self) -> Family {
        match self {
            Target::Propensity | Target::Observation | Target::FollowUp => Family::Logistic,
            _ => Family::Linear,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Propensity => "pi",
            Target::Observation => "gamma",
            Target::FollowUp => "eta",
            Target::OutcomeInitial => "mu_r",
            Target::OutcomeFollowUp => "mu_s",
            Target::OutcomeCombined => "mu_mar",
        }
    }

    /// Records entering the fit, before any per-arm restriction.
    pub fn stratum(self) -> &'static str {
        match self {
            Target::Propensity | Target::Observation => "all",
            Target::FollowUp => "R=0",
            Target::OutcomeInitial => "R=1",
            Target::OutcomeFollowUp => "S=1",
            Target::OutcomeCombined => "R+S=1",
        }
    }

    /// Value of the `R` term when the fitted model is evaluated as this nuisance.
    pub(crate) fn evaluation_initial(self) -> bool {
        matches!(self, Target::OutcomeInitial)
    }
}

impl Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One column of a design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Intercept,
    /// Main effect of the named covariate.
    Main(String),
    Treatment,
    /// Covariate-by-treatment interaction.
    Interaction(String),
    /// Main effect of the initial-observation indicator `R`.
    Initial,
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty design term"));
        }
        Ok(match s {
            "1" => Term::Intercept,
            "A" => Term::Treatment,
            "R" => Term::Initial,
            _ => match s.split_once(':') {
                Some((l, "A")) | Some(("A", l)) if !l.is_empty() && l != "A" => {
                    Term::Interaction(l.to_string())
                }
                Some(_) => return Err(Error::invalid(format!("unsupported interaction {s:?}"))),
                None => Term::Main(s.to_string()),
            },
        })
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

impl Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Intercept => f.write_str("1"),
            Term::Main(l) => f.write_str(l),
            Term::Treatment => f.write_str("A"),
            Term::Interaction(l) => write!(f, "{l}:A"),
            Term::Initial => f.write_str("R"),
        }
    }
}

pub fn parse_terms<S: AsRef<str>>(names: &[S]) -> Result<Vec<Term>> {
    names.iter().map(|s| s.as_ref().parse()).collect()
}

/// Whether one model is fitted on all treatment levels or one per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    #[default]
    Pooled,
    ByArm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub target: Target,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub stratify: Stratify,
    /// Evaluate `pi_a` as the fitted probability of the other arm.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub swap_arms: bool,
}

impl ModelSpec {
    pub fn new(target: Target, terms: Vec<Term>, stratify: Stratify) -> Self {
        ModelSpec {
            target,
            terms,
            stratify,
            swap_arms: false,
        }
    }

    pub fn parse<S: AsRef<str>>(target: Target, terms: &[S], stratify: Stratify) -> Result<Self> {
        Ok(ModelSpec::new(target, parse_terms(terms)?, stratify))
    }

    pub fn family(&self) -> Family {
        self.target.family()
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid(format!("model for {} has no terms", self.target)));
        }
        if self.swap_arms && self.target != Target::Propensity {
            return Err(Error::invalid("arm swapping only applies to the propensity model"));
        }
        if self.target == Target::Propensity {
            if self.stratify == Stratify::ByArm {
                return Err(Error::invalid("the propensity model cannot be fitted within arms"));
            }
            if self
                .terms
                .iter()
                .any(|t| matches!(t, Term::Treatment | Term::Interaction(_) | Term::Initial))
            {
                return Err(Error::invalid("the propensity model may only use covariates"));
            }
        }
        if self.stratify == Stratify::ByArm
            && self
                .terms
                .iter()
                .any(|t| matches!(t, Term::Treatment | Term::Interaction(_)))
        {
            return Err(Error::invalid(format!(
                "model for {} is fitted within arms and cannot use treatment terms",
                self.target
            )));
        }
        Ok(())
    }
}

/// Deliberate misspecifications used in robustness experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Misspecification {
    /// Drop the covariate main effects of an outcome regression.
    DropLMain,
    /// Drop treatment and treatment interactions from the missingness model.
    DropAAndInteraction,
    /// Evaluate `pi_a` as the fitted `P[A = 1 - a | L]`.
    FlipTreatment,
}

pub fn misspecify(spec: &ModelSpec, mode: Misspecification) -> Result<ModelSpec> {
    let mut out = spec.clone();
    match (mode, spec.target) {
        (
            Misspecification::DropLMain,
            Target::OutcomeInitial | Target::OutcomeFollowUp | Target::OutcomeCombined,
        ) => out.terms.retain(|t| !matches!(t, Term::Main(_))),
        (Misspecification::DropAAndInteraction, Target::Observation) => out
            .terms
            .retain(|t| !matches!(t, Term::Treatment | Term::Interaction(_))),
        (Misspecification::FlipTreatment, Target::Propensity) => out.swap_arms = true,
        (mode, target) => {
            return Err(Error::invalid(format!(
                "misspecification {mode:?} does not apply to {target}"
            )))
        }
    }
    Ok(out)
}
