use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::data::Arm;
use crate::error::{Error, Result};
use crate::estimators::{bias_gap, EstimatorId, GapRow};
use crate::glm::{misspecify, EtaSource, KnownModel, Misspecification, ModelSpec, SpecSet, Stratify, Target, Term};
use crate::scalar::expit;

/// Name of the single simulated covariate.
pub const COVARIATE: &str = "Lg";

/// Which nuisance models of the nonparametric estimator are misspecified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelScenario {
    Correct,
    /// `mu_{a,R}`, `mu_{a,S}` and `gamma_a`.
    Outcome,
    /// `pi_a`.
    Propensity,
    Both,
}

impl ModelScenario {
    pub const ALL: [ModelScenario; 4] = [
        ModelScenario::Correct,
        ModelScenario::Outcome,
        ModelScenario::Propensity,
        ModelScenario::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelScenario::Correct => "correct",
            ModelScenario::Outcome => "outcome",
            ModelScenario::Propensity => "propensity",
            ModelScenario::Both => "both",
        }
    }
}

impl Display for ModelScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of the simulated double-sampling study and of the estimators
/// run on each replication. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// `P[Lg = 1]`.
    pub p_l: f64,
    /// `P[A = 1 | Lg = 0]`.
    pub p0: f64,
    /// `P[A = 1 | Lg = 1]`.
    pub p1: f64,
    /// Logit of `P[R = 1]` on `(1, Lg, A, Lg A)`.
    pub delta: [f64; 4],
    /// Outcome mean on `(1, Lg, A)`.
    pub beta: [f64; 3],
    /// Coefficient of `R A` in the outcome mean.
    pub beta_ra: f64,
    pub sigma_y: f64,
    /// Logit of `P[S = 1 | R = 0]` on `(1, Lg, A, Lg A)`.
    pub zeta: [f64; 4],
    pub replications: usize,
    pub k: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    /// Model scenarios for the nonparametric estimator.
    pub scenarios: Vec<ModelScenario>,
    pub level: f64,
    pub clip: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 5693,
            p_l: 0.8,
            p0: 0.20,
            p1: 0.34,
            delta: [-1.39, 0.09, -0.05, -0.35],
            beta: [-0.24, 0.023, 0.064],
            beta_ra: 0.0,
            sigma_y: 0.11,
            zeta: [-2.2, 0.4, 0.3, 0.25],
            replications: 500,
            k: 1,
            seed: 0,
            estimators: EstimatorId::ALL.to_vec(),
            scenarios: ModelScenario::ALL.to_vec(),
            level: 0.95,
            clip: 0.01,
        }
    }
}

fn logit_design(c: &[f64; 4], l: f64, a: f64) -> f64 {
    c[0] + c[1] * l + c[2] * a + c[3] * l * a
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64, name: &str| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {x}")))
            }
        };
        open_unit(self.p_l, "p_l")?;
        open_unit(self.p0, "p0")?;
        open_unit(self.p1, "p1")?;
        open_unit(self.level, "level")?;
        if !(self.clip >= 0.0 && self.clip < 0.5) {
            return Err(Error::invalid("clip must lie in [0, 0.5)"));
        }
        if !(self.sigma_y > 0.0) {
            return Err(Error::invalid("sigma_y must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!("need 1 <= k <= n, got k = {}", self.k)));
        }
        if self.estimators.contains(&EstimatorId::IfCoarsened) {
            return Err(Error::invalid("IF-COARSENED does not apply to the simulated study"));
        }
        let all = self
            .delta
            .iter()
            .chain(&self.beta)
            .chain(&self.zeta)
            .chain([&self.beta_ra, &self.sigma_y]);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(())
    }

    pub fn treatment_probability(&self, l: f64) -> f64 {
        self.p1 * l + self.p0 * (1.0 - l)
    }

    /// `gamma_a(l) = P[R = 1 | Lg = l, A = a]`.
    pub fn gamma(&self, arm: Arm, l: f64) -> f64 {
        expit(logit_design(&self.delta, l, arm.indicator()))
    }

    /// `eta_{a,0}(l) = P[S = 1 | Lg = l, A = a, R = 0]`.
    pub fn eta(&self, arm: Arm, l: f64) -> f64 {
        expit(logit_design(&self.zeta, l, arm.indicator()))
    }

    pub fn outcome_mean(&self, l: f64, arm: Arm, initial: bool) -> f64 {
        let a: f64 = arm.indicator();
        let r = if initial { 1.0 } else { 0.0 };
        self.beta[0] + self.beta[1] * l + self.beta[2] * a + self.beta_ra * r * a
    }

    /// `(l, P[Lg = l])`.
    pub fn covariate_law(&self) -> [(f64, f64); 2] {
        [(0.0, 1.0 - self.p_l), (1.0, self.p_l)]
    }

    /// `tau_a = E_L[gamma_a mu_{a,R} + (1 - gamma_a) mu_{a,S}]`.
    pub fn true_mean(&self, arm: Arm) -> f64 {
        self.covariate_law()
            .iter()
            .map(|&(l, w)| {
                let g = self.gamma(arm, l);
                w * (g * self.outcome_mean(l, arm, true) + (1.0 - g) * self.outcome_mean(l, arm, false))
            })
            .sum()
    }

    /// `beta_A + beta_RA E_L[gamma_1(L)]`.
    pub fn true_ate(&self) -> f64 {
        let e_gamma: f64 = self.covariate_law().iter().map(|&(l, w)| w * self.gamma(Arm::Treated, l)).sum();
        self.beta[2] + self.beta_ra * e_gamma
    }

    /// `tau*_a - tau_a` at the generating law.
    pub fn mar_gap(&self, arm: Arm) -> Result<f64> {
        let rows: Vec<GapRow<f64>> = self
            .covariate_law()
            .iter()
            .map(|&(l, w)| GapRow {
                weight: w,
                gamma: self.gamma(arm, l),
                eta: self.eta(arm, l),
                mu_initial: self.outcome_mean(l, arm, true),
                mu_follow_up: self.outcome_mean(l, arm, false),
            })
            .collect();
        bias_gap(&rows)
    }

    /// Gap of the MAR-efficient contrast.
    pub fn mar_gap_contrast(&self) -> Result<f64> {
        Ok(self.mar_gap(Arm::Treated)? - self.mar_gap(Arm::Control)?)
    }

    /// Models of the generating process, with `eta` known.
    pub fn true_specs(&self) -> SpecSet {
        let terms = |names: &[&str]| names.iter().map(|s| s.parse::<Term>().expect("valid term")).collect::<Vec<_>>();
        let full = ["1", COVARIATE, "A", "Lg:A"];
        let outcome = |target| ModelSpec::new(target, terms(&["1", COVARIATE]), Stratify::ByArm);
        SpecSet {
            propensity: ModelSpec::new(Target::Propensity, terms(&["1", COVARIATE]), Stratify::Pooled),
            observation: Some(ModelSpec::new(Target::Observation, terms(&full), Stratify::Pooled)),
            follow_up: Some(EtaSource::Known(KnownModel {
                terms: terms(&full),
                coefficients: self.zeta.to_vec(),
            })),
            outcome_initial: Some(outcome(Target::OutcomeInitial)),
            outcome_follow_up: Some(outcome(Target::OutcomeFollowUp)),
            outcome_combined: Some(outcome(Target::OutcomeCombined)),
            clip: self.clip,
        }
    }

    pub fn specs(&self, scenario: ModelScenario) -> Result<SpecSet> {
        let mut s = self.true_specs();
        let bad_outcome = matches!(scenario, ModelScenario::Outcome | ModelScenario::Both);
        let bad_propensity = matches!(scenario, ModelScenario::Propensity | ModelScenario::Both);
        if bad_outcome {
            let drop = |m: &Option<ModelSpec>| m.as_ref().map(|m| misspecify(m, Misspecification::DropLMain)).transpose();
            s.outcome_initial = drop(&s.outcome_initial)?;
            s.outcome_follow_up = drop(&s.outcome_follow_up)?;
            s.observation = s
                .observation
                .as_ref()
                .map(|m| misspecify(m, Misspecification::DropAAndInteraction))
                .transpose()?;
        }
        if bad_propensity {
            s.propensity = misspecify(&s.propensity, Misspecification::FlipTreatment)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_violation_gives_beta_a() {
        let c = ScenarioConfig::default();
        assert_eq!(c.true_ate(), 0.064);
        assert_eq!(c.mar_gap_contrast().unwrap(), 0.0);
        assert!((c.true_mean(Arm::Treated) - c.true_mean(Arm::Control) - 0.064).abs() < 1e-15);
    }

    #[test]
    fn ate_matches_direct_sum() {
        let c = ScenarioConfig {
            beta_ra: 0.032,
            ..ScenarioConfig::default()
        };
        let g0 = 1.0 / (1.0 + (1.39f64 + 0.05).exp());
        let g1 = 1.0 / (1.0 + (1.39f64 - 0.09 + 0.05 + 0.35).exp());
        let want = 0.064 + 0.032 * (0.2 * g0 + 0.8 * g1);
        assert!((c.true_ate() - want).abs() < 1e-15);
        assert!((c.true_mean(Arm::Treated) - c.true_mean(Arm::Control) - want).abs() < 1e-15);
    }

    #[test]
    fn misspecified_specs() {
        let c = ScenarioConfig::default();
        let s = c.specs(ModelScenario::Both).unwrap();
        assert!(s.propensity.swap_arms);
        assert_eq!(s.outcome_initial.unwrap().terms, vec![Term::Intercept]);
        assert_eq!(s.observation.unwrap().terms.len(), 2);
        assert_eq!(s.outcome_combined.unwrap().terms.len(), 2);
        let s = c.specs(ModelScenario::Propensity).unwrap();
        assert_eq!(s.outcome_follow_up.unwrap().terms.len(), 2);
    }

    #[test]
    fn config_parses_from_toml_with_defaults() {
        let c: ScenarioConfig = toml::from_str("n = 100\nbeta_ra = 0.016\nscenarios = [\"correct\", \"both\"]").unwrap();
        assert_eq!(c.n, 100);
        assert_eq!(c.scenarios, vec![ModelScenario::Correct, ModelScenario::Both]);
        assert_eq!(c.zeta, [-2.2, 0.4, 0.3, 0.25]);
        assert!(toml::from_str::<ScenarioConfig>("nn = 1").is_err());
    }
}
