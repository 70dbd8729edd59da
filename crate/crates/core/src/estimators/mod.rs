//! One-step estimators of the treatment-specific means and the ATE under
//! double sampling, with variance estimates, confidence intervals and the
//! selection rules that choose between the nonparametric and MAR estimators.

mod comparators;
mod crossfit;
mod gap;
mod inference;
mod influence;
mod pipeline;

use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::data::Arm;

pub use comparators::{mar_comparators, ComparatorSet};
pub use crossfit::{crossfit_streams, estimate_crossfit, CrossFit, InfluenceStream};
pub use gap::{bias_gap, mar_remainder, np_remainder, GapRow, NuisanceValues, RemainderRow};
pub use inference::{
    adaptive_select, adhoc_select, ate_contrast, estimate_q, wald_ci, AdaptiveDecision, AdhocDecision, Interval,
    QStatistic,
};
pub use influence::{if_mar, if_np, influence, mu_composite, regression, Flavor, IfContext};
pub use pipeline::{estimate_all, EstimateOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "IF-DS")]
    IfDs,
    #[serde(rename = "IF-MAR-EFF")]
    IfMarEff,
    #[serde(rename = "ADAPTIVE")]
    Adaptive,
    #[serde(rename = "ADHOC")]
    Adhoc,
    #[serde(rename = "OR-MAR")]
    OrMar,
    #[serde(rename = "IPW-MAR")]
    IpwMar,
    #[serde(rename = "AIPW-MAR")]
    AipwMar,
    /// General estimator for coarsened data.
    #[serde(rename = "IF-COARSENED")]
    IfCoarsened,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::IfDs,
        EstimatorId::IfMarEff,
        EstimatorId::Adaptive,
        EstimatorId::Adhoc,
        EstimatorId::OrMar,
        EstimatorId::IpwMar,
        EstimatorId::AipwMar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::IfDs => "IF-DS",
            EstimatorId::IfMarEff => "IF-MAR-EFF",
            EstimatorId::Adaptive => "ADAPTIVE",
            EstimatorId::Adhoc => "ADHOC",
            EstimatorId::OrMar => "OR-MAR",
            EstimatorId::IpwMar => "IPW-MAR",
            EstimatorId::AipwMar => "AIPW-MAR",
            EstimatorId::IfCoarsened => "IF-COARSENED",
        }
    }

    pub fn parse(s: &str) -> Option<EstimatorId> {
        EstimatorId::ALL
            .into_iter()
            .chain([EstimatorId::IfCoarsened])
            .find(|e| e.name() == s)
    }
}

impl Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Treatment-specific mean or the ATE contrast (arm 1 minus arm 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Arm(Arm),
    Contrast,
    /// A general functional of the full-data law.
    Functional,
}

impl Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::Arm(a) => write!(f, "arm {a}"),
            Estimand::Contrast => f.write_str("contrast"),
            Estimand::Functional => f.write_str("functional"),
        }
    }
}

/// Per-arm outcome of a selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSelection<T> {
    pub arm: Arm,
    pub selected: EstimatorId,
    /// Cross-term statistic after flooring at zero.
    pub q: T,
    pub q_floored: bool,
    /// `sqrt(n) |tau - tau*| / sqrt(Q)`, absent when `Q = 0`.
    pub statistic: Option<T>,
    /// MAR test rejected at the configured level.
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo<T> {
    pub arms: Vec<ArmSelection<T>>,
    /// The interval was widened to cover the other candidate (ADAPTIVE only).
    pub widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T> {
    pub estimator: EstimatorId,
    /// Free-form variant tag, e.g. a misspecification scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub estimand: Estimand,
    pub estimate: T,
    /// Variance of the root-n scaled estimator.
    pub variance: T,
    pub ci: Interval<T>,
    pub n: usize,
    pub k: usize,
    pub fold_estimates: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionInfo<T>>,
    /// Variance ignores nuisance estimation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub naive_variance: bool,
}

impl<T: Copy> EstimateReport<T> {
    pub fn standard_error(&self) -> T
    where
        T: crate::scalar::Real,
    {
        (self.variance / T::from_count(self.n)).sqrt()
    }
}
