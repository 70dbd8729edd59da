use crate::data::{Arm, Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::linalg::Matrix;
use super::{ModelSpec, Target, Term};

/// Term with covariate names resolved to column positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CompiledTerm {
    Intercept,
    Main(usize),
    Treatment,
    Interaction(usize),
    Initial,
}

pub(crate) fn compile(terms: &[Term], covariate_names: &[String]) -> Result<Vec<CompiledTerm>> {
    let index = |name: &str| {
        covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("unknown covariate {name:?} in design term")))
    };
    terms
        .iter()
        .map(|t| {
            Ok(match t {
                Term::Intercept => CompiledTerm::Intercept,
                Term::Main(l) => CompiledTerm::Main(index(l)?),
                Term::Treatment => CompiledTerm::Treatment,
                Term::Interaction(l) => CompiledTerm::Interaction(index(l)?),
                Term::Initial => CompiledTerm::Initial,
            })
        })
        .collect()
}

/// Where a model is evaluated: covariates plus the treatment and `R` values
/// plugged into the corresponding terms.
#[derive(Debug, Clone, Copy)]
pub struct EvalPoint<'a, T> {
    pub covariates: &'a [T],
    pub treatment: Arm,
    pub initial: bool,
}

impl<'a, T: Real> EvalPoint<'a, T> {
    pub fn new(covariates: &'a [T], treatment: Arm) -> Self {
        EvalPoint {
            covariates,
            treatment,
            initial: false,
        }
    }

    pub fn of_record(r: &'a ObservedRecord<T>) -> Self {
        EvalPoint {
            covariates: &r.covariates,
            treatment: r.treatment,
            initial: r.initial,
        }
    }
}

pub(crate) fn design_row<T: Real>(terms: &[CompiledTerm], p: &EvalPoint<'_, T>, out: &mut Vec<T>) {
    out.clear();
    let a: T = p.treatment.indicator();
    for t in terms {
        out.push(match *t {
            CompiledTerm::Intercept => T::one(),
            CompiledTerm::Main(j) => p.covariates[j],
            CompiledTerm::Treatment => a,
            CompiledTerm::Interaction(j) => p.covariates[j] * a,
            CompiledTerm::Initial => {
                if p.initial {
                    T::one()
                } else {
                    T::zero()
                }
            }
        });
    }
}

#[derive(Debug, Clone)]
pub struct Design<T> {
    pub matrix: Matrix<T>,
    pub response: Vec<T>,
    /// Dataset index of each design row.
    pub rows: Vec<usize>,
}

fn in_stratum<T>(target: Target, r: &ObservedRecord<T>) -> bool {
    match target {
        Target::Propensity | Target::Observation => true,
        Target::FollowUp => !r.initial,
        Target::OutcomeInitial => r.initial,
        Target::OutcomeFollowUp => r.follow_up,
        Target::OutcomeCombined => r.initial != r.follow_up,
    }
}

fn bit<T: Real>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Builds the design matrix and response for `spec` from the records in
/// `indices` that fall in the target's stratum (and in `arm`, if given).
pub fn build_design<T: Real>(
    spec: &ModelSpec,
    d: &Dataset<T>,
    indices: &[usize],
    arm: Option<Arm>,
) -> Result<Design<T>> {
    let terms = compile(&spec.terms, d.covariate_names())?;
    let rows: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| {
            let r = d.record(i);
            in_stratum(spec.target, r) && arm.is_none_or(|a| r.treatment == a)
        })
        .collect();
    if rows.is_empty() {
        let stratum = match arm {
            Some(a) => format!("A={a}, {}", spec.target.stratum()),
            None => spec.target.stratum().to_string(),
        };
        return Err(Error::FitImpossible {
            target: target_label(spec.target, arm),
            stratum,
        });
    }

    let mut matrix = Matrix::zeros(rows.len(), terms.len());
    let mut response = Vec::with_capacity(rows.len());
    let mut buf = Vec::with_capacity(terms.len());
    for (k, &i) in rows.iter().enumerate() {
        let r = d.record(i);
        design_row(&terms, &EvalPoint::of_record(r), &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            matrix.set(k, j, v);
        }
        response.push(match spec.target {
            Target::Propensity => r.treatment.indicator(),
            Target::Observation => bit(r.initial),
            Target::FollowUp => bit(r.follow_up),
            _ => r.outcome.ok_or_else(|| Error::DataIntegrity {
                index: i,
                reason: format!("outcome missing in stratum {}", spec.target.stratum()),
            })?,
        });
    }
    Ok(Design {
        matrix,
        response,
        rows,
    })
}

pub(crate) fn target_label(target: Target, arm: Option<Arm>) -> String {
    match arm {
        Some(a) => format!("{target}[A={a}]"),
        None => target.to_string(),
    }
}
