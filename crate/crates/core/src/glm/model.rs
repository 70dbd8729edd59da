use crate::data::{Arm, Dataset};
use crate::error::{Error, Result};
use crate::scalar::{expit, Real};

use super::design::{build_design, compile, design_row, target_label, CompiledTerm, EvalPoint};
use super::fit::{fit_linear, fit_logistic};
use super::linalg::dot;
use super::{Family, ModelSpec};

/// A regression fitted for one nuisance target.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T> {
    spec: ModelSpec,
    compiled: Vec<CompiledTerm>,
    n_covariates: usize,
    coefficients: Vec<T>,
    converged: bool,
    iterations: usize,
    residual_variance: Option<T>,
    clip: T,
    diagnostics: bool,
}

impl<T: Real> FittedModel<T> {
    /// Fits `spec` on the records in `indices`, restricted to `arm` when given.
    pub fn fit(spec: &ModelSpec, d: &Dataset<T>, indices: &[usize], arm: Option<Arm>) -> Result<Self> {
        spec.validate()?;
        let label = target_label(spec.target, arm);
        let design = build_design(spec, d, indices, arm)?;
        let fit = match spec.family() {
            Family::Logistic => fit_logistic(&design.matrix, &design.response),
            Family::Linear => fit_linear(&design.matrix, &design.response),
        }
        .map_err(|e| match e {
            Error::SingularDesign { .. } => Error::SingularDesign { target: label.clone() },
            other => other,
        })?;
        if !fit.converged {
            log::warn!(
                "{label}: IRLS stopped after {} iterations without converging{}",
                fit.iterations,
                if fit.separation { " (separation)" } else { "" }
            );
        }
        Ok(FittedModel {
            spec: spec.clone(),
            compiled: compile(&spec.terms, d.covariate_names())?,
            n_covariates: d.covariate_names().len(),
            coefficients: fit.coefficients,
            converged: fit.converged,
            iterations: fit.iterations,
            residual_variance: fit.residual_variance,
            clip: T::lit(0.01),
            diagnostics: false,
        })
    }

    /// A model with given coefficients, e.g. a selection mechanism known by design.
    pub fn from_coefficients(spec: &ModelSpec, covariate_names: &[String], coefficients: Vec<T>) -> Result<Self> {
        if coefficients.len() != spec.terms.len() {
            return Err(Error::invalid(format!(
                "{} coefficients supplied for {} terms",
                coefficients.len(),
                spec.terms.len()
            )));
        }
        Ok(FittedModel {
            spec: spec.clone(),
            compiled: compile(&spec.terms, covariate_names)?,
            n_covariates: covariate_names.len(),
            coefficients,
            converged: true,
            iterations: 0,
            residual_variance: None,
            clip: T::lit(0.01),
            diagnostics: false,
        })
    }

    /// Sets the probability clipping bound used by logistic predictions.
    pub fn with_clip(mut self, clip: T) -> Result<Self> {
        if !(clip >= T::zero() && clip < T::lit(0.5)) {
            return Err(Error::invalid("clipping bound must lie in [0, 0.5)"));
        }
        self.clip = clip;
        Ok(self)
    }

    /// Allows predictions from an unconverged fit.
    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual_variance(&self) -> Option<T> {
        self.residual_variance
    }

    pub fn clip(&self) -> T {
        self.clip
    }

    pub fn linear_predictor(&self, point: &EvalPoint<'_, T>) -> Result<T> {
        if !self.converged && !self.diagnostics {
            return Err(Error::NotConverged {
                target: self.spec.target.to_string(),
                iterations: self.iterations,
                separation: false,
            });
        }
        if point.covariates.len() != self.n_covariates {
            return Err(Error::invalid(format!(
                "expected {} covariates, got {}",
                self.n_covariates,
                point.covariates.len()
            )));
        }
        let mut row = Vec::with_capacity(self.compiled.len());
        design_row(&self.compiled, point, &mut row);
        Ok(dot(&row, &self.coefficients))
    }

    /// Logistic models return `expit(x'beta)` clipped to `[clip, 1 - clip]`;
    /// linear models return `x'beta`.
    pub fn predict(&self, point: &EvalPoint<'_, T>) -> Result<T> {
        let lp = self.linear_predictor(point)?;
        Ok(match self.spec.family() {
            Family::Logistic => expit(lp).max(self.clip).min(T::one() - self.clip),
            Family::Linear => lp,
        })
    }
}
