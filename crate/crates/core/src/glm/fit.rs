//! Maximum-likelihood fitting: IRLS for the logistic model, QR least squares
//! for the Gaussian-linear model.

use crate::error::{Error, Result};
use crate::scalar::{expit, Real};

use super::linalg::{weighted_least_squares, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit<T> {
    pub coefficients: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Bernoulli log-likelihood for logistic fits, residual sum of squares for linear fits.
    pub objective: T,
    /// Residual variance `RSS / (n - p)`, linear fits with `n > p` only.
    pub residual_variance: Option<T>,
    pub separation: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsOptions {
    pub score_tolerance: f64,
    pub relative_loglik_tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Coefficient norm beyond which an improving fit is declared separated.
    pub separation_norm: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            score_tolerance: 1e-10,
            relative_loglik_tolerance: 1e-12,
            max_iterations: 100,
            max_halvings: 30,
            separation_norm: 1e3,
        }
    }
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn log_likelihood<T: Real>(eta: &[T], y: &[T]) -> T {
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

fn check_shapes<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but response has {} entries",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("design has no columns"));
    }
    Ok(())
}

pub fn fit_logistic<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<RegressionFit<T>> {
    fit_logistic_with(x, y, &IrlsOptions::default())
}

/// Newton-Raphson / IRLS with step halving.
///
/// Converges when the largest absolute score component drops below the score
/// tolerance or a step changes the log-likelihood by less than the relative
/// tolerance. Tolerances are floored at a few ulps of the scalar type.
pub fn fit_logistic_with<T: Real>(x: &Matrix<T>, y: &[T], opts: &IrlsOptions) -> Result<RegressionFit<T>> {
    check_shapes(x, y)?;
    if y.iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid("logistic response must be 0 or 1"));
    }
    let singular = || Error::SingularDesign {
        target: "logistic model".into(),
    };
    let eps = T::epsilon();
    let score_tol = T::lit(opts.score_tolerance).max(eps * T::from_count(x.rows()));
    let rel_tol = T::lit(opts.relative_loglik_tolerance).max(eps * T::lit(4.0));
    let sep_norm = T::lit(opts.separation_norm);

    let p = x.cols();
    let mut beta = vec![T::zero(); p];
    let mut eta = x.mul_vec(&beta);
    let mut ll = log_likelihood(&eta, y);
    let mut scale = vec![T::zero(); x.rows()];
    let mut rhs = vec![T::zero(); x.rows()];

    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let mu: Vec<T> = eta.iter().map(|&e| expit(e)).collect();
        let resid: Vec<T> = y.iter().zip(&mu).map(|(&yi, &m)| yi - m).collect();
        let score = x.tr_mul_vec(&resid);
        if score.iter().all(|s| s.abs() < score_tol) {
            converged = true;
            break;
        }
        for i in 0..x.rows() {
            let w = mu[i] * (T::one() - mu[i]);
            if w > T::zero() {
                let sw = w.sqrt();
                scale[i] = sw;
                rhs[i] = resid[i] / sw;
            } else {
                scale[i] = T::zero();
                rhs[i] = T::zero();
            }
        }
        let step = match weighted_least_squares(x, Some(&scale), &rhs) {
            Some(s) => s,
            None if iterations == 0 => return Err(singular()),
            None => {
                // Weights collapsed as fitted probabilities hit 0 or 1.
                separation = norm(&beta) > sep_norm.sqrt();
                if separation {
                    break;
                }
                return Err(singular());
            }
        };
        iterations += 1;

        let mut t = T::one();
        let mut halvings = 0;
        let (candidate, cand_eta, cand_ll) = loop {
            let cand: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + t * s).collect();
            let cand_eta = x.mul_vec(&cand);
            let cand_ll = log_likelihood(&cand_eta, y);
            if cand_ll >= ll || halvings >= opts.max_halvings {
                break (cand, cand_eta, cand_ll);
            }
            t = t / T::lit(2.0);
            halvings += 1;
        };
        let change = (cand_ll - ll).abs();
        let improving = cand_ll > ll;
        beta = candidate;
        eta = cand_eta;
        let previous = ll;
        ll = cand_ll;

        if improving && norm(&beta) > sep_norm {
            separation = true;
            break;
        }
        if change <= rel_tol * previous.abs().max(T::min_positive_value()) {
            converged = true;
            break;
        }
    }

    // Fitted probabilities numerically 0 or 1 mean the MLE does not exist.
    let boundary = T::lit(1e-8).max(T::lit(100.0) * eps);
    if eta.iter().any(|&e| {
        let m = expit(e);
        m < boundary || m > T::one() - boundary
    }) {
        separation = true;
    }

    Ok(RegressionFit {
        coefficients: beta,
        converged: converged && !separation,
        iterations,
        objective: ll,
        residual_variance: None,
        separation,
    })
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Ordinary least squares, which is the Gaussian maximum-likelihood fit.
pub fn fit_linear<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<RegressionFit<T>> {
    check_shapes(x, y)?;
    let coefficients = weighted_least_squares(x, None, y).ok_or_else(|| Error::SingularDesign {
        target: "linear model".into(),
    })?;
    let fitted = x.mul_vec(&coefficients);
    let rss: T = y
        .iter()
        .zip(&fitted)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let dof = x.rows() - x.cols();
    Ok(RegressionFit {
        coefficients,
        converged: true,
        iterations: 1,
        objective: rss,
        residual_variance: (dof > 0).then(|| rss / T::from_count(dof)),
        separation: false,
    })
}
