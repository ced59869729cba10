use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, norm2, Cholesky};
use crate::scalar::{count, expit, lit, log1p_exp, Real};

/// Stopping rules for [`fit_logistic_with`].
#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions<T> {
    /// Convergence when the max-norm of the score drops to this value.
    pub tolerance: T,
    pub max_iter: usize,
    /// A coefficient vector longer than this is treated as divergence.
    pub max_coef_norm: T,
}

impl<T: Real> LogisticOptions<T> {
    pub fn for_rows(n: usize) -> Self {
        Self { tolerance: T::irls_tolerance(n), max_iter: 100, max_coef_norm: lit(1e6) }
    }
}

/// Why a logistic fit stopped without converging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogisticFailure {
    /// Fitted probabilities collapsed onto the responses; no finite MLE exists.
    Separation,
    /// Coefficient norm exceeded the divergence bound.
    CoefficientNorm,
    /// The weighted Hessian could not be factored.
    SingularHessian,
    IterationLimit,
}

/// Result of a binomial-logit fit. `coefficients` follow the design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub names: Vec<String>,
    pub coefficients: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: T,
    pub deviance: T,
    pub failure: Option<LogisticFailure>,
    /// Deviance after each accepted step, starting with the initial value.
    pub deviance_trace: Vec<T>,
}

struct State<T> {
    gradient: Vec<T>,
    weights: Vec<T>,
    deviance: T,
    max_abs_eta: T,
}

fn evaluate<T: Real>(design: &DesignMatrix<T>, a: &[bool], beta: &[T]) -> State<T> {
    let n = design.n_rows();
    let mut resid = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut deviance = T::zero();
    let mut max_abs_eta = T::zero();
    for (i, &ai) in a.iter().enumerate() {
        let eta = dot(design.row(i), beta);
        max_abs_eta = max_abs_eta.max(eta.abs());
        let p = expit(eta);
        let q = expit(-eta);
        // a - p computed without cancellation near the boundaries
        resid.push(if ai { q } else { -p });
        weights.push(p * q);
        // -2 log-likelihood
        deviance = deviance + lit::<T>(2.0) * if ai { log1p_exp(-eta) } else { log1p_exp(eta) };
    }
    State { gradient: design.matrix().tr_mul_vec(&resid), weights, deviance, max_abs_eta }
}

fn deviance_at<T: Real>(design: &DesignMatrix<T>, a: &[bool], beta: &[T]) -> T {
    a.iter().enumerate().fold(T::zero(), |acc, (i, &ai)| {
        let eta = dot(design.row(i), beta);
        acc + lit::<T>(2.0) * if ai { log1p_exp(-eta) } else { log1p_exp(eta) }
    })
}

/// Fits `Pr(a = 1 | x) = expit(xᵀβ)` with default stopping rules.
pub fn fit_logistic<T: Real>(design: &DesignMatrix<T>, a: &[bool]) -> Result<LogisticFit<T>> {
    fit_logistic_with(design, a, LogisticOptions::for_rows(design.n_rows()))
}

/// Newton/IRLS with step halving whenever a full step would raise the deviance.
///
/// Non-convergence is returned as `Ok` with `converged = false` and a
/// [`LogisticFailure`]; it is never silently papered over.
pub fn fit_logistic_with<T: Real>(
    design: &DesignMatrix<T>,
    a: &[bool],
    opts: LogisticOptions<T>,
) -> Result<LogisticFit<T>> {
    let (n, q) = (design.n_rows(), design.n_cols());
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    if n < q {
        return Err(Error::InsufficientData(format!("{n} rows for {q} regressors")));
    }
    let ones = a.iter().filter(|&&v| v).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateResponse(format!("all {n} responses are {}", if ones == 0 { 0 } else { 1 })));
    }

    // start at the intercept-only MLE
    let mut beta = vec![T::zero(); q];
    let rate = count::<T>(ones) / count::<T>(n);
    beta[0] = (rate / (T::one() - rate)).ln();

    let separation_deviance = lit::<T>(1e-6);
    let mut state = evaluate(design, a, &beta);
    let mut trace = vec![state.deviance];
    let mut failure = None;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let gnorm = max_abs(&state.gradient);
        if gnorm <= opts.tolerance {
            converged = true;
            break;
        }
        if state.deviance < separation_deviance {
            failure = Some(LogisticFailure::Separation);
            break;
        }
        if iterations >= opts.max_iter {
            failure = Some(if state.max_abs_eta > lit(30.0) {
                LogisticFailure::Separation
            } else {
                LogisticFailure::IterationLimit
            });
            break;
        }
        iterations += 1;

        let hessian = design.matrix().gram(Some(&state.weights));
        let step = match Cholesky::new(&hessian) {
            Ok(ch) => ch.solve(&state.gradient),
            Err(_) => {
                failure = Some(if state.max_abs_eta > lit(30.0) {
                    LogisticFailure::Separation
                } else {
                    LogisticFailure::SingularHessian
                });
                break;
            }
        };

        let slack = state.deviance.abs() * T::epsilon() * lit(16.0);
        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let cand: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + scale * s).collect();
            let dev = deviance_at(design, a, &cand);
            if dev.is_finite() && dev <= state.deviance + slack {
                accepted = Some(cand);
                break;
            }
            scale = scale / lit(2.0);
        }
        let Some(next) = accepted else {
            // no descent possible: we are at the optimum to working precision
            converged = max_abs(&state.gradient) <= opts.tolerance * lit(1e3);
            if !converged {
                failure = Some(LogisticFailure::IterationLimit);
            }
            break;
        };
        beta = next;
        if norm2(&beta) > opts.max_coef_norm {
            state = evaluate(design, a, &beta);
            trace.push(state.deviance);
            failure = Some(LogisticFailure::CoefficientNorm);
            break;
        }
        state = evaluate(design, a, &beta);
        trace.push(state.deviance);
    }

    Ok(LogisticFit {
        names: design.names().to_vec(),
        coefficients: beta,
        converged,
        iterations,
        final_gradient_norm: max_abs(&state.gradient),
        deviance: state.deviance,
        failure,
        deviance_trace: trace,
    })
}

/// `expit(coefficientsᵀ x_row)`.
pub fn predict_prob<T: Real>(fit: &LogisticFit<T>, x_row: &[T]) -> Result<T> {
    if x_row.len() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: fit.coefficients.len(), got: x_row.len() });
    }
    Ok(expit(dot(&fit.coefficients, x_row)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(x: &[f64]) -> DesignMatrix<f64> {
        DesignMatrix::with_intercept(x.len(), vec![("x".into(), x.to_vec())]).unwrap()
    }

    #[test]
    fn symmetric_data_gives_zero() {
        let fit = fit_logistic(&design(&[-1.0, -1.0, 1.0, 1.0]), &[false, true, false, true]).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((predict_prob(&fit, &[1.0, 7.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_response_is_an_error() {
        assert!(matches!(fit_logistic(&design(&[1.0, 2.0, 3.0]), &[true; 3]), Err(Error::DegenerateResponse(_))));
        assert!(matches!(fit_logistic(&design(&[1.0, 2.0, 3.0]), &[false; 3]), Err(Error::DegenerateResponse(_))));
    }

    #[test]
    fn separation_is_reported() {
        let x = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let a: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
        let fit = fit_logistic(&design(&x), &a).unwrap();
        assert!(!fit.converged);
        assert!(matches!(fit.failure, Some(LogisticFailure::Separation | LogisticFailure::CoefficientNorm)));
    }

    #[test]
    fn intercept_only_recovers_sample_rate() {
        let d = DesignMatrix::<f64>::with_intercept(7, vec![]).unwrap();
        let a = [true, false, false, true, true, false, true];
        let fit = fit_logistic(&d, &a).unwrap();
        assert!(fit.converged);
        assert!((predict_prob(&fit, &[1.0]).unwrap() - 4.0 / 7.0).abs() < 1e-10);
    }

    #[test]
    fn predict_checks_length() {
        let fit = fit_logistic(&design(&[-1.0, -1.0, 1.0, 1.0]), &[false, true, false, true]).unwrap();
        assert!(matches!(predict_prob(&fit, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn expit_of_log_three() {
        let fit = LogisticFit {
            names: vec!["intercept".into(), "x".into()],
            coefficients: vec![3f64.ln(), 0.0],
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            deviance: 0.0,
            failure: None,
            deviance_trace: vec![],
        };
        assert!((predict_prob(&fit, &[1.0, 42.0]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn single_precision_fit() {
        let x: Vec<f32> = (0..40).map(|i| (i as f32 - 20.0) / 10.0).collect();
        let a: Vec<bool> = (0..40).map(|i| (i * 7919) % 13 < 6 + i / 8).collect();
        let d = DesignMatrix::with_intercept(40, vec![("x".into(), x.clone())]).unwrap();
        let fit32 = fit_logistic(&d, &a).unwrap();
        let d64 = DesignMatrix::with_intercept(40, vec![("x".into(), x.iter().map(|&v| v as f64).collect())]).unwrap();
        let fit64 = fit_logistic(&d64, &a).unwrap();
        assert!(fit32.converged && fit64.converged);
        for (c32, c64) in fit32.coefficients.iter().zip(&fit64.coefficients) {
            assert!((*c32 as f64 - c64).abs() < 1e-3);
        }
    }
}
