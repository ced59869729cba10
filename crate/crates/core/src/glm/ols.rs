use serde::Serialize;

use super::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Qr};
use crate::scalar::{count, to_f64, Real};
use crate::special::student_t_two_sided;

/// Least-squares fit with classical (homoskedastic) inference.
#[derive(Debug, Clone, Serialize)]
pub struct OlsFit<T> {
    pub names: Vec<String>,
    pub coefficients: Vec<T>,
    pub standard_errors: Vec<T>,
    pub t_stats: Vec<T>,
    pub p_values: Vec<T>,
    pub sigma2: T,
    pub dof: usize,
    /// `sigma2 · (XᵀX)⁻¹`.
    #[serde(skip)]
    pub covariance: Matrix<T>,
}

impl<T: Real> OlsFit<T> {
    pub fn predict(&self, row: &[T]) -> T {
        dot(&self.coefficients, row)
    }

    /// Standard error of the linear combination `cᵀβ`.
    pub fn contrast_se(&self, c: &[T]) -> T {
        let v = self.covariance.mul_vec(c);
        dot(c, &v).max(T::zero()).sqrt()
    }

    pub fn coefficient(&self, name: &str) -> Option<(T, T, T)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[j], self.standard_errors[j], self.p_values[j]))
    }
}

/// Fits `y ~ design` by Householder QR.
pub fn fit_ols<T: Real>(design: &DesignMatrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let (n, q) = (design.n_rows(), design.n_cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n <= q {
        return Err(Error::InsufficientData(format!("{n} rows for {q} regressors")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite response at row {i}")));
    }
    let qr =
        Qr::new(design.matrix()).map_err(|e| Error::SingularDesign { column: design.names()[e.column].clone() })?;
    let coefficients = qr.solve_least_squares(y);
    let fitted = design.matrix().mul_vec(&coefficients);
    let rss = y.iter().zip(&fitted).fold(T::zero(), |acc, (&yi, &fi)| acc + (yi - fi) * (yi - fi));
    let dof = n - q;
    let sigma2 = rss / count::<T>(dof);
    let mut covariance = qr.gram_inverse();
    for i in 0..q {
        for j in 0..q {
            covariance[(i, j)] = covariance[(i, j)] * sigma2;
        }
    }
    let standard_errors: Vec<T> = (0..q).map(|j| covariance[(j, j)].max(T::zero()).sqrt()).collect();
    let mut t_stats = Vec::with_capacity(q);
    let mut p_values = Vec::with_capacity(q);
    for (&b, &se) in coefficients.iter().zip(&standard_errors) {
        let (t, p) = if se > T::zero() {
            let t = b / se;
            (t, T::from_f64(student_t_two_sided(to_f64(t), dof as f64)).unwrap())
        } else if b == T::zero() {
            (T::zero(), T::one())
        } else {
            (T::infinity() * b.signum(), T::zero())
        };
        t_stats.push(t);
        p_values.push(p);
    }
    Ok(OlsFit {
        names: design.names().to_vec(),
        coefficients,
        standard_errors,
        t_stats,
        p_values,
        sigma2,
        dof,
        covariance,
    })
}
