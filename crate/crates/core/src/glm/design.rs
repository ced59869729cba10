use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const INTERCEPT: &str = "intercept";

/// Named regressors; the intercept column always comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    values: Matrix<T>,
}

impl<T: Real> DesignMatrix<T> {
    /// Builds `[1, columns...]` for `n` rows.
    pub fn with_intercept(n: usize, columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        let mut names = vec![INTERCEPT.to_string()];
        let q = columns.len() + 1;
        let mut data = vec![T::one(); n * q];
        for (j, (name, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: col.len() });
            }
            for (i, v) in col.into_iter().enumerate() {
                data[i * q + j + 1] = v;
            }
            names.push(name);
        }
        Self::new(names, Matrix::from_row_major(n, q, data))
    }

    /// Checks unique names, finite entries and an intercept-named first column.
    pub fn new(names: Vec<String>, values: Matrix<T>) -> Result<Self> {
        if names.len() != values.cols() {
            return Err(Error::DimensionMismatch { expected: values.cols(), got: names.len() });
        }
        if names.first().map(String::as_str) != Some(INTERCEPT) {
            return Err(Error::InvalidArgument("design must start with the intercept column".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::InvalidArgument(format!("duplicate design column {n:?}")));
            }
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite design entry in row {}, column {:?}",
                pos / values.cols().max(1),
                names[pos % values.cols().max(1)]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    /// Column means (the intercept's mean is 1).
    pub fn column_means(&self) -> Vec<T> {
        let n = T::from_usize(self.n_rows()).unwrap();
        let mut m = self.values.tr_mul_vec(&vec![T::one(); self.n_rows()]);
        m.iter_mut().for_each(|v| *v = *v / n);
        m
    }
}
