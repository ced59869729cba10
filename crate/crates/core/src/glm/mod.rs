//! Regression engines: ordinary least squares with classical t inference,
//! and binomial-logit regression fit by iteratively reweighted least squares.

mod design;
mod logistic;
mod ols;

pub use design::{DesignMatrix, INTERCEPT};
pub use logistic::{fit_logistic, fit_logistic_with, predict_prob, LogisticFailure, LogisticFit, LogisticOptions};
pub use ols::{fit_ols, OlsFit};
