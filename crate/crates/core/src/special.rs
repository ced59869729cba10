//! Distribution functions needed for inference and simulation.

use libm::erfc;
use statrs::function::beta::beta_reg;

/// Two-sided p-value `Pr(|T_dof| ≥ |t|)` of Student's t distribution.
///
/// Uses `Pr(|T| ≥ t) = I_{dof/(dof+t²)}(dof/2, 1/2)`.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_nan() || dof <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    beta_reg(dof / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `logit(Φ(z))`, accurate in both tails.
///
/// Maps a standard normal draw to a standard logistic draw with the same
/// quantile.
pub fn normal_to_logistic(z: f64) -> f64 {
    let lower = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let upper = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    lower.ln() - upper.ln()
}
