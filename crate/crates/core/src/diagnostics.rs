//! Assessment of the identifying assumptions on crossover data.
//!
//! A crossover trial observes both `A(0)` and `A(1)` for every completer, so
//! assumptions that are untestable in a parallel trial become checkable:
//! monotonicity by counting, principal ignorability by regression, and
//! cross-world stratum independence by comparing observed joint cells with
//! their model-implied values.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    classify_strata, completer_filter, Arm, CompleterRequirement, CrossoverData, Dataset, Sequence, StratumLabel,
    StratumTable, SubjectRecord,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate_stratum_probs, ProbMethod, StratumProbEstimate};
use crate::glm::{fit_ols, DesignMatrix};
use crate::resampling::{resample_indices, sample_sd, stream_rng, stream_seed, BootstrapSpec, MAX_FAILURE_FRACTION};
use crate::scalar::{count, lit, to_f64, Real};
use crate::special::student_t_two_sided;

/// Direction of the monotonicity assumption being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonotonicityDirection {
    /// `A(1) ≥ A(0)`: forbids `S_10`.
    IncreasingA1geA0,
    /// `A(1) ≤ A(0)`: forbids `S_01`.
    DecreasingA1leA0,
    /// `A(1) = A(0)`: forbids both.
    Equality,
}

impl MonotonicityDirection {
    pub fn forbidden(self) -> Vec<StratumLabel> {
        match self {
            MonotonicityDirection::IncreasingA1geA0 => vec![StratumLabel::Joint(1, 0)],
            MonotonicityDirection::DecreasingA1leA0 => vec![StratumLabel::Joint(0, 1)],
            MonotonicityDirection::Equality => vec![StratumLabel::Joint(0, 1), StratumLabel::Joint(1, 0)],
        }
    }
}

impl fmt::Display for MonotonicityDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonotonicityDirection::IncreasingA1geA0 => "A(1) >= A(0)",
            MonotonicityDirection::DecreasingA1leA0 => "A(1) <= A(0)",
            MonotonicityDirection::Equality => "A(1) = A(0)",
        })
    }
}

impl FromStr for MonotonicityDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "increasing" => Ok(MonotonicityDirection::IncreasingA1geA0),
            "decreasing" => Ok(MonotonicityDirection::DecreasingA1leA0),
            "equality" => Ok(MonotonicityDirection::Equality),
            other => {
                Err(Error::InvalidArgument(format!("unknown direction {other:?} (increasing, decreasing, equality)")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport<T> {
    pub table: StratumTable<T>,
    pub direction: MonotonicityDirection,
    pub violating_cells: Vec<StratumLabel>,
    pub violating_cell_proportion: T,
    pub verdict_note: String,
}

/// Cross-tabulates subjects with both indicators and reports the mass in the
/// cells the chosen direction forbids.
pub fn monotonicity_report<T: Real>(
    records: &[SubjectRecord<T>],
    direction: MonotonicityDirection,
) -> Result<MonotonicityReport<T>> {
    let kept = completer_filter(records, CompleterRequirement::StratumVarBothArms);
    if kept.is_empty() {
        return Err(Error::InsufficientData("no subjects with the stratum variable in both periods".into()));
    }
    let table = classify_strata::<T>(&kept)?;
    let cells = direction.forbidden();
    let violating = table.proportion_sum(&cells);
    let names: Vec<String> = cells.iter().map(ToString::to_string).collect();
    let verdict_note = format!(
        "{} of {} subjects ({:.1}%) fall in {}, which {} requires to be empty",
        cells.iter().map(|&c| table.count(c)).sum::<usize>(),
        table.n_total,
        100.0 * to_f64(violating),
        names.join(" and "),
        direction
    );
    Ok(MonotonicityReport {
        table,
        direction,
        violating_cells: cells,
        violating_cell_proportion: violating,
        verdict_note,
    })
}

/// One `Y(t) ~ A(s) + X + period` regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnorabilityRow<T> {
    /// Arm whose outcome is the response.
    pub outcome_arm: Arm,
    /// Arm whose stratum indicator is the regressor.
    pub indicator_arm: Arm,
    pub coefficient: T,
    pub se: T,
    pub p_value: T,
    /// Fitted outcome at `A = 0`, mean covariates and period indicator 0.5.
    pub adjusted_mean_a0: T,
    /// Same at `A = 1`.
    pub adjusted_mean_a1: T,
    pub n: usize,
}

impl<T> IgnorabilityRow<T> {
    pub fn is_own_arm(&self) -> bool {
        self.outcome_arm == self.indicator_arm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnorabilityReport<T> {
    pub covariates: Vec<String>,
    /// `Y(0)~A(0)`, `Y(1)~A(1)`, `Y(0)~A(1)`, `Y(1)~A(0)`.
    pub rows: Vec<IgnorabilityRow<T>>,
}

impl<T> IgnorabilityReport<T> {
    pub fn row(&self, outcome_arm: Arm, indicator_arm: Arm) -> Option<&IgnorabilityRow<T>> {
        self.rows.iter().find(|r| r.outcome_arm == outcome_arm && r.indicator_arm == indicator_arm)
    }
}

/// Within- and cross-arm outcome-on-indicator regressions, adjusted for the
/// chosen covariates and a period-2 indicator.
pub fn ignorability_regressions<T: Real>(
    data: &CrossoverData<T>,
    covariates: &[usize],
) -> Result<IgnorabilityReport<T>> {
    let records = completer_filter(&data.records, CompleterRequirement::Both);
    let n = records.len();
    let pairs = [
        (Arm::Control, Arm::Control),
        (Arm::Experimental, Arm::Experimental),
        (Arm::Control, Arm::Experimental),
        (Arm::Experimental, Arm::Control),
    ];
    let mut rows = Vec::with_capacity(4);
    for (outcome_arm, indicator_arm) in pairs {
        let a: Vec<T> =
            records.iter().map(|r| if r.a(indicator_arm).unwrap() { T::one() } else { T::zero() }).collect();
        let mut columns = vec![(format!("A({})", indicator_arm.index()), a)];
        for &j in covariates {
            let name = data
                .covariate_names
                .get(j)
                .ok_or(Error::DimensionMismatch { expected: data.covariate_names.len(), got: j + 1 })?;
            columns.push((format!("x_{name}"), records.iter().map(|r| r.covariates()[j]).collect()));
        }
        columns.push((
            "period2".to_string(),
            records.iter().map(|r| if r.period_of(outcome_arm) == 1 { T::one() } else { T::zero() }).collect(),
        ));
        let y: Vec<T> = records.iter().map(|r| r.y(outcome_arm).unwrap()).collect();
        let design = DesignMatrix::with_intercept(n, columns)?;
        let fit = fit_ols(&design, &y)?;

        let mut at = design.column_means();
        let q = at.len();
        at[q - 1] = lit(0.5);
        at[1] = T::zero();
        let adjusted_mean_a0 = fit.predict(&at);
        at[1] = T::one();
        let adjusted_mean_a1 = fit.predict(&at);
        rows.push(IgnorabilityRow {
            outcome_arm,
            indicator_arm,
            coefficient: fit.coefficients[1],
            se: fit.standard_errors[1],
            p_value: fit.p_values[1],
            adjusted_mean_a0,
            adjusted_mean_a1,
            n,
        });
    }
    Ok(IgnorabilityReport { covariates: covariates.iter().map(|&j| data.covariate_names[j].clone()).collect(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport<T> {
    pub observed: StratumProbEstimate<T>,
    pub estimated: StratumProbEstimate<T>,
    /// Largest absolute cell difference.
    pub discrepancy: T,
    /// Sum of squared cell differences.
    pub ssd: T,
    pub p_value: T,
    pub n_bootstrap: usize,
    /// Resamples redrawn because a principal-score fit failed.
    pub n_redrawn: usize,
    pub n_subjects: usize,
}

fn cell_gaps<T: Real>(obs: &[T; 4], est: &[T; 4]) -> [T; 4] {
    [0, 1, 2, 3].map(|c| obs[c] - est[c])
}

fn linf<T: Real>(v: &[T; 4]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Compares observed joint cells with those implied by cross-world
/// independence (conditional or unconditional).
///
/// The bootstrap distribution is centred: each resample's gap vector is
/// compared to the full-data gap vector, so the p-value measures how unusual
/// the observed discrepancy is under resampling variability around a model
/// that fits exactly.
pub fn independence_test<T: Real>(
    data: &CrossoverData<T>,
    covariates: &[usize],
    spec: &BootstrapSpec,
    method: ProbMethod,
) -> Result<IndependenceReport<T>> {
    if method == ProbMethod::Observed {
        return Err(Error::InvalidArgument("independence test compares against a model-based estimate".into()));
    }
    let records = completer_filter(&data.records, CompleterRequirement::StratumVarBothArms);
    let n = records.len();
    if n == 0 {
        return Err(Error::InsufficientData("no subjects with the stratum variable in both periods".into()));
    }
    let names = &data.covariate_names;
    let estimate = |recs: Vec<SubjectRecord<T>>| -> Result<(StratumProbEstimate<T>, StratumProbEstimate<T>)> {
        let ds = Dataset::Crossover(CrossoverData { covariate_names: names.clone(), records: recs });
        Ok((
            estimate_stratum_probs(&ds, ProbMethod::Observed, covariates)?,
            estimate_stratum_probs(&ds, method, covariates)?,
        ))
    };
    let (observed, estimated) = estimate(records.clone())?;
    let gap = cell_gaps(&observed.probs, &estimated.probs);
    let discrepancy = linf(&gap);
    let ssd = gap.iter().fold(T::zero(), |acc, &g| acc + g * g);

    if spec.n_resamples < 20 {
        log::warn!("only {} bootstrap resamples for the independence test", spec.n_resamples);
    }
    let max_redraws = (MAX_FAILURE_FRACTION * spec.n_resamples as f64).floor() as usize;
    let draws: Vec<Result<([T; 4], [T; 4], usize)>> = (0..spec.n_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let base = stream_seed(spec.seed, b);
            let mut last_error = None;
            for attempt in 0..=max_redraws as u64 {
                let mut rng = stream_rng(base, attempt);
                let sample = resample_indices(n, &mut rng).into_iter().map(|i| records[i].clone()).collect();
                match estimate(sample) {
                    Ok((o, e)) => return Ok((o.probs, e.probs, attempt as usize)),
                    Err(e) => last_error = Some(e),
                }
            }
            Err(last_error.expect("at least one attempt"))
        })
        .collect();

    let mut redrawn = 0;
    let mut stats = Vec::with_capacity(draws.len());
    let mut obs_reps = Vec::with_capacity(draws.len());
    let mut est_reps = Vec::with_capacity(draws.len());
    for d in draws {
        match d {
            Ok((o, e, retries)) => {
                redrawn += retries;
                let g = cell_gaps(&o, &e);
                stats.push(linf(&[0, 1, 2, 3].map(|c| g[c] - gap[c])));
                obs_reps.push(o);
                est_reps.push(e);
            }
            Err(e) => {
                return Err(Error::Bootstrap(format!("principal-score fits failed on too many resamples: {e}")));
            }
        }
        if redrawn > max_redraws {
            return Err(Error::Bootstrap(format!(
                "principal-score fits failed on {redrawn} resamples (limit {max_redraws} of {})",
                spec.n_resamples
            )));
        }
    }
    let tol: T = lit::<T>(1e-12) * (T::one() + discrepancy);
    let hits = stats.iter().filter(|&&s| s >= discrepancy - tol).count();
    let p_value = count::<T>(hits + 1) / count::<T>(spec.n_resamples + 1);

    let se_of = |reps: &[[T; 4]]| [0, 1, 2, 3].map(|c| sample_sd(&reps.iter().map(|r| r[c]).collect::<Vec<_>>()));
    Ok(IndependenceReport {
        observed: StratumProbEstimate { se: Some(se_of(&obs_reps)), ..observed },
        estimated: StratumProbEstimate { se: Some(se_of(&est_reps)), ..estimated },
        discrepancy,
        ssd,
        p_value,
        n_bootstrap: spec.n_resamples,
        n_redrawn: redrawn,
        n_subjects: n,
    })
}

/// Pooled-variance two-sample t test of `mean(x) − mean(y)`, with estimate
/// and standard error scaled by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest<T> {
    pub estimate: T,
    pub se: T,
    pub t: T,
    pub dof: usize,
    pub p_value: T,
}

fn pooled_t<T: Real>(x: &[T], y: &[T], scale: T) -> TwoSampleTest<T> {
    let mean = |v: &[T]| v.iter().copied().sum::<T>() / count(v.len());
    let ss = |v: &[T], m: T| v.iter().fold(T::zero(), |acc, &u| acc + (u - m) * (u - m));
    let (mx, my) = (mean(x), mean(y));
    let dof = x.len() + y.len() - 2;
    let s2 = (ss(x, mx) + ss(y, my)) / count(dof);
    let se = (s2 * (T::one() / count::<T>(x.len()) + T::one() / count::<T>(y.len()))).sqrt();
    let diff = mx - my;
    let (t, p) = if se > T::zero() {
        let t = diff / se;
        (t, lit(student_t_two_sided(to_f64(t), dof as f64)))
    } else if diff == T::zero() {
        (T::zero(), T::one())
    } else {
        (T::infinity() * diff.signum(), T::zero())
    };
    TwoSampleTest { estimate: diff * scale, se: se * scale.abs(), t, dof, p_value: p }
}

/// Two-stage analysis of a 2×2 crossover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverEffectsReport<T> {
    pub n_control_first: usize,
    pub n_experimental_first: usize,
    /// Experimental minus control.
    pub treatment: TwoSampleTest<T>,
    /// Period 2 minus period 1.
    pub period: TwoSampleTest<T>,
    /// Difference of subject sums, control-first minus experimental-first (carry-over proxy).
    pub sequence: TwoSampleTest<T>,
}

impl<T: Real> CrossoverEffectsReport<T> {
    pub fn treatment_p(&self) -> T {
        self.treatment.p_value
    }
    pub fn period_p(&self) -> T {
        self.period.p_value
    }
    pub fn sequence_p(&self) -> T {
        self.sequence.p_value
    }
}

/// Treatment, period and sequence tests from within-subject differences and sums.
pub fn crossover_effects_test<T: Real>(records: &[SubjectRecord<T>]) -> Result<CrossoverEffectsReport<T>> {
    let kept = completer_filter(records, CompleterRequirement::OutcomeBothArms);
    let mut diffs = [Vec::new(), Vec::new()];
    let mut sums = [Vec::new(), Vec::new()];
    for r in &kept {
        let g = match r.sequence() {
            Sequence::ControlFirst => 0,
            Sequence::ExperimentalFirst => 1,
        };
        let [p1, p2] = r.periods();
        let (y1, y2) = (p1.y.unwrap(), p2.y.unwrap());
        diffs[g].push(y2 - y1);
        sums[g].push(y1 + y2);
    }
    for (g, seq) in [(0, Sequence::ControlFirst), (1, Sequence::ExperimentalFirst)] {
        if diffs[g].len() < 2 {
            return Err(Error::InsufficientData(format!(
                "sequence {} has {} complete subjects; at least 2 are needed",
                seq.code(),
                diffs[g].len()
            )));
        }
    }
    let half: T = lit(0.5);
    let negated: Vec<T> = diffs[1].iter().map(|&d| -d).collect();
    Ok(CrossoverEffectsReport {
        n_control_first: diffs[0].len(),
        n_experimental_first: diffs[1].len(),
        treatment: pooled_t(&diffs[0], &diffs[1], half),
        period: pooled_t(&diffs[0], &negated, half),
        sequence: pooled_t(&sums[0], &sums[1], T::one()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, seq: Sequence, a: [u8; 2], y: [f64; 2], x: f64) -> SubjectRecord<f64> {
        SubjectRecord::from_arms(id.to_string(), vec![x], seq, a.map(|v| Some(v == 1)), y.map(Some))
    }

    #[test]
    fn one_subject_per_cell() {
        let r: Vec<_> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .enumerate()
            .map(|(i, &a)| rec(i, Sequence::ControlFirst, a, [0.0, 0.0], 0.0))
            .collect();
        let inc = monotonicity_report(&r, MonotonicityDirection::IncreasingA1geA0).unwrap();
        assert_eq!(inc.violating_cell_proportion, 0.25);
        assert_eq!(inc.violating_cells, vec![StratumLabel::Joint(1, 0)]);
        let dec = monotonicity_report(&r, MonotonicityDirection::DecreasingA1leA0).unwrap();
        assert_eq!(dec.violating_cell_proportion, 0.25);
        let eq = monotonicity_report(&r, MonotonicityDirection::Equality).unwrap();
        assert_eq!(eq.violating_cell_proportion, 0.5);
    }

    #[test]
    fn concordant_subjects_never_violate_equality() {
        let r = vec![
            rec(0, Sequence::ControlFirst, [0, 0], [0.0, 0.0], 0.0),
            rec(1, Sequence::ControlFirst, [1, 1], [0.0, 0.0], 0.0),
        ];
        assert_eq!(monotonicity_report(&r, MonotonicityDirection::Equality).unwrap().violating_cell_proportion, 0.0);
    }

    #[test]
    fn direction_parses() {
        assert_eq!("increasing".parse::<MonotonicityDirection>().unwrap(), MonotonicityDirection::IncreasingA1geA0);
        assert!("sideways".parse::<MonotonicityDirection>().is_err());
    }

    #[test]
    fn grizzle_recovers_planted_effects() {
        // Y = 10 + 3·[experimental] + 2·[period 2] + subject effect, no noise beyond that
        let mut r = Vec::new();
        for i in 0..6 {
            let u = i as f64;
            r.push(rec(i, Sequence::ControlFirst, [0, 0], [10.0 + u, 15.0 + u], 0.0));
            r.push(rec(10 + i, Sequence::ExperimentalFirst, [0, 0], [12.0 + u * 0.5, 13.0 + u * 0.5], 0.0));
        }
        let rep = crossover_effects_test(&r).unwrap();
        assert!((rep.treatment.estimate - 3.0).abs() < 1e-12);
        assert!((rep.period.estimate - 2.0).abs() < 1e-12);
        assert_eq!(rep.treatment_p(), 0.0);
        assert_eq!(rep.n_control_first, 6);
    }

    #[test]
    fn crossover_test_needs_two_per_sequence() {
        let r = vec![
            rec(0, Sequence::ControlFirst, [0, 0], [1.0, 2.0], 0.0),
            rec(1, Sequence::ControlFirst, [0, 0], [1.0, 3.0], 0.0),
            rec(2, Sequence::ExperimentalFirst, [0, 0], [1.0, 2.0], 0.0),
        ];
        assert!(matches!(crossover_effects_test(&r), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pooled_t_matches_reference() {
        // scipy.stats.ttest_ind([1,2,3,4],[2,4,6,9])
        let t = pooled_t(&[1.0f64, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 9.0], 1.0);
        assert!((t.t + 1.690641214609248).abs() < 1e-12);
        assert!((t.p_value - 0.14186036028585047).abs() < 1e-10);
        assert_eq!(t.dof, 6);
    }
}
