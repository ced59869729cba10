//! Principal causal effect estimation.
//!
//! Two routes to the stratum means `μ_{t,kl} = E{Y(t) | S_kl}`:
//!
//! * **PS** (principal score weighting). Each arm's principal score
//!   `g(x, t) = Pr{A(t) = 1 | X = x}` is fitted by logistic regression on that
//!   arm's data alone. The arm-0 mean of stratum `S_kl` is the average of
//!   `Y(0)` over arm-0 subjects with `A(0) = k`, each weighted by the
//!   Bernoulli mass `g1^l (1 − g1)^(1−l)` of the unobserved cross-world
//!   indicator; symmetrically for arm 1. Subjects are never paired, so the
//!   estimator runs unchanged on parallel-trial data. Valid under cross-world
//!   principal ignorability together with conditional cross-world stratum
//!   independence.
//! * **DIRECT**. With crossover data both indicators are observed, so the
//!   stratum is known and `μ_{t,kl}` is a plain average.
//!
//! Differences are reported as experimental minus control, `μ_1 − μ_0`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    classify_strata, completer_filter, select_covariates, Arm, CompleterRequirement, CrossoverData, Dataset,
    ParallelData, ParallelObservation, StratumLabel, SubjectRecord,
};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, DesignMatrix, LogisticFit, INTERCEPT};
use crate::resampling::{bootstrap_many, BootstrapResult, BootstrapSpec};
use crate::scalar::{count, expit, lit, Real};

/// Principal scores are clipped into `[SCORE_CLIP, 1 − SCORE_CLIP]` before weighting.
pub const SCORE_CLIP: f64 = 1e-12;

/// Estimation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "DIRECT")]
    Direct,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ps => "PS",
            Method::Direct => "DIRECT",
        })
    }
}

/// Which routes [`estimate_pce_table`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodSelection {
    Ps,
    Direct,
    Both,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Ps => vec![Method::Ps],
            MethodSelection::Direct => vec![Method::Direct],
            MethodSelection::Both => vec![Method::Direct, Method::Ps],
        }
    }
}

impl FromStr for MethodSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ps" => Ok(MethodSelection::Ps),
            "direct" => Ok(MethodSelection::Direct),
            "both" => Ok(MethodSelection::Both),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?} (ps, direct, both)"))),
        }
    }
}

/// Column of a PCE table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Contrast {
    /// Control-arm mean `μ_0`.
    Arm0,
    /// Experimental-arm mean `μ_1`.
    Arm1,
    /// `μ_1 − μ_0`.
    Diff,
}

impl Contrast {
    pub const ALL: [Contrast; 3] = [Contrast::Arm0, Contrast::Arm1, Contrast::Diff];
}

/// Logistic principal-score model for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalScoreModel<T> {
    pub arm: Arm,
    pub fit: LogisticFit<T>,
    pub covariate_names: Vec<String>,
    /// Positions of the model's covariates within a record's covariate vector.
    pub covariate_indices: Vec<usize>,
}

impl<T: Real> PrincipalScoreModel<T> {
    /// Wraps a fit; non-converged fits are rejected.
    pub fn new(
        arm: Arm,
        fit: LogisticFit<T>,
        covariate_names: Vec<String>,
        covariate_indices: Vec<usize>,
    ) -> Result<Self> {
        if !fit.converged {
            return Err(Error::NotConverged(format!(
                "principal score for arm {arm}: {:?} after {} iterations",
                fit.failure, fit.iterations
            )));
        }
        if fit.coefficients.len() != covariate_indices.len() + 1 || covariate_names.len() != covariate_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: covariate_indices.len() + 1,
                got: fit.coefficients.len(),
            });
        }
        Ok(Self { arm, fit, covariate_names, covariate_indices })
    }

    /// Intercept-only model with score `g` everywhere.
    pub fn constant(arm: Arm, g: T) -> Result<Self> {
        if !(g > T::zero() && g < T::one()) {
            return Err(Error::InvalidArgument(format!("constant score must lie in (0,1), got {g}")));
        }
        let fit = LogisticFit {
            names: vec![INTERCEPT.to_string()],
            coefficients: vec![(g / (T::one() - g)).ln()],
            converged: true,
            iterations: 0,
            final_gradient_norm: T::zero(),
            deviance: T::zero(),
            failure: None,
            deviance_trace: vec![],
        };
        Self::new(arm, fit, vec![], vec![])
    }

    /// Raw `expit(α_0 + α_1ᵀx)` for a record's full covariate vector.
    pub fn raw_score(&self, covariates: &[T]) -> T {
        let c = &self.fit.coefficients;
        let eta = self.covariate_indices.iter().zip(&c[1..]).fold(c[0], |acc, (&j, &b)| acc + b * covariates[j]);
        expit(eta)
    }

    /// Score clipped into `[SCORE_CLIP, 1 − SCORE_CLIP]`.
    pub fn score(&self, covariates: &[T]) -> T {
        let lo: T = lit(SCORE_CLIP);
        self.raw_score(covariates).max(lo).min(T::one() - lo)
    }
}

/// Fits the principal score of the arm the observations belong to.
///
/// Uses only that arm's rows with a recorded stratum indicator.
pub fn fit_principal_score<T: Real>(
    obs: &[ParallelObservation<T>],
    covariate_names: &[String],
    covariates: &[usize],
) -> Result<PrincipalScoreModel<T>> {
    let arm = obs
        .first()
        .map(|o| o.arm)
        .ok_or_else(|| Error::InsufficientData("no observations for principal score".into()))?;
    if obs.iter().any(|o| o.arm != arm) {
        return Err(Error::InvalidArgument("principal score observations mix arms".into()));
    }
    let rows: Vec<&ParallelObservation<T>> = obs.iter().filter(|o| o.a.is_some()).collect();
    let a: Vec<bool> = rows.iter().map(|o| o.a.unwrap()).collect();
    let columns = covariates
        .iter()
        .map(|&j| {
            let name = covariate_names
                .get(j)
                .ok_or(Error::DimensionMismatch { expected: covariate_names.len(), got: j + 1 })?;
            Ok((format!("x_{name}"), rows.iter().map(|o| o.covariates[j]).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let design = DesignMatrix::with_intercept(rows.len(), columns)?;
    let fit = fit_logistic(&design, &a)?;
    let names = covariates.iter().map(|&j| covariate_names[j].clone()).collect();
    let model = PrincipalScoreModel::new(arm, fit, names, covariates.to_vec())?;

    let extreme = rows
        .iter()
        .filter(|o| {
            let g = model.raw_score(&o.covariates);
            g < lit(0.001) || g > lit(0.999)
        })
        .count();
    if 2 * extreme > rows.len() {
        log::warn!(
            "principal score for arm {arm}: {extreme} of {} fitted probabilities outside [0.001, 0.999]",
            rows.len()
        );
    }
    Ok(model)
}

/// Bernoulli mass `g^l (1 − g)^(1 − l)` of the cross-world stratum indicator.
pub fn hayden_weight<T: Real>(g: T, l: u8) -> Result<T> {
    if !(g > T::zero() && g < T::one()) {
        return Err(Error::InvalidArgument(format!("principal score must lie in (0,1), got {g}")));
    }
    match l {
        0 => Ok(T::one() - g),
        1 => Ok(g),
        _ => Err(Error::InvalidArgument(format!("stratum index must be 0 or 1, got {l}"))),
    }
}

fn own_and_cross(stratum: StratumLabel, arm: Arm) -> Result<(u8, u8)> {
    match stratum {
        StratumLabel::Joint(k, l) => Ok(match arm {
            Arm::Control => (k, l),
            Arm::Experimental => (l, k),
        }),
        other => Err(Error::InvalidArgument(format!("expected a joint stratum, got {other}"))),
    }
}

/// Principal-score weighted mean of `Y(t)` in a joint stratum, from arm-`t`
/// observations and the *other* arm's principal-score model.
///
/// Rows with a missing indicator or outcome are skipped.
pub fn estimate_mu_hayden<T: Real>(
    obs: &[ParallelObservation<T>],
    other_arm_ps: &PrincipalScoreModel<T>,
    stratum: StratumLabel,
) -> Result<T> {
    let arm = other_arm_ps.arm.other();
    let (own, cross) = own_and_cross(stratum, arm)?;
    let mut num = T::zero();
    let mut den = T::zero();
    let mut members = 0usize;
    for o in obs {
        if o.arm != arm {
            return Err(Error::InvalidArgument(format!(
                "observation {} is from arm {}, expected arm {arm}",
                o.subject_id, o.arm
            )));
        }
        let (Some(a), Some(y)) = (o.a, o.y) else { continue };
        if a as u8 != own {
            continue;
        }
        let w = hayden_weight(other_arm_ps.score(&o.covariates), cross)?;
        num = num + y * w;
        den = den + w;
        members += 1;
    }
    if members == 0 {
        return Err(Error::Inestimable { stratum, reason: format!("no arm-{arm} observations with A({arm}) = {own}") });
    }
    if !(den > T::zero()) {
        return Err(Error::Inestimable { stratum, reason: "total principal-score weight is zero".into() });
    }
    Ok(num / den)
}

/// Plain mean of `Y(t)` over crossover subjects observed in `stratum`.
pub fn estimate_mu_direct<T: Real>(records: &[SubjectRecord<T>], stratum: StratumLabel, arm: Arm) -> Result<T> {
    if !matches!(stratum, StratumLabel::Joint(..)) {
        return Err(Error::InvalidArgument(format!("expected a joint stratum, got {stratum}")));
    }
    let mut sum = T::zero();
    let mut n = 0usize;
    for r in records {
        let s = r.stratum().ok_or_else(|| Error::MissingStratumVariable { subject: r.subject_id().to_string() })?;
        if s != stratum {
            continue;
        }
        let y = r.y(arm).ok_or_else(|| Error::MissingOutcome { subject: r.subject_id().to_string() })?;
        sum = sum + y;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Inestimable { stratum, reason: "no subjects observed in this stratum".into() });
    }
    Ok(sum / count(n))
}

/// Stratum probability estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbMethod {
    /// Crossover proportions.
    Observed,
    /// Average over subjects of the product of the two arms' principal scores.
    CondIndepA4p,
    /// Product of the two arms' marginal rates.
    IndepA4pp,
}

impl fmt::Display for ProbMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbMethod::Observed => "observed",
            ProbMethod::CondIndepA4p => "conditional independence",
            ProbMethod::IndepA4pp => "unconditional independence",
        })
    }
}

/// Cell probabilities in `S_00, S_01, S_10, S_11` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumProbEstimate<T> {
    pub method: ProbMethod,
    pub probs: [T; 4],
    pub se: Option<[T; 4]>,
}

impl<T: Real> StratumProbEstimate<T> {
    pub fn prob(&self, stratum: StratumLabel) -> T {
        stratum.constituents().iter().fold(T::zero(), |acc, s| acc + self.probs[s.joint_index().unwrap()])
    }
}

/// `n⁻¹ Σ_j g0^k (1−g0)^(1−k) g1^l (1−g1)^(1−l)` over the given covariate vectors.
pub fn cond_indep_probs<T: Real>(
    covariates: &[&[T]],
    ps0: &PrincipalScoreModel<T>,
    ps1: &PrincipalScoreModel<T>,
) -> Result<[T; 4]> {
    if covariates.is_empty() {
        return Err(Error::InsufficientData("no subjects to average principal scores over".into()));
    }
    let mut probs = [T::zero(); 4];
    for x in covariates {
        let (g0, g1) = (ps0.score(x), ps1.score(x));
        for s in StratumLabel::JOINT {
            let StratumLabel::Joint(k, l) = s else { unreachable!() };
            let c = s.joint_index().unwrap();
            probs[c] = probs[c] + hayden_weight(g0, k)? * hayden_weight(g1, l)?;
        }
    }
    let n = count::<T>(covariates.len());
    Ok(probs.map(|p| p / n))
}

fn arm_rate<T: Real>(obs: &[ParallelObservation<T>]) -> Result<T> {
    let known: Vec<bool> = obs.iter().filter_map(|o| o.a).collect();
    if known.is_empty() {
        return Err(Error::InsufficientData("no recorded stratum indicators in arm".into()));
    }
    Ok(count::<T>(known.iter().filter(|&&a| a).count()) / count::<T>(known.len()))
}

fn subject_covariates<T: Real>(dataset: &Dataset<T>) -> Vec<&[T]> {
    match dataset {
        Dataset::Crossover(d) => d.records.iter().map(|r| r.covariates()).collect(),
        Dataset::Parallel(d) => {
            let mut seen = std::collections::HashSet::new();
            d.observations
                .iter()
                .filter(|o| seen.insert(o.subject_id.as_str()))
                .map(|o| o.covariates.as_slice())
                .collect()
        }
    }
}

/// Fits both arms' principal scores without pairing.
pub fn fit_both_scores<T: Real>(
    dataset: &Dataset<T>,
    covariates: &[usize],
) -> Result<(PrincipalScoreModel<T>, PrincipalScoreModel<T>)> {
    let names = dataset.covariate_names();
    let ps0 = fit_principal_score(&dataset.arm_observations(Arm::Control), names, covariates)?;
    let ps1 = fit_principal_score(&dataset.arm_observations(Arm::Experimental), names, covariates)?;
    Ok((ps0, ps1))
}

/// Estimates the four joint stratum probabilities.
///
/// Crossover data are first restricted to subjects with both indicators so
/// every method sees the same subjects; `Observed` requires crossover data.
pub fn estimate_stratum_probs<T: Real>(
    dataset: &Dataset<T>,
    method: ProbMethod,
    covariates: &[usize],
) -> Result<StratumProbEstimate<T>> {
    let restricted;
    let dataset = match dataset {
        Dataset::Crossover(d) => {
            restricted = Dataset::Crossover(CrossoverData {
                covariate_names: d.covariate_names.clone(),
                records: completer_filter(&d.records, CompleterRequirement::StratumVarBothArms),
            });
            &restricted
        }
        Dataset::Parallel(_) => dataset,
    };
    let probs = match method {
        ProbMethod::Observed => match dataset {
            Dataset::Crossover(d) => {
                if d.records.is_empty() {
                    return Err(Error::InsufficientData("no crossover subjects with both indicators".into()));
                }
                classify_strata(&d.records)?.proportions
            }
            Dataset::Parallel(_) => {
                return Err(Error::InvalidArgument("observed stratum proportions require crossover data".into()))
            }
        },
        ProbMethod::CondIndepA4p => {
            let (ps0, ps1) = fit_both_scores(dataset, covariates)?;
            cond_indep_probs(&subject_covariates(dataset), &ps0, &ps1)?
        }
        ProbMethod::IndepA4pp => {
            let p0 = arm_rate(&dataset.arm_observations(Arm::Control))?;
            let p1 = arm_rate(&dataset.arm_observations(Arm::Experimental))?;
            let one = T::one();
            [(one - p0) * (one - p1), (one - p0) * p1, p0 * (one - p1), p0 * p1]
        }
    };
    Ok(StratumProbEstimate { method, probs, se: None })
}

/// Probability-weighted combination of the two joint-cell means forming a
/// marginal stratum, weights `Pr(S_kl) / Pr(S_k*)`.
///
/// `mu_joint` holds one arm's joint-cell means in `S_00..S_11` order.
pub fn combine_marginal<T: Real>(
    mu_joint: &[Option<T>; 4],
    probs: &StratumProbEstimate<T>,
    marginal: StratumLabel,
) -> Result<T> {
    let parts = marginal.constituents();
    let total = probs.prob(marginal);
    if !(total > T::zero()) {
        return Err(Error::Inestimable { stratum: marginal, reason: "zero marginal probability".into() });
    }
    let mut acc = T::zero();
    for s in parts {
        let i = s.joint_index().unwrap();
        let mu = mu_joint[i].ok_or_else(|| Error::Inestimable {
            stratum: marginal,
            reason: format!("constituent {s} is inestimable"),
        })?;
        acc = acc + probs.probs[i] * mu;
    }
    Ok(acc / total)
}

/// Options for [`estimate_pce_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct PceConfig {
    pub methods: MethodSelection,
    /// Covariate names for the principal scores; `None` uses all.
    pub covariates: Option<Vec<String>>,
    pub bootstrap: Option<BootstrapSpec>,
}

impl Default for PceConfig {
    fn default() -> Self {
        Self { methods: MethodSelection::Both, covariates: None, bootstrap: None }
    }
}

/// One cell of a PCE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary<T> {
    pub stratum: StratumLabel,
    pub arm_or_contrast: Contrast,
    pub point: T,
    pub se: Option<T>,
    pub ci95: Option<(T, T)>,
    pub method: Method,
    /// Resamples on which this quantity was estimable.
    pub n_effective: Option<usize>,
    /// Why no interval is attached, when bootstrapping was requested but failed.
    pub note: Option<String>,
}

/// Estimates for one stratum by one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PceCell<T> {
    Estimated { arm0: EstimateSummary<T>, arm1: EstimateSummary<T>, diff: EstimateSummary<T> },
    Inestimable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceRow<T> {
    pub stratum: StratumLabel,
    pub method: Method,
    /// Observed stratum size (crossover data only).
    pub n_stratum: Option<usize>,
    pub cell: PceCell<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceTable<T> {
    /// Subjects (crossover) or observations (parallel) entering the analysis.
    pub n_subjects: usize,
    pub covariates: Vec<String>,
    pub confidence: Option<f64>,
    pub n_resamples: Option<usize>,
    pub rows: Vec<PceRow<T>>,
}

impl<T: Real> PceTable<T> {
    pub fn row(&self, stratum: StratumLabel, method: Method) -> Option<&PceRow<T>> {
        self.rows.iter().find(|r| r.stratum == stratum && r.method == method)
    }

    /// Diff point estimate, when estimable.
    pub fn diff(&self, stratum: StratumLabel, method: Method) -> Option<T> {
        match &self.row(stratum, method)?.cell {
            PceCell::Estimated { diff, .. } => Some(diff.point),
            PceCell::Inestimable { .. } => None,
        }
    }

    pub fn summary(&self, stratum: StratumLabel, method: Method, c: Contrast) -> Option<&EstimateSummary<T>> {
        match &self.row(stratum, method)?.cell {
            PceCell::Estimated { arm0, arm1, diff } => Some(match c {
                Contrast::Arm0 => arm0,
                Contrast::Arm1 => arm1,
                Contrast::Diff => diff,
            }),
            PceCell::Inestimable { .. } => None,
        }
    }
}

/// Stratum-major points `[μ0, μ1, μ1 − μ0]` per joint stratum.
///
/// `Err` when the method cannot run at all (e.g. a principal-score fit fails);
/// inner `Err` for a stratum that is inestimable.
type MethodPoints<T> = Vec<std::result::Result<[T; 3], String>>;

fn ps_points<T: Real>(dataset: &Dataset<T>, covariates: &[usize]) -> Result<MethodPoints<T>> {
    let (ps0, ps1) = fit_both_scores(dataset, covariates)?;
    let obs0 = dataset.arm_observations(Arm::Control);
    let obs1 = dataset.arm_observations(Arm::Experimental);
    Ok(StratumLabel::JOINT
        .iter()
        .map(|&s| {
            let m0 = estimate_mu_hayden(&obs0, &ps1, s).map_err(|e| e.to_string())?;
            let m1 = estimate_mu_hayden(&obs1, &ps0, s).map_err(|e| e.to_string())?;
            Ok([m0, m1, m1 - m0])
        })
        .collect())
}

fn direct_points<T: Real>(records: &[SubjectRecord<T>]) -> MethodPoints<T> {
    StratumLabel::JOINT
        .iter()
        .map(|&s| {
            let m0 = estimate_mu_direct(records, s, Arm::Control).map_err(|e| e.to_string())?;
            let m1 = estimate_mu_direct(records, s, Arm::Experimental).map_err(|e| e.to_string())?;
            Ok([m0, m1, m1 - m0])
        })
        .collect()
}

fn method_points<T: Real>(dataset: &Dataset<T>, method: Method, covariates: &[usize]) -> Result<MethodPoints<T>> {
    match method {
        Method::Ps => ps_points(dataset, covariates),
        Method::Direct => match dataset {
            Dataset::Crossover(d) => Ok(direct_points(&d.records)),
            Dataset::Parallel(_) => Err(Error::InvalidArgument("direct estimator requires crossover data".into())),
        },
    }
}

fn flatten<T: Real>(points: &Result<MethodPoints<T>>) -> Vec<Option<T>> {
    match points {
        Ok(p) => p
            .iter()
            .flat_map(|cell| match cell {
                Ok(v) => v.map(Some),
                Err(_) => [None; 3],
            })
            .collect(),
        Err(_) => vec![None; 12],
    }
}

/// Resampling unit: a crossover subject, or all parallel rows sharing a subject id.
#[derive(Debug, Clone)]
enum Unit<T> {
    Subject(SubjectRecord<T>),
    Group(Vec<ParallelObservation<T>>),
}

fn units_of<T: Real>(dataset: &Dataset<T>) -> Vec<Unit<T>> {
    match dataset {
        Dataset::Crossover(d) => d.records.iter().cloned().map(Unit::Subject).collect(),
        Dataset::Parallel(d) => {
            let mut groups: BTreeMap<&str, Vec<ParallelObservation<T>>> = BTreeMap::new();
            let mut order = Vec::new();
            for o in &d.observations {
                let e = groups.entry(o.subject_id.as_str()).or_default();
                if e.is_empty() {
                    order.push(o.subject_id.as_str());
                }
                e.push(o.clone());
            }
            order.into_iter().map(|id| Unit::Group(groups.remove(id).unwrap())).collect()
        }
    }
}

fn rebuild<T: Real>(names: &[String], crossover: bool, units: &[Unit<T>]) -> Dataset<T> {
    if crossover {
        Dataset::Crossover(CrossoverData {
            covariate_names: names.to_vec(),
            records: units
                .iter()
                .map(|u| match u {
                    Unit::Subject(r) => r.clone(),
                    Unit::Group(_) => unreachable!("crossover units are subjects"),
                })
                .collect(),
        })
    } else {
        Dataset::Parallel(ParallelData {
            covariate_names: names.to_vec(),
            observations: units
                .iter()
                .flat_map(|u| match u {
                    Unit::Group(g) => g.clone(),
                    Unit::Subject(_) => unreachable!("parallel units are groups"),
                })
                .collect(),
        })
    }
}

/// Builds the per-stratum table of arm means and differences.
///
/// Crossover input is restricted to subjects with both indicators and both
/// outcomes, so PS and DIRECT rows describe the same subjects. With a
/// bootstrap spec, subjects are resampled whole and the entire pipeline
/// (including principal-score fits) is rerun on every resample.
pub fn estimate_pce_table<T: Real>(dataset: &Dataset<T>, config: &PceConfig) -> Result<PceTable<T>> {
    let names = dataset.covariate_names().to_vec();
    let cov_idx = select_covariates(&names, config.covariates.as_deref())?;
    let methods = config.methods.methods();
    if methods.contains(&Method::Direct) && !dataset.is_crossover() {
        return Err(Error::InvalidArgument("direct estimator requires crossover data".into()));
    }
    let analysed = match dataset {
        Dataset::Crossover(d) => Dataset::Crossover(CrossoverData {
            covariate_names: names.clone(),
            records: completer_filter(&d.records, CompleterRequirement::Both),
        }),
        Dataset::Parallel(_) => dataset.clone(),
    };
    let n_subjects = match &analysed {
        Dataset::Crossover(d) => d.records.len(),
        Dataset::Parallel(d) => d.observations.len(),
    };
    let stratum_sizes = match &analysed {
        Dataset::Crossover(d) => Some(classify_strata::<T>(&d.records)?.counts),
        Dataset::Parallel(_) => None,
    };

    let points: Vec<Result<MethodPoints<T>>> = methods.iter().map(|&m| method_points(&analysed, m, &cov_idx)).collect();

    let boot: Option<Vec<Result<BootstrapResult<T>>>> = match &config.bootstrap {
        Some(spec) if points.iter().any(Result::is_ok) => {
            let units = units_of(&analysed);
            let crossover = analysed.is_crossover();
            let stat = |sample: &[Unit<T>]| -> Result<Vec<Option<T>>> {
                let ds = rebuild(&names, crossover, sample);
                Ok(methods.iter().flat_map(|&m| flatten(&method_points(&ds, m, &cov_idx))).collect())
            };
            Some(bootstrap_many(&units, stat, spec, false)?)
        }
        _ => None,
    };

    let mut rows = Vec::new();
    for (mi, (&method, pts)) in methods.iter().zip(&points).enumerate() {
        for (si, &stratum) in StratumLabel::JOINT.iter().enumerate() {
            let n_stratum = stratum_sizes.map(|c| c[si]);
            let cell = match pts {
                Err(e) => PceCell::Inestimable { reason: e.to_string() },
                Ok(p) => match &p[si] {
                    Err(reason) => PceCell::Inestimable { reason: reason.clone() },
                    Ok(vals) => {
                        let summary = |ci: usize| {
                            let mut s = EstimateSummary {
                                stratum,
                                arm_or_contrast: Contrast::ALL[ci],
                                point: vals[ci],
                                se: None,
                                ci95: None,
                                method,
                                n_effective: None,
                                note: None,
                            };
                            if let Some(b) = &boot {
                                match &b[mi * 12 + si * 3 + ci] {
                                    Ok(r) => {
                                        s.se = Some(r.se);
                                        s.ci95 = Some(r.ci);
                                        s.n_effective = Some(r.n_effective);
                                    }
                                    Err(e) => s.note = Some(e.to_string()),
                                }
                            }
                            s
                        };
                        PceCell::Estimated { arm0: summary(0), arm1: summary(1), diff: summary(2) }
                    }
                },
            };
            rows.push(PceRow { stratum, method, n_stratum, cell });
        }
    }
    Ok(PceTable {
        n_subjects,
        covariates: cov_idx.iter().map(|&j| names[j].clone()).collect(),
        confidence: config.bootstrap.map(|b| b.confidence),
        n_resamples: config.bootstrap.map(|b| b.n_resamples),
        rows,
    })
}
