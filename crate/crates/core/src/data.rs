//! Trial data model: crossover subjects, their parallel-trial view, and
//! principal strata.
//!
//! Arms are `t = 0` (control) and `t = 1` (experimental). A joint stratum
//! `S_kl` collects subjects with `A(0) = k` and `A(1) = l`; marginal strata
//! `S_k*` / `S_*l` fix only one of the two.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

const MISSING_OUT: &str = "NA";

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    /// `t = 0`.
    Control,
    /// `t = 1`.
    Experimental,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Experimental];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Experimental => 1,
        }
    }

    pub fn from_index(t: u8) -> Option<Arm> {
        match t {
            0 => Some(Arm::Control),
            1 => Some(Arm::Experimental),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Experimental,
            Arm::Experimental => Arm::Control,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Order in which a crossover subject received the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sequence {
    ControlFirst,
    ExperimentalFirst,
}

impl Sequence {
    pub fn code(self) -> &'static str {
        match self {
            Sequence::ControlFirst => "CF",
            Sequence::ExperimentalFirst => "EF",
        }
    }

    /// Arm given in period `q` (0-based).
    pub fn arm_in_period(self, q: usize) -> Arm {
        match (self, q) {
            (Sequence::ControlFirst, 0) | (Sequence::ExperimentalFirst, 1) => Arm::Control,
            _ => Arm::Experimental,
        }
    }
}

impl FromStr for Sequence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "CF" => Ok(Sequence::ControlFirst),
            "EF" => Ok(Sequence::ExperimentalFirst),
            other => Err(Error::InvalidArgument(format!("unknown sequence {other:?} (expected CF or EF)"))),
        }
    }
}

/// Measurements from one crossover period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodObs<T> {
    pub treatment: Arm,
    /// Stratum-defining indicator `A`.
    pub a: Option<bool>,
    /// Outcome `Y`.
    pub y: Option<T>,
}

/// One subject of a 2×2 crossover trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord<T = f64> {
    subject_id: String,
    covariates: Vec<T>,
    sequence: Sequence,
    periods: [PeriodObs<T>; 2],
}

impl<T: Real> SubjectRecord<T> {
    /// Validates that both arms are assigned and agree with `sequence`.
    pub fn new(
        subject_id: impl Into<String>,
        covariates: Vec<T>,
        sequence: Sequence,
        periods: [PeriodObs<T>; 2],
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if periods[0].treatment == periods[1].treatment {
            return Err(Error::SameTreatment(subject_id));
        }
        if sequence.arm_in_period(0) != periods[0].treatment {
            return Err(Error::InvalidArgument(format!(
                "subject {subject_id:?}: sequence {} disagrees with period treatments",
                sequence.code()
            )));
        }
        Ok(Self { subject_id, covariates, sequence, periods })
    }

    /// Convenience constructor from per-arm values.
    pub fn from_arms(
        subject_id: impl Into<String>,
        covariates: Vec<T>,
        sequence: Sequence,
        a: [Option<bool>; 2],
        y: [Option<T>; 2],
    ) -> Self {
        let periods = [0, 1].map(|q| {
            let arm = sequence.arm_in_period(q);
            PeriodObs { treatment: arm, a: a[arm.index()], y: y[arm.index()] }
        });
        Self { subject_id: subject_id.into(), covariates, sequence, periods }
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn covariates(&self) -> &[T] {
        &self.covariates
    }

    pub fn sequence(&self) -> Sequence {
        self.sequence
    }

    pub fn periods(&self) -> &[PeriodObs<T>; 2] {
        &self.periods
    }

    /// 0-based period in which `arm` was given.
    pub fn period_of(&self, arm: Arm) -> usize {
        if self.periods[0].treatment == arm {
            0
        } else {
            1
        }
    }

    pub fn arm_obs(&self, arm: Arm) -> &PeriodObs<T> {
        &self.periods[self.period_of(arm)]
    }

    pub fn a(&self, arm: Arm) -> Option<bool> {
        self.arm_obs(arm).a
    }

    pub fn y(&self, arm: Arm) -> Option<T> {
        self.arm_obs(arm).y
    }

    /// Joint stratum when both indicators are present.
    pub fn stratum(&self) -> Option<StratumLabel> {
        Some(StratumLabel::joint(self.a(Arm::Control)?, self.a(Arm::Experimental)?))
    }

    /// Returns a copy with the stratum indicator of each period replaced.
    pub fn with_a(&self, f: impl Fn(&PeriodObs<T>) -> Option<bool>) -> Self {
        let mut out = self.clone();
        for p in out.periods.iter_mut() {
            p.a = f(p);
        }
        out
    }

    /// Returns a copy with every observed outcome replaced by `f(y)`.
    pub fn map_y(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        for p in out.periods.iter_mut() {
            p.y = p.y.map(&f);
        }
        out
    }
}

/// One (subject, arm) observation as a parallel trial would record it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelObservation<T = f64> {
    pub subject_id: String,
    pub covariates: Vec<T>,
    pub arm: Arm,
    pub a: Option<bool>,
    pub y: Option<T>,
}

impl<T> ParallelObservation<T> {
    /// Observed-outcome indicator `R`.
    pub fn r(&self) -> bool {
        self.y.is_some()
    }
}

/// Principal stratum identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StratumLabel {
    /// `S_kl`: `A(0) = k`, `A(1) = l`.
    Joint(u8, u8),
    /// `S_k*`.
    MarginalControl(u8),
    /// `S_*l`.
    MarginalExperimental(u8),
}

impl StratumLabel {
    /// The four joint strata in `S_00, S_01, S_10, S_11` order.
    pub const JOINT: [StratumLabel; 4] =
        [StratumLabel::Joint(0, 0), StratumLabel::Joint(0, 1), StratumLabel::Joint(1, 0), StratumLabel::Joint(1, 1)];

    pub fn joint(a0: bool, a1: bool) -> Self {
        StratumLabel::Joint(a0 as u8, a1 as u8)
    }

    /// Position among [`StratumLabel::JOINT`]; `None` for marginals.
    pub fn joint_index(self) -> Option<usize> {
        match self {
            StratumLabel::Joint(k, l) => Some(2 * k as usize + l as usize),
            _ => None,
        }
    }

    /// The joint strata whose union forms this stratum.
    pub fn constituents(self) -> Vec<StratumLabel> {
        match self {
            StratumLabel::Joint(..) => vec![self],
            StratumLabel::MarginalControl(k) => vec![StratumLabel::Joint(k, 0), StratumLabel::Joint(k, 1)],
            StratumLabel::MarginalExperimental(l) => {
                vec![StratumLabel::Joint(0, l), StratumLabel::Joint(1, l)]
            }
        }
    }

    /// Stratum index the given arm's own indicator must equal.
    pub fn own_index(self, arm: Arm) -> Option<u8> {
        match (self, arm) {
            (StratumLabel::Joint(k, _), Arm::Control) => Some(k),
            (StratumLabel::Joint(_, l), Arm::Experimental) => Some(l),
            (StratumLabel::MarginalControl(k), Arm::Control) => Some(k),
            (StratumLabel::MarginalExperimental(l), Arm::Experimental) => Some(l),
            _ => None,
        }
    }

    fn validate(self) -> Result<Self> {
        let ok = match self {
            StratumLabel::Joint(k, l) => k <= 1 && l <= 1,
            StratumLabel::MarginalControl(k) | StratumLabel::MarginalExperimental(k) => k <= 1,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidArgument(format!("stratum indices must be 0 or 1: {self:?}")))
        }
    }
}

impl fmt::Display for StratumLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StratumLabel::Joint(k, l) => write!(f, "S_{k}{l}"),
            StratumLabel::MarginalControl(k) => write!(f, "S_{k}*"),
            StratumLabel::MarginalExperimental(l) => write!(f, "S_*{l}"),
        }
    }
}

impl FromStr for StratumLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches("S_").trim_start_matches('S');
        let b: Vec<char> = t.chars().collect();
        let digit = |c: char| match c {
            '0' => Some(0u8),
            '1' => Some(1u8),
            _ => None,
        };
        let label = match b.as_slice() {
            [x, '*'] => digit(*x).map(StratumLabel::MarginalControl),
            ['*', y] => digit(*y).map(StratumLabel::MarginalExperimental),
            [x, y] => digit(*x).zip(digit(*y)).map(|(k, l)| StratumLabel::Joint(k, l)),
            _ => None,
        };
        label
            .ok_or_else(|| Error::InvalidArgument(format!("cannot parse stratum {s:?}")))
            .and_then(StratumLabel::validate)
    }
}

/// Counts and proportions of subjects by joint stratum.
///
/// `counts` and `proportions` follow [`StratumLabel::JOINT`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTable<T = f64> {
    pub counts: [usize; 4],
    pub n_total: usize,
    pub proportions: [T; 4],
}

impl<T: Real> StratumTable<T> {
    pub fn from_counts(counts: [usize; 4]) -> Self {
        let n_total: usize = counts.iter().sum();
        let proportions =
            if n_total == 0 { [T::zero(); 4] } else { counts.map(|c| count::<T>(c) / count::<T>(n_total)) };
        Self { counts, n_total, proportions }
    }

    pub fn count(&self, label: StratumLabel) -> usize {
        label.constituents().iter().map(|s| self.counts[s.joint_index().unwrap()]).sum()
    }

    /// Total proportion over several (disjoint) strata.
    pub fn proportion_sum(&self, labels: &[StratumLabel]) -> T {
        labels.iter().fold(T::zero(), |acc, &l| acc + self.proportion(l))
    }

    pub fn proportion(&self, label: StratumLabel) -> T {
        label.constituents().iter().fold(T::zero(), |acc, s| acc + self.proportions[s.joint_index().unwrap()])
    }
}

/// Which fields must be present in both periods to keep a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompleterRequirement {
    OutcomeBothArms,
    StratumVarBothArms,
    Both,
}

/// Keeps subjects whose required fields are non-missing in both periods.
pub fn completer_filter<T: Real>(records: &[SubjectRecord<T>], require: CompleterRequirement) -> Vec<SubjectRecord<T>> {
    records
        .iter()
        .filter(|r| {
            let y_ok = r.periods.iter().all(|p| p.y.is_some());
            let a_ok = r.periods.iter().all(|p| p.a.is_some());
            match require {
                CompleterRequirement::OutcomeBothArms => y_ok,
                CompleterRequirement::StratumVarBothArms => a_ok,
                CompleterRequirement::Both => y_ok && a_ok,
            }
        })
        .cloned()
        .collect()
}

/// Emits, for each subject, the observation from the period in which `arm` was given.
pub fn as_parallel<T: Real>(records: &[SubjectRecord<T>], arm: Arm) -> Vec<ParallelObservation<T>> {
    records
        .iter()
        .map(|r| {
            let p = r.arm_obs(arm);
            ParallelObservation {
                subject_id: r.subject_id.clone(),
                covariates: r.covariates.clone(),
                arm,
                a: p.a,
                y: p.y,
            }
        })
        .collect()
}

/// Cross-tabulates subjects by `(A(0), A(1))`.
pub fn classify_strata<T: Real>(records: &[SubjectRecord<T>]) -> Result<StratumTable<T>> {
    let mut counts = [0usize; 4];
    for r in records {
        let s = r.stratum().ok_or_else(|| Error::MissingStratumVariable { subject: r.subject_id.clone() })?;
        counts[s.joint_index().unwrap()] += 1;
    }
    Ok(StratumTable::from_counts(counts))
}

/// Comparison used by [`ThresholdRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

/// Derives the stratum indicator from the outcome, e.g. `y>0` gives `A = 1{Y > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule<T = f64> {
    pub comparison: Comparison,
    pub threshold: T,
}

impl<T: Real> ThresholdRule<T> {
    pub fn indicator(&self, y: T) -> bool {
        match self.comparison {
            Comparison::Gt => y > self.threshold,
            Comparison::Ge => y >= self.threshold,
            Comparison::Lt => y < self.threshold,
            Comparison::Le => y <= self.threshold,
        }
    }

    /// Replaces `a` in every period with the rule applied to that period's `y`.
    pub fn apply(&self, records: &[SubjectRecord<T>]) -> Vec<SubjectRecord<T>> {
        records.iter().map(|r| r.with_a(|p| p.y.map(|y| self.indicator(y)))).collect()
    }

    pub fn apply_parallel(&self, obs: &[ParallelObservation<T>]) -> Vec<ParallelObservation<T>> {
        obs.iter().map(|o| ParallelObservation { a: o.y.map(|y| self.indicator(y)), ..o.clone() }).collect()
    }
}

impl<T: Real> FromStr for ThresholdRule<T> {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let rest = compact
            .strip_prefix('y')
            .ok_or_else(|| Error::InvalidArgument(format!("threshold rule must start with 'y': {s:?}")))?;
        let (comparison, num) = if let Some(n) = rest.strip_prefix(">=") {
            (Comparison::Ge, n)
        } else if let Some(n) = rest.strip_prefix("<=") {
            (Comparison::Le, n)
        } else if let Some(n) = rest.strip_prefix('>') {
            (Comparison::Gt, n)
        } else if let Some(n) = rest.strip_prefix('<') {
            (Comparison::Lt, n)
        } else {
            return Err(Error::InvalidArgument(format!("threshold rule needs one of > >= < <=: {s:?}")));
        };
        let threshold = num.parse::<T>().map_err(|_| Error::InvalidArgument(format!("bad threshold in {s:?}")))?;
        Ok(Self { comparison, threshold })
    }
}

/// Crossover records together with their covariate column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverData<T = f64> {
    pub covariate_names: Vec<String>,
    pub records: Vec<SubjectRecord<T>>,
}

/// Parallel-trial observations together with their covariate column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelData<T = f64> {
    pub covariate_names: Vec<String>,
    pub observations: Vec<ParallelObservation<T>>,
}

/// Any input the estimators accept.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset<T = f64> {
    Crossover(CrossoverData<T>),
    Parallel(ParallelData<T>),
}

impl<T: Real> Dataset<T> {
    pub fn covariate_names(&self) -> &[String] {
        match self {
            Dataset::Crossover(d) => &d.covariate_names,
            Dataset::Parallel(d) => &d.covariate_names,
        }
    }

    pub fn is_crossover(&self) -> bool {
        matches!(self, Dataset::Crossover(_))
    }

    /// Observations for one arm, without pairing.
    pub fn arm_observations(&self, arm: Arm) -> Vec<ParallelObservation<T>> {
        match self {
            Dataset::Crossover(d) => as_parallel(&d.records, arm),
            Dataset::Parallel(d) => d.observations.iter().filter(|o| o.arm == arm).cloned().collect(),
        }
    }

    pub fn apply_threshold(&self, rule: &ThresholdRule<T>) -> Self {
        match self {
            Dataset::Crossover(d) => Dataset::Crossover(CrossoverData {
                covariate_names: d.covariate_names.clone(),
                records: rule.apply(&d.records),
            }),
            Dataset::Parallel(d) => Dataset::Parallel(ParallelData {
                covariate_names: d.covariate_names.clone(),
                observations: rule.apply_parallel(&d.observations),
            }),
        }
    }
}

/// Resolves covariate names to column indices; `None` selects every covariate.
pub fn select_covariates(names: &[String], requested: Option<&[String]>) -> Result<Vec<usize>> {
    match requested {
        None => Ok((0..names.len()).collect()),
        Some(req) => req
            .iter()
            .map(|want| {
                let bare = want.strip_prefix("x_").unwrap_or(want);
                names.iter().position(|n| n == bare).ok_or_else(|| Error::UnknownColumn(want.clone()))
            })
            .collect(),
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "NA"
}

fn parse_real<T: Real>(field: &str, row: usize, col: &str) -> Result<Option<T>> {
    if is_missing(field) {
        return Ok(None);
    }
    let v = field
        .trim()
        .parse::<T>()
        .map_err(|_| Error::MalformedRow { row, message: format!("column {col}: not a number: {field:?}") })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow { row, message: format!("column {col}: non-finite value") });
    }
    Ok(Some(v))
}

fn parse_binary(field: &str, row: usize, col: &str) -> Result<Option<bool>> {
    match field.trim() {
        f if is_missing(f) => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::MalformedRow { row, message: format!("column {col}: expected 0/1/NA, got {other:?}") }),
    }
}

fn parse_arm(field: &str, row: usize, col: &str) -> Result<Arm> {
    match field.trim() {
        "0" => Ok(Arm::Control),
        "1" => Ok(Arm::Experimental),
        other => Err(Error::MalformedRow { row, message: format!("column {col}: expected 0 or 1, got {other:?}") }),
    }
}

fn fmt_opt<T: Real>(v: Option<T>) -> String {
    v.map_or_else(|| MISSING_OUT.to_string(), |x| x.to_string())
}

fn fmt_bin(v: Option<bool>) -> String {
    v.map_or_else(|| MISSING_OUT.to_string(), |b| (b as u8).to_string())
}

struct Columns {
    index: std::collections::HashMap<String, usize>,
    covariates: Vec<(String, usize)>,
}

impl Columns {
    fn new(header: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let mut index = std::collections::HashMap::new();
        let mut covariates = Vec::new();
        for (i, h) in header.iter().enumerate() {
            let h = h.trim().trim_start_matches('\u{feff}');
            if index.insert(h.to_string(), i).is_some() {
                return Err(Error::Header(format!("duplicate column {h:?}")));
            }
            if let Some(name) = h.strip_prefix("x_") {
                covariates.push((name.to_string(), i));
            }
        }
        for r in required {
            if !index.contains_key(*r) {
                return Err(Error::Header(format!("missing column {r:?}")));
            }
        }
        Ok(Self { index, covariates })
    }

    fn get<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> &'a str {
        rec.get(self.index[name]).unwrap_or("")
    }
}

const CROSSOVER_REQUIRED: [&str; 8] = ["subject_id", "sequence", "t_p1", "t_p2", "a_p1", "a_p2", "y_p1", "y_p2"];
const PARALLEL_REQUIRED: [&str; 4] = ["subject_id", "treatment", "a", "y"];

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

/// Reads crossover records from any reader (see [`load_crossover_csv`]).
pub fn read_crossover_csv<T: Real, R: Read>(input: R) -> Result<CrossoverData<T>> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let cols = Columns::new(&header, &CROSSOVER_REQUIRED)?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec?;
        let id = cols.get(&rec, "subject_id").trim().to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow { row, message: "empty subject_id".into() });
        }
        let sequence: Sequence = cols
            .get(&rec, "sequence")
            .parse()
            .map_err(|e: Error| Error::MalformedRow { row, message: e.to_string() })?;
        let covariates = cols
            .covariates
            .iter()
            .map(|(name, idx)| {
                parse_real::<T>(rec.get(*idx).unwrap_or(""), row, name)?
                    .ok_or_else(|| Error::MalformedRow { row, message: format!("covariate x_{name} is missing") })
            })
            .collect::<Result<Vec<T>>>()?;
        let mut periods = Vec::with_capacity(2);
        for q in 1..=2 {
            periods.push(PeriodObs {
                treatment: parse_arm(cols.get(&rec, &format!("t_p{q}")), row, &format!("t_p{q}"))?,
                a: parse_binary(cols.get(&rec, &format!("a_p{q}")), row, &format!("a_p{q}"))?,
                y: parse_real(cols.get(&rec, &format!("y_p{q}")), row, &format!("y_p{q}"))?,
            });
        }
        let periods: [PeriodObs<T>; 2] = periods.try_into().expect("two periods");
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSubject(id));
        }
        let record = SubjectRecord::new(id, covariates, sequence, periods).map_err(|e| match e {
            Error::SameTreatment(_) => e,
            other => Error::MalformedRow { row, message: other.to_string() },
        })?;
        records.push(record);
    }
    Ok(CrossoverData { covariate_names: cols.covariates.into_iter().map(|(n, _)| n).collect(), records })
}

/// Loads the one-row-per-subject crossover CSV
/// (`subject_id,sequence,x_<name>...,t_p1,t_p2,a_p1,a_p2,y_p1,y_p2`).
pub fn load_crossover_csv<T: Real>(path: impl AsRef<Path>) -> Result<CrossoverData<T>> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_crossover_csv(std::io::BufReader::new(f))
}

/// Writes crossover records in canonical column order; missing values become `NA`.
pub fn write_crossover_csv<T: Real, W: Write>(data: &CrossoverData<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "sequence".to_string()];
    header.extend(data.covariate_names.iter().map(|n| format!("x_{n}")));
    header.extend(["t_p1", "t_p2", "a_p1", "a_p2", "y_p1", "y_p2"].map(String::from));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![r.subject_id.clone(), r.sequence.code().to_string()];
        row.extend(r.covariates.iter().map(|x| x.to_string()));
        row.extend(r.periods.iter().map(|p| p.treatment.to_string()));
        row.extend(r.periods.iter().map(|p| fmt_bin(p.a)));
        row.extend(r.periods.iter().map(|p| fmt_opt(p.y)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_crossover_csv<T: Real>(data: &CrossoverData<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_crossover_csv(data, std::io::BufWriter::new(f))
}

/// Reads the one-row-per-subject-arm parallel CSV (`subject_id,treatment,x_<name>...,a,y`).
pub fn read_parallel_csv<T: Real, R: Read>(input: R) -> Result<ParallelData<T>> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let cols = Columns::new(&header, &PARALLEL_REQUIRED)?;
    let mut seen = HashSet::new();
    let mut observations = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let id = cols.get(&rec, "subject_id").trim().to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow { row, message: "empty subject_id".into() });
        }
        let arm = parse_arm(cols.get(&rec, "treatment"), row, "treatment")?;
        if !seen.insert((id.clone(), arm)) {
            return Err(Error::DuplicateSubject(id));
        }
        let covariates = cols
            .covariates
            .iter()
            .map(|(name, idx)| {
                parse_real::<T>(rec.get(*idx).unwrap_or(""), row, name)?
                    .ok_or_else(|| Error::MalformedRow { row, message: format!("covariate x_{name} is missing") })
            })
            .collect::<Result<Vec<T>>>()?;
        observations.push(ParallelObservation {
            subject_id: id,
            covariates,
            arm,
            a: parse_binary(cols.get(&rec, "a"), row, "a")?,
            y: parse_real(cols.get(&rec, "y"), row, "y")?,
        });
    }
    Ok(ParallelData { covariate_names: cols.covariates.into_iter().map(|(n, _)| n).collect(), observations })
}

pub fn write_parallel_csv<T: Real, W: Write>(data: &ParallelData<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "treatment".to_string()];
    header.extend(data.covariate_names.iter().map(|n| format!("x_{n}")));
    header.extend(["a", "y"].map(String::from));
    w.write_record(&header)?;
    for o in &data.observations {
        let mut row = vec![o.subject_id.clone(), o.arm.to_string()];
        row.extend(o.covariates.iter().map(|x| x.to_string()));
        row.push(fmt_bin(o.a));
        row.push(fmt_opt(o.y));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads either CSV layout, deciding by the header.
pub fn load_dataset<T: Real>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let first = text.lines().next().unwrap_or("");
    let has = |name: &str| first.split(',').any(|h| h.trim().trim_start_matches('\u{feff}') == name);
    if has("t_p1") {
        read_crossover_csv(text.as_bytes()).map(Dataset::Crossover)
    } else if has("treatment") {
        read_parallel_csv(text.as_bytes()).map(Dataset::Parallel)
    } else {
        Err(Error::Header("neither crossover (t_p1,...) nor parallel (treatment,...) layout".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,sequence,x_bgsd,t_p1,t_p2,a_p1,a_p2,y_p1,y_p2\n";

    fn rec(id: &str, seq: Sequence, a: [u8; 2], y: [f64; 2]) -> SubjectRecord {
        SubjectRecord::from_arms(id, vec![1.0], seq, a.map(|v| Some(v == 1)), y.map(Some))
    }

    #[test]
    fn parses_single_row() {
        let csv = format!("{HEADER}s1,CF,40.5,0,1,1,0,-3.25,7\n");
        let d: CrossoverData = read_crossover_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.covariate_names, vec!["bgsd"]);
        assert_eq!(d.records.len(), 1);
        let r = &d.records[0];
        assert_eq!(r.subject_id(), "s1");
        assert_eq!(r.covariates(), &[40.5]);
        assert_eq!(r.a(Arm::Control), Some(true));
        assert_eq!(r.y(Arm::Experimental), Some(7.0));
        assert_eq!(r.stratum(), Some(StratumLabel::Joint(1, 0)));
    }

    #[test]
    fn empty_and_na_are_missing() {
        let csv = format!("{HEADER}s1,EF,1,1,0,NA,0,2.5,\n");
        let d: CrossoverData = read_crossover_csv(csv.as_bytes()).unwrap();
        let r = &d.records[0];
        assert_eq!(r.y(Arm::Control), None);
        assert_eq!(r.a(Arm::Experimental), None);
        let par = as_parallel(&d.records, Arm::Control);
        assert!(!par[0].r());
        assert!(as_parallel(&d.records, Arm::Experimental)[0].r());
    }

    #[test]
    fn duplicate_subject_is_named() {
        let csv = format!("{HEADER}s1,CF,1,0,1,0,0,1,1\ns1,EF,1,1,0,0,0,1,1\n");
        let err = read_crossover_csv::<f64, _>(csv.as_bytes()).unwrap_err();
        assert_eq!(err, Error::DuplicateSubject("s1".into()));
        assert!(err.to_string().contains("s1"));
    }

    #[test]
    fn same_treatment_is_rejected() {
        let csv = format!("{HEADER}s1,CF,1,0,0,0,0,1,1\n");
        assert!(matches!(read_crossover_csv::<f64, _>(csv.as_bytes()), Err(Error::SameTreatment(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = format!("{HEADER}s1,CF,1,0,1,0,0,1,1\ns2,CF,abc,0,1,0,0,1,1\n");
        match read_crossover_csv::<f64, _>(csv.as_bytes()) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = format!("{HEADER}s1,CF,1,0,1,2,0,1,1\n");
        assert!(matches!(read_crossover_csv::<f64, _>(csv.as_bytes()), Err(Error::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn missing_required_column() {
        let csv = "subject_id,sequence,t_p1,t_p2,a_p1,a_p2,y_p1\ns1,CF,0,1,0,0,1\n";
        assert!(matches!(read_crossover_csv::<f64, _>(csv.as_bytes()), Err(Error::Header(_))));
    }

    #[test]
    fn as_parallel_picks_the_matching_period() {
        let r = rec("s", Sequence::ControlFirst, [0, 1], [5.0, 9.0]);
        let p0 = as_parallel(std::slice::from_ref(&r), Arm::Control);
        assert_eq!(p0[0].y, Some(5.0));
        assert_eq!(r.period_of(Arm::Control), 0);
        let r = rec("s", Sequence::ExperimentalFirst, [0, 1], [5.0, 9.0]);
        assert_eq!(r.periods()[0].y, Some(9.0));
        assert_eq!(as_parallel(&[r], Arm::Control)[0].y, Some(5.0));
    }

    #[test]
    fn completer_requirements_differ() {
        let full = rec("a", Sequence::ControlFirst, [0, 1], [1.0, 2.0]);
        let no_y = SubjectRecord::from_arms("b", vec![1.0], Sequence::ControlFirst, [Some(true); 2], [Some(1.0), None]);
        let no_a = SubjectRecord::from_arms("c", vec![1.0], Sequence::ControlFirst, [None, Some(true)], [Some(1.0); 2]);
        let all = vec![full.clone(), no_y.clone(), no_a.clone()];
        let ids = |v: Vec<SubjectRecord>| v.iter().map(|r| r.subject_id().to_string()).collect::<Vec<_>>();
        assert_eq!(ids(completer_filter(&all, CompleterRequirement::OutcomeBothArms)), ["a", "c"]);
        assert_eq!(ids(completer_filter(&all, CompleterRequirement::StratumVarBothArms)), ["a", "b"]);
        assert_eq!(ids(completer_filter(&all, CompleterRequirement::Both)), ["a"]);
        let once = completer_filter(&all, CompleterRequirement::Both);
        assert_eq!(completer_filter(&once, CompleterRequirement::Both), once);
    }

    #[test]
    fn one_subject_per_cell() {
        let recs: Vec<_> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .enumerate()
            .map(|(i, a)| rec(&i.to_string(), Sequence::ControlFirst, *a, [0.0, 0.0]))
            .collect();
        let t = classify_strata(&recs).unwrap();
        assert_eq!(t.counts, [1, 1, 1, 1]);
        assert_eq!(t.proportions, [0.25; 4]);
        assert_eq!(t.proportion(StratumLabel::MarginalControl(1)), 0.5);
    }

    #[test]
    fn reference_table_counts() {
        // ΔBGSD strata table: 52/41/31/39 of 163
        let mut recs = Vec::new();
        for (cell, n) in [([0, 0], 52), ([0, 1], 41), ([1, 0], 31), ([1, 1], 39)] {
            for i in 0..n {
                recs.push(rec(&format!("{cell:?}{i}"), Sequence::ControlFirst, cell, [0.0, 0.0]));
            }
        }
        let t: StratumTable = classify_strata(&recs).unwrap();
        assert_eq!(t.n_total, 163);
        let pct: Vec<f64> = t.proportions.iter().map(|p| (p * 1000.0).round() / 1000.0).collect();
        assert_eq!(pct, vec![0.319, 0.252, 0.190, 0.239]);
    }

    #[test]
    fn degenerate_single_cell() {
        let recs: Vec<_> =
            (0..5).map(|i| rec(&i.to_string(), Sequence::ExperimentalFirst, [1, 1], [0.0, 0.0])).collect();
        let t: StratumTable = classify_strata(&recs).unwrap();
        assert_eq!(t.counts, [0, 0, 0, 5]);
        assert_eq!(t.proportions[3], 1.0);
    }

    #[test]
    fn classify_requires_both_indicators() {
        let r = SubjectRecord::from_arms("z", vec![], Sequence::ControlFirst, [Some(true), None], [None, None]);
        assert!(matches!(classify_strata::<f64>(&[r]), Err(Error::MissingStratumVariable { .. })));
    }

    #[test]
    fn threshold_rule_parses_and_applies() {
        let rule: ThresholdRule = "y > 0".parse().unwrap();
        assert_eq!(rule.comparison, Comparison::Gt);
        let r = SubjectRecord::from_arms("s", vec![], Sequence::ControlFirst, [None, None], [Some(-1.0), Some(0.5)]);
        let out = rule.apply(&[r]);
        assert_eq!(out[0].a(Arm::Control), Some(false));
        assert_eq!(out[0].a(Arm::Experimental), Some(true));
        assert!("y>=1.5".parse::<ThresholdRule>().is_ok());
        assert!("x>0".parse::<ThresholdRule>().is_err());
        assert!("y=0".parse::<ThresholdRule>().is_err());
    }

    #[test]
    fn stratum_labels_round_trip_through_text() {
        for s in ["S_00", "S_01", "S_1*", "S_*0"] {
            assert_eq!(s.parse::<StratumLabel>().unwrap().to_string(), s);
        }
        assert!("S_2*".parse::<StratumLabel>().is_err());
    }

    #[test]
    fn parallel_csv_round_trip() {
        let csv = "subject_id,treatment,x_b,a,y\ns1,0,1.5,1,2.25\ns1,1,1.5,NA,\ns2,1,3,0,-1\n";
        let d: ParallelData = read_parallel_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.observations.len(), 3);
        assert!(!d.observations[1].r());
        let mut out = Vec::new();
        write_parallel_csv(&d, &mut out).unwrap();
        let back: ParallelData = read_parallel_csv(out.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
