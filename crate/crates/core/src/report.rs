//! Text renderings of estimation and diagnostic results.
//!
//! `json` is the serde form; `csv` is long-format and plot-ready; `md` is an
//! aligned pipe table for reading.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::StratumLabel;
use crate::diagnostics::{CrossoverEffectsReport, IgnorabilityReport, IndependenceReport, MonotonicityReport};
use crate::error::{Error, Result};
use crate::estimators::{Contrast, EstimateSummary, PceCell, PceTable};
use crate::scalar::{to_f64, Real};
use crate::simulator::TruthTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Format {
    Csv,
    Json,
    Md,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?} (csv, json, md)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Md => "md",
        })
    }
}

/// Pipe table with every column padded to its widest cell.
pub fn md_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let k = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (j, c) in r.iter().enumerate().take(k) {
            width[j] = width[j].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().enumerate().map(|(j, c)| format!("{c:<w$}", w = width[j])).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(headers.to_vec());
    out.push_str(&format!("|{}|\n", width.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn csv_text(headers: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

fn fixed<T: Real>(v: T, digits: usize) -> String {
    format!("{:.digits$}", to_f64(v))
}

fn opt<T: Real>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn contrast_name(c: Contrast) -> &'static str {
    match c {
        Contrast::Arm0 => "arm0",
        Contrast::Arm1 => "arm1",
        Contrast::Diff => "diff",
    }
}

fn mean_ci<T: Real>(s: &EstimateSummary<T>) -> String {
    match s.ci95 {
        Some((lo, hi)) => format!("{} ({}, {})", fixed(s.point, 1), fixed(lo, 1), fixed(hi, 1)),
        None => fixed(s.point, 1),
    }
}

/// Renders a PCE table: one row per stratum and method.
pub fn render_pce_table<T: Real>(table: &PceTable<T>, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(table),
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &table.rows {
                match &r.cell {
                    PceCell::Estimated { arm0, arm1, diff } => {
                        for s in [arm0, arm1, diff] {
                            rows.push(vec![
                                r.method.to_string(),
                                r.stratum.to_string(),
                                r.n_stratum.map(|n| n.to_string()).unwrap_or_default(),
                                contrast_name(s.arm_or_contrast).to_string(),
                                s.point.to_string(),
                                opt(s.se),
                                opt(s.ci95.map(|c| c.0)),
                                opt(s.ci95.map(|c| c.1)),
                                s.note.clone().unwrap_or_else(|| "estimated".into()),
                            ]);
                        }
                    }
                    PceCell::Inestimable { reason } => {
                        for c in Contrast::ALL {
                            rows.push(vec![
                                r.method.to_string(),
                                r.stratum.to_string(),
                                r.n_stratum.map(|n| n.to_string()).unwrap_or_default(),
                                contrast_name(c).to_string(),
                                String::new(),
                                String::new(),
                                String::new(),
                                String::new(),
                                format!("inestimable: {reason}"),
                            ]);
                        }
                    }
                }
            }
            csv_text(&["method", "stratum", "n", "quantity", "point", "se", "ci_lo", "ci_hi", "status"], &rows)
        }
        Format::Md => {
            let mut out = String::from("## Principal causal effects (experimental minus control)\n\n");
            out.push_str(&format!("Subjects analysed: {}", table.n_subjects));
            if !table.covariates.is_empty() {
                out.push_str(&format!("; principal-score covariates: {}", table.covariates.join(", ")));
            }
            if let (Some(c), Some(b)) = (table.confidence, table.n_resamples) {
                out.push_str(&format!("; {:.0}% percentile bootstrap intervals, B = {b}", 100.0 * c));
            }
            out.push_str("\n\n");
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let n = r.n_stratum.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
                    match &r.cell {
                        PceCell::Estimated { arm0, arm1, diff } => vec![
                            r.stratum.to_string(),
                            r.method.to_string(),
                            n,
                            mean_ci(arm0),
                            mean_ci(arm1),
                            mean_ci(diff),
                        ],
                        PceCell::Inestimable { reason } => vec![
                            r.stratum.to_string(),
                            r.method.to_string(),
                            n,
                            format!("inestimable: {reason}"),
                            String::new(),
                            String::new(),
                        ],
                    }
                })
                .collect();
            out.push_str(&md_table(&["Stratum", "Method", "n", "Control", "Experimental", "Difference"], &rows));
            Ok(out)
        }
    }
}

/// Long-format row `check,item,statistic,value`.
type LongRow = [String; 4];

fn long(check: &str, item: impl ToString, stat: &str, value: impl ToString) -> LongRow {
    [check.to_string(), item.to_string(), stat.to_string(), value.to_string()]
}

/// Every diagnostic requested in one run, plus any that failed.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsDocument<T> {
    pub n_subjects: usize,
    pub monotonicity: Option<MonotonicityReport<T>>,
    pub ignorability: Option<IgnorabilityReport<T>>,
    pub independence: Option<IndependenceReport<T>>,
    pub crossover_effects: Option<CrossoverEffectsReport<T>>,
    /// `(check, message)` for checks that could not be completed.
    pub failures: Vec<(String, String)>,
}

impl<T> DiagnosticsDocument<T> {
    pub fn new(n_subjects: usize) -> Self {
        Self {
            n_subjects,
            monotonicity: None,
            ignorability: None,
            independence: None,
            crossover_effects: None,
            failures: Vec::new(),
        }
    }

    pub fn completed(&self) -> usize {
        [
            self.monotonicity.is_some(),
            self.ignorability.is_some(),
            self.independence.is_some(),
            self.crossover_effects.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

fn monotonicity_md<T: Real>(m: &MonotonicityReport<T>) -> String {
    let cell = |k: u8, l: u8| {
        let s = StratumLabel::Joint(k, l);
        format!("{} ({:.1}%)", m.table.count(s), 100.0 * to_f64(m.table.proportion(s)))
    };
    let rows = vec![
        vec!["A(0) = 0".to_string(), cell(0, 0), cell(0, 1)],
        vec!["A(0) = 1".to_string(), cell(1, 0), cell(1, 1)],
    ];
    format!(
        "## Monotonicity ({})\n\n{}\nViolating proportion: {:.3}. {}\n",
        m.direction,
        md_table(&["", "A(1) = 0", "A(1) = 1"], &rows),
        to_f64(m.violating_cell_proportion),
        m.verdict_note
    )
}

fn ignorability_md<T: Real>(r: &IgnorabilityReport<T>) -> String {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|x| {
            vec![
                format!("Y({}) ~ A({})", x.outcome_arm.index(), x.indicator_arm.index()),
                format!("{} ({})", fixed(x.coefficient, 2), fixed(x.se, 2)),
                format!("{:.4}", to_f64(x.p_value)),
                fixed(x.adjusted_mean_a0, 2),
                fixed(x.adjusted_mean_a1, 2),
                x.n.to_string(),
            ]
        })
        .collect();
    let adj =
        if r.covariates.is_empty() { "period".to_string() } else { format!("{} and period", r.covariates.join(", ")) };
    format!(
        "## Principal ignorability (adjusted for {adj})\n\n{}",
        md_table(&["Regression", "Coefficient (SE)", "p", "Adj. mean A=0", "Adj. mean A=1", "n"], &rows)
    )
}

fn independence_md<T: Real>(r: &IndependenceReport<T>) -> String {
    let rows: Vec<Vec<String>> = StratumLabel::JOINT
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let show = |p: T, se: Option<[T; 4]>| match se {
                Some(se) => format!("{} ({})", fixed(p, 3), fixed(se[c], 3)),
                None => fixed(p, 3),
            };
            vec![s.to_string(), show(r.observed.probs[c], r.observed.se), show(r.estimated.probs[c], r.estimated.se)]
        })
        .collect();
    format!(
        "## Cross-world stratum independence ({})\n\n{}\nMax abs difference {:.4}, sum of squares {:.6}, bootstrap p = {:.4} (B = {}, {} resamples redrawn)\n",
        r.estimated.method,
        md_table(&["Stratum", "Observed (SE)", "Estimated (SE)"], &rows),
        to_f64(r.discrepancy),
        to_f64(r.ssd),
        to_f64(r.p_value),
        r.n_bootstrap,
        r.n_redrawn
    )
}

fn crossover_md<T: Real>(r: &CrossoverEffectsReport<T>) -> String {
    let rows: Vec<Vec<String>> = [("treatment", &r.treatment), ("period", &r.period), ("sequence", &r.sequence)]
        .iter()
        .map(|(name, t)| {
            vec![
                name.to_string(),
                fixed(t.estimate, 2),
                fixed(t.se, 2),
                fixed(t.t, 3),
                t.dof.to_string(),
                format!("{:.4}", to_f64(t.p_value)),
            ]
        })
        .collect();
    format!(
        "## Crossover effects (CF n = {}, EF n = {})\n\n{}",
        r.n_control_first,
        r.n_experimental_first,
        md_table(&["Effect", "Estimate", "SE", "t", "df", "p"], &rows)
    )
}

pub fn render_diagnostics<T: Real>(doc: &DiagnosticsDocument<T>, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(doc),
        Format::Md => {
            let mut parts = Vec::new();
            if let Some(m) = &doc.monotonicity {
                parts.push(monotonicity_md(m));
            }
            if let Some(r) = &doc.ignorability {
                parts.push(ignorability_md(r));
            }
            if let Some(r) = &doc.independence {
                parts.push(independence_md(r));
            }
            if let Some(r) = &doc.crossover_effects {
                parts.push(crossover_md(r));
            }
            for (check, msg) in &doc.failures {
                parts.push(format!("## {check}\n\nNot completed: {msg}\n"));
            }
            Ok(parts.join("\n"))
        }
        Format::Csv => {
            let mut rows: Vec<LongRow> = Vec::new();
            if let Some(m) = &doc.monotonicity {
                for (c, s) in StratumLabel::JOINT.iter().enumerate() {
                    rows.push(long("monotonicity", s, "count", m.table.counts[c]));
                    rows.push(long("monotonicity", s, "proportion", m.table.proportions[c]));
                }
                rows.push(long("monotonicity", m.direction, "violating_proportion", m.violating_cell_proportion));
            }
            if let Some(r) = &doc.ignorability {
                for x in &r.rows {
                    let item = format!("Y({})~A({})", x.outcome_arm.index(), x.indicator_arm.index());
                    rows.push(long("ignorability", &item, "coefficient", x.coefficient));
                    rows.push(long("ignorability", &item, "se", x.se));
                    rows.push(long("ignorability", &item, "p_value", x.p_value));
                    rows.push(long("ignorability", &item, "adjusted_mean_a0", x.adjusted_mean_a0));
                    rows.push(long("ignorability", &item, "adjusted_mean_a1", x.adjusted_mean_a1));
                }
            }
            if let Some(r) = &doc.independence {
                for (c, s) in StratumLabel::JOINT.iter().enumerate() {
                    rows.push(long("independence", s, "observed", r.observed.probs[c]));
                    rows.push(long("independence", s, "estimated", r.estimated.probs[c]));
                    if let Some(se) = r.observed.se {
                        rows.push(long("independence", s, "observed_se", se[c]));
                    }
                    if let Some(se) = r.estimated.se {
                        rows.push(long("independence", s, "estimated_se", se[c]));
                    }
                }
                rows.push(long("independence", "all", "discrepancy", r.discrepancy));
                rows.push(long("independence", "all", "ssd", r.ssd));
                rows.push(long("independence", "all", "p_value", r.p_value));
                rows.push(long("independence", "all", "n_bootstrap", r.n_bootstrap));
            }
            if let Some(r) = &doc.crossover_effects {
                for (name, t) in [("treatment", &r.treatment), ("period", &r.period), ("sequence", &r.sequence)] {
                    rows.push(long("crossover_effects", name, "estimate", t.estimate));
                    rows.push(long("crossover_effects", name, "se", t.se));
                    rows.push(long("crossover_effects", name, "t", t.t));
                    rows.push(long("crossover_effects", name, "p_value", t.p_value));
                }
            }
            for (check, msg) in &doc.failures {
                rows.push(long(check, "all", "error", msg));
            }
            let rows: Vec<Vec<String>> = rows.into_iter().map(Vec::from).collect();
            csv_text(&["check", "item", "statistic", "value"], &rows)
        }
    }
}

pub fn render_truth(t: &TruthTable, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(t),
        Format::Csv => {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
        }
        Format::Md => {
            let rows: Vec<Vec<String>> = t
                .cells
                .iter()
                .map(|c| {
                    vec![
                        c.stratum.to_string(),
                        format!("{:.4} ({:.4})", c.probability, c.probability_se),
                        format!("{:.3} ({:.3})", c.pce, c.pce_se),
                        format!("{:.3}", c.mean_y0),
                        format!("{:.3}", c.mean_y1),
                    ]
                })
                .collect();
            Ok(format!(
                "## Oracle truth ({} subjects)\n\n{}",
                t.oracle_n,
                md_table(&["Stratum", "Probability (SE)", "PCE (SE)", "E[Y(0)]", "E[Y(1)]"], &rows)
            ))
        }
    }
}
