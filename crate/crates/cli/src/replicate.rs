//! Repeated simulate → estimate → diagnose runs with aggregated operating
//! characteristics.
//!
//! Trial `r` uses seed `stream_seed(seed, r)`; its bootstrap and independence
//! test use sub-streams 1 and 2 of that seed.

use pstrat::data::{select_covariates, StratumLabel};
use pstrat::diagnostics::{
    crossover_effects_test, ignorability_regressions, independence_test, monotonicity_report, MonotonicityDirection,
};
use pstrat::estimators::{estimate_pce_table, Contrast, Method, MethodSelection, PceConfig, ProbMethod};
use pstrat::report::{md_table, to_json, Format};
use pstrat::resampling::stream_seed;
use pstrat::simulator::{generate_trial, true_pce, DgpConfig, TruthTable};
use pstrat::{BootstrapSpec, Dataset, Result};
use rayon::prelude::*;
use serde::Serialize;

pub struct Options {
    pub reps: usize,
    pub methods: MethodSelection,
    pub bootstrap: usize,
    pub confidence: f64,
    pub oracle_n: usize,
}

const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateAggregate {
    pub stratum: StratumLabel,
    pub method: Method,
    pub truth: f64,
    pub n_estimable: usize,
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    pub empirical_sd: Option<f64>,
    pub mean_se: Option<f64>,
    /// Share of intervals containing the truth.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestAggregate {
    pub test: String,
    pub n_completed: usize,
    /// Share of completed runs with p < 0.05.
    pub rejection_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub reps: usize,
    pub n_subjects: usize,
    pub seed: u64,
    pub truth: TruthTable,
    pub estimates: Vec<EstimateAggregate>,
    pub mean_violating_proportion: Option<f64>,
    pub tests: Vec<TestAggregate>,
}

#[derive(Default)]
struct RunOutcome {
    /// `(method, stratum) → (point, se, ci)` in method-major, stratum order.
    diffs: Vec<(Method, StratumLabel, Option<(f64, Option<f64>, Option<(f64, f64)>)>)>,
    violating: Option<f64>,
    /// `(test name, p-value)`.
    p_values: Vec<(&'static str, Option<f64>)>,
}

fn one_run(cfg: &DgpConfig, r: usize, opts: &Options) -> Result<RunOutcome> {
    let seed = stream_seed(cfg.seed, r as u64);
    let trial_cfg = DgpConfig { seed, ..cfg.clone() };
    let data = generate_trial::<f64>(&trial_cfg)?;
    let bootstrap = match opts.bootstrap {
        0 => None,
        b => Some(BootstrapSpec::with_confidence(b, stream_seed(seed, 1), opts.confidence)?),
    };
    let dataset = Dataset::Crossover(data.clone());
    let table = estimate_pce_table(&dataset, &PceConfig { methods: opts.methods, covariates: None, bootstrap })?;
    let mut out = RunOutcome::default();
    for method in opts.methods.methods() {
        for s in StratumLabel::JOINT {
            let v = table.summary(s, method, Contrast::Diff).map(|d| (d.point, d.se, d.ci95));
            out.diffs.push((method, s, v));
        }
    }
    out.violating = monotonicity_report(&data.records, MonotonicityDirection::IncreasingA1geA0)
        .ok()
        .map(|m| m.violating_cell_proportion);
    let covariates = select_covariates(&data.covariate_names, None)?;
    let ign = ignorability_regressions(&data, &covariates).ok();
    for (name, own) in [("ignorability_own_arm", true), ("ignorability_cross_arm", false)] {
        match &ign {
            Some(rep) => {
                for row in rep.rows.iter().filter(|x| x.is_own_arm() == own) {
                    out.p_values.push((name, Some(row.p_value)));
                }
            }
            None => out.p_values.push((name, None)),
        }
    }
    let cx = crossover_effects_test(&data.records).ok();
    out.p_values.push(("treatment_effect", cx.as_ref().map(|c| c.treatment_p())));
    out.p_values.push(("period_effect", cx.as_ref().map(|c| c.period_p())));
    out.p_values.push(("sequence_effect", cx.as_ref().map(|c| c.sequence_p())));
    if opts.bootstrap > 0 {
        let spec = BootstrapSpec::new(opts.bootstrap, stream_seed(seed, 2))?;
        let p = independence_test(&data, &covariates, &spec, ProbMethod::CondIndepA4p).ok().map(|r| r.p_value);
        out.p_values.push(("independence_a4p", p));
    }
    Ok(out)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sd(v: &[f64]) -> Option<f64> {
    (v.len() >= 2).then(|| pstrat::resampling::sample_sd(v))
}

pub fn run(cfg: &DgpConfig, opts: &Options) -> Result<Summary> {
    let truth = true_pce(cfg, opts.oracle_n)?;
    let runs: Vec<RunOutcome> = (0..opts.reps).into_par_iter().map(|r| one_run(cfg, r, opts)).collect::<Result<_>>()?;

    let mut estimates = Vec::new();
    for method in opts.methods.methods() {
        for s in StratumLabel::JOINT {
            let t = truth.cell(s).pce;
            let cells: Vec<_> = runs
                .iter()
                .filter_map(|o| o.diffs.iter().find(|d| d.0 == method && d.1 == s).and_then(|d| d.2))
                .collect();
            let points: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let ses: Vec<f64> = cells.iter().filter_map(|c| c.1).collect();
            let cis: Vec<(f64, f64)> = cells.iter().filter_map(|c| c.2).collect();
            let m = mean(&points);
            estimates.push(EstimateAggregate {
                stratum: s,
                method,
                truth: t,
                n_estimable: points.len(),
                mean: m,
                bias: m.map(|m| m - t),
                empirical_sd: sd(&points),
                mean_se: mean(&ses),
                coverage: (!cis.is_empty())
                    .then(|| cis.iter().filter(|(lo, hi)| *lo <= t && t <= *hi).count() as f64 / cis.len() as f64),
            });
        }
    }

    let mut names: Vec<&'static str> = Vec::new();
    for o in &runs {
        for (n, _) in &o.p_values {
            if !names.contains(n) {
                names.push(n);
            }
        }
    }
    let tests = names
        .into_iter()
        .map(|name| {
            let ps: Vec<f64> = runs
                .iter()
                .flat_map(|o| o.p_values.iter().filter(|(n, _)| *n == name).filter_map(|(_, p)| *p))
                .collect();
            TestAggregate {
                test: name.to_string(),
                n_completed: ps.len(),
                rejection_rate: (!ps.is_empty())
                    .then(|| ps.iter().filter(|&&p| p < ALPHA).count() as f64 / ps.len() as f64),
            }
        })
        .collect();

    let violating: Vec<f64> = runs.iter().filter_map(|o| o.violating).collect();
    Ok(Summary {
        reps: opts.reps,
        n_subjects: cfg.n_subjects,
        seed: cfg.seed,
        truth,
        estimates,
        mean_violating_proportion: mean(&violating),
        tests,
    })
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn render(s: &Summary, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(s),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["kind", "method", "item", "statistic", "value"])?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for e in &s.estimates {
                let m = e.method.to_string();
                let st = e.stratum.to_string();
                for (stat, v) in [
                    ("truth", Some(e.truth)),
                    ("n_estimable", Some(e.n_estimable as f64)),
                    ("mean", e.mean),
                    ("bias", e.bias),
                    ("empirical_sd", e.empirical_sd),
                    ("mean_se", e.mean_se),
                    ("coverage", e.coverage),
                ] {
                    w.write_record(["estimate", &m, &st, stat, &opt(v)])?;
                }
            }
            w.write_record([
                "monotonicity",
                "",
                "S_10",
                "mean_violating_proportion",
                &opt(s.mean_violating_proportion),
            ])?;
            for t in &s.tests {
                w.write_record(["test", "", &t.test, "n_completed", &t.n_completed.to_string()])?;
                w.write_record(["test", "", &t.test, "rejection_rate", &opt(t.rejection_rate)])?;
            }
            w.flush()?;
            let bytes = w.into_inner().map_err(|e| pstrat::Error::Io(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv is utf-8"))
        }
        Format::Md => {
            let mut out =
                format!("## Replication summary ({} trials of {} subjects, seed {})\n\n", s.reps, s.n_subjects, s.seed);
            let rows: Vec<Vec<String>> = s
                .estimates
                .iter()
                .map(|e| {
                    vec![
                        e.stratum.to_string(),
                        e.method.to_string(),
                        format!("{:.3}", e.truth),
                        e.n_estimable.to_string(),
                        num(e.mean, 3),
                        num(e.bias, 3),
                        num(e.empirical_sd, 3),
                        num(e.mean_se, 3),
                        num(e.coverage, 3),
                    ]
                })
                .collect();
            out.push_str(&md_table(
                &["Stratum", "Method", "Truth", "Runs", "Mean", "Bias", "Emp. SD", "Mean SE", "Coverage"],
                &rows,
            ));
            out.push('\n');
            let rows: Vec<Vec<String>> = s
                .tests
                .iter()
                .map(|t| vec![t.test.clone(), t.n_completed.to_string(), num(t.rejection_rate, 3)])
                .collect();
            out.push_str(&md_table(&["Test", "Completed", "Rejection rate (p < 0.05)"], &rows));
            out.push_str(&format!("\nMean S_10 proportion: {}\n", num(s.mean_violating_proportion, 4)));
            Ok(out)
        }
    }
}
