//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pstrat::data::{as_parallel, classify_strata, select_covariates};
use pstrat::diagnostics::{
    crossover_effects_test, ignorability_regressions, independence_test, monotonicity_report, MonotonicityDirection,
};
use pstrat::estimators::{
    estimate_mu_direct, estimate_mu_hayden, estimate_pce_table, estimate_stratum_probs, Contrast, Method,
    MethodSelection, PceConfig, PrincipalScoreModel, ProbMethod,
};
use pstrat::glm::{fit_logistic, fit_ols, DesignMatrix};
use pstrat::resampling::{bootstrap, sample_sd, stream_seed};
use pstrat::simulator::{generate_trial, true_pce, DgpConfig, Scenario};
use pstrat::{Arm, BootstrapSpec, CrossoverData, Dataset, StratumLabel};
use rayon::prelude::*;

const SEED: u64 = 20_240_917;
const ALPHA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn trial(cfg: &DgpConfig, n: usize, r: u64) -> CrossoverData<f64> {
    let cfg = DgpConfig { n_subjects: n, seed: stream_seed(cfg.seed, r), ..cfg.clone() };
    generate_trial(&cfg).expect("valid scenario")
}

fn regression_oracles() -> Outcome {
    let mut worst_ols = 0.0f64;
    for case in common::ols_cases() {
        let (beta, _) = common::normal_equations(&case.rows(), &case.y);
        let d = DesignMatrix::with_intercept(case.y.len(), case.columns.clone()).unwrap();
        let fit = fit_ols(&d, &case.y).unwrap();
        for (b, o) in fit.coefficients.iter().zip(&beta) {
            worst_ols = worst_ols.max((b - o).abs() / o.abs().max(1.0));
        }
    }
    let mut worst_logit = 0.0f64;
    for case in common::logistic_cases() {
        let oracle = common::grid_search_logistic(&case.rows(), &case.a);
        let d = DesignMatrix::with_intercept(case.a.len(), case.columns.clone()).unwrap();
        let fit = fit_logistic(&d, &case.a).unwrap();
        for (b, o) in fit.coefficients.iter().zip(&oracle) {
            worst_logit = worst_logit.max((b - o).abs());
        }
    }
    outcome(
        worst_ols <= 1e-10 && worst_logit <= 1e-3,
        format!("max OLS gap {worst_ols:.2e} (tol 1e-10), max logistic gap {worst_logit:.2e} (tol 1e-3)"),
    )
}

fn estimator_identities() -> Outcome {
    let base = DgpConfig { seed: SEED, ..DgpConfig::default() };
    let data = trial(&base, 400, 0);
    let intercept_only = Dataset::Crossover(CrossoverData {
        covariate_names: vec![],
        records: data
            .records
            .iter()
            .map(|r| {
                pstrat::SubjectRecord::from_arms(
                    r.subject_id(),
                    vec![],
                    r.sequence(),
                    [r.a(Arm::Control), r.a(Arm::Experimental)],
                    [r.y(Arm::Control), r.y(Arm::Experimental)],
                )
            })
            .collect(),
    });
    let a4p = estimate_stratum_probs(&intercept_only, ProbMethod::CondIndepA4p, &[]).unwrap();
    let a4pp = estimate_stratum_probs(&intercept_only, ProbMethod::IndepA4pp, &[]).unwrap();
    let gap_a: f64 = a4p.probs.iter().zip(&a4pp.probs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);

    let mut exact_b = true;
    for arm in Arm::BOTH {
        let obs = as_parallel(&data.records, arm);
        let ps = PrincipalScoreModel::constant(arm.other(), 0.5).unwrap();
        for s in StratumLabel::JOINT {
            let own = s.own_index(arm).unwrap() == 1;
            let ys: Vec<f64> = obs.iter().filter(|o| o.a == Some(own)).filter_map(|o| o.y).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            exact_b &= estimate_mu_hayden(&obs, &ps, s).unwrap() == mean;
        }
    }

    let table = classify_strata(&data.records).unwrap();
    let mut gap_c = 0.0f64;
    for arm in Arm::BOTH {
        let total: f64 = StratumLabel::JOINT
            .iter()
            .filter(|&&s| table.count(s) > 0)
            .map(|&s| table.proportion(s) * estimate_mu_direct(&data.records, s, arm).unwrap())
            .sum();
        let mean = data.records.iter().map(|r| r.y(arm).unwrap()).sum::<f64>() / data.records.len() as f64;
        gap_c = gap_c.max((total - mean).abs());
    }
    outcome(
        gap_a <= 1e-10 && exact_b && gap_c <= 1e-10,
        format!("(a) A4' vs A4'' gap {gap_a:.2e}; (b) constant-score equals stratified mean: {exact_b}; (c) reconstruction gap {gap_c:.2e}"),
    )
}

fn bootstrap_oracle() -> Outcome {
    let data = [1.0, 2.0, 3.0];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let exact = common::exhaustive_bootstrap_sd(&data, mean);
    let r = bootstrap(&data, |s: &[f64]| Ok(mean(s)), &BootstrapSpec::new(100_000, SEED).unwrap()).unwrap();
    let rel = (r.se / exact - 1.0).abs();
    outcome(
        (exact - (2.0f64 / 9.0).sqrt()).abs() < 1e-14 && rel <= 0.02,
        format!("exhaustive SD {exact:.6}, engine se {:.6} at B=100000 (relative gap {rel:.4}, tol 0.02)", r.se),
    )
}

fn consistency() -> Outcome {
    let base = DgpConfig { seed: SEED, ..Scenario::PaperLike.config() };
    assert!(base.rho_cross == 0.0 && base.rho_strata == 0.0 && base.rho_within == 0.7);
    let truth = true_pce(&base, 200_000).unwrap();
    let reps = 20u64;
    let results: Vec<(bool, bool, bool)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = trial(&base, 5000, r);
            let ys: Vec<f64> = data
                .records
                .iter()
                .flat_map(|x| [x.y(Arm::Control).unwrap(), x.y(Arm::Experimental).unwrap()])
                .collect();
            let sd_y = sample_sd(&ys);
            let spec = BootstrapSpec::new(200, stream_seed(stream_seed(base.seed, r), 1)).unwrap();
            let cfg = PceConfig { methods: MethodSelection::Both, covariates: None, bootstrap: Some(spec) };
            let table = estimate_pce_table(&Dataset::Crossover(data), &cfg).unwrap();
            let (mut agree, mut near, mut strict) = (true, true, true);
            for s in StratumLabel::JOINT {
                let ps = table.summary(s, Method::Ps, Contrast::Diff).unwrap();
                let direct = table.diff(s, Method::Direct).unwrap();
                let t = truth.cell(s);
                let se = (ps.se.unwrap().powi(2) + t.pce_se.powi(2)).sqrt();
                agree &= (ps.point - direct).abs() <= 0.1 * sd_y;
                near &= (ps.point - t.pce).abs() <= 3.0 * se;
                strict &= (ps.point - t.pce).abs() <= 3.0 * t.pce_se;
            }
            (agree, near, strict)
        })
        .collect();
    let agree = results.iter().filter(|r| r.0).count();
    let near = results.iter().filter(|r| r.1).count();
    let both = results.iter().filter(|r| r.0 && r.1).count();
    let strict = results.iter().filter(|r| r.2).count();
    outcome(
        both >= 18,
        format!(
            "{both}/{reps} replicates meet both conditions (need 18): PS-DIRECT within 0.1 SD(Y) in {agree}, \
             PS within 3 combined SEs of truth in {near}; against the oracle SE alone {strict}"
        ),
    )
}

fn ignorability_pattern() -> Outcome {
    let base = DgpConfig { seed: SEED, ..Scenario::A3pViolated.config() };
    let reps = 100u64;
    let rows: Vec<Vec<(bool, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = trial(&base, 300, r);
            let cov = select_covariates(&data.covariate_names, None).unwrap();
            let rep = ignorability_regressions(&data, &cov).unwrap();
            rep.rows.iter().map(|x| (x.is_own_arm(), x.p_value)).collect()
        })
        .collect();
    let mut counts = [0usize; 4];
    let mut joint = 0;
    for rep in &rows {
        let mut all = true;
        for (i, &(own, p)) in rep.iter().enumerate() {
            let ok = if own { p < 0.001 } else { p > 0.05 };
            counts[i] += ok as usize;
            all &= ok;
        }
        joint += all as usize;
    }
    outcome(
        joint >= 90,
        format!(
            "{joint}/100 replicates with both own-arm p < 0.001 and both cross-arm p > 0.05 (need 90); \
             per regression: Y0~A0 {}, Y1~A1 {}, Y0~A1 {}, Y1~A0 {}",
            counts[0], counts[1], counts[2], counts[3]
        ),
    )
}

fn monotonicity_finding() -> Outcome {
    let reps = 100u64;
    let props = |scenario: Scenario| -> Vec<f64> {
        let base = DgpConfig { seed: SEED, ..scenario.config() };
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let data = trial(&base, 163, r);
                monotonicity_report(&data.records, MonotonicityDirection::IncreasingA1geA0)
                    .unwrap()
                    .violating_cell_proportion
            })
            .collect()
    };
    let paper = props(Scenario::PaperLike);
    let monotone = props(Scenario::Monotone);
    let in_band = paper.iter().filter(|&&p| (0.10..=0.25).contains(&p)).count();
    let max_mono = monotone.iter().cloned().fold(0.0, f64::max);
    outcome(
        in_band >= 90 && max_mono < 0.01,
        format!("paper_like in [0.10, 0.25] in {in_band}/100 (need 90); monotone max {max_mono:.4} (need < 0.01)"),
    )
}

fn independence_calibration() -> Outcome {
    let reps = 100u64;
    let rate = |scenario: Scenario| -> f64 {
        let base = DgpConfig { seed: SEED, ..scenario.config() };
        let rejections: usize = (0..reps)
            .into_par_iter()
            .map(|r| {
                let data = trial(&base, 500, r);
                let cov = select_covariates(&data.covariate_names, None).unwrap();
                let spec = BootstrapSpec::new(500, stream_seed(stream_seed(base.seed, r), 2)).unwrap();
                let rep = independence_test(&data, &cov, &spec, ProbMethod::CondIndepA4p).unwrap();
                (rep.p_value < ALPHA) as usize
            })
            .sum();
        rejections as f64 / reps as f64
    };
    assert_eq!(Scenario::A4pViolated.config().rho_strata, 0.8);
    let null = rate(Scenario::PaperLike);
    let power = rate(Scenario::A4pViolated);
    outcome(
        (0.01..=0.12).contains(&null) && power > 0.60,
        format!("rejection at 0.05, n=500, B=500: A4' true {null:.2} (need [0.01, 0.12]); rho_strata=0.8 {power:.2} (need > 0.60)"),
    )
}

fn crossover_effects() -> Outcome {
    let reps = 100u64;
    let null_cfg = DgpConfig { seed: SEED, ..Scenario::PaperLike.config() };
    let o = null_cfg.outcome_control;
    let sd_y = (o.slope.powi(2) * null_cfg.covariate_sd.powi(2) + o.sd.powi(2)).sqrt();
    let shifted = DgpConfig { period_effect: sd_y, ..null_cfg.clone() };
    let ps = |cfg: &DgpConfig| -> Vec<(f64, f64)> {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let rep = crossover_effects_test(&trial(cfg, 200, r).records).unwrap();
                (rep.period_p(), rep.sequence_p())
            })
            .collect()
    };
    let null = ps(&null_cfg);
    let frac =
        |v: &[(f64, f64)], f: &dyn Fn(&(f64, f64)) -> bool| v.iter().filter(|x| f(x)).count() as f64 / v.len() as f64;
    let period_null = frac(&null, &|x| x.0 < ALPHA);
    let sequence_null = frac(&null, &|x| x.1 < ALPHA);
    let alt = ps(&shifted);
    let power = frac(&alt, &|x| x.0 < 0.01);
    let band = 0.01..=0.12;
    outcome(
        band.contains(&period_null) && band.contains(&sequence_null) && power >= 0.95,
        format!(
            "null rejection at 0.05, n=200: period {period_null:.2}, sequence {sequence_null:.2} (need [0.01, 0.12]); \
             period effect {sd_y:.1} (1 SD): p < 0.01 in {:.2} (need >= 0.95)",
            power
        ),
    )
}

fn run_cli(args: &[&str], env_dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pstrat"))
        .args(args)
        .env("PSTRAT_OUT_DIR", env_dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (trial, truth) = (p("trial.csv"), p("truth.json"));
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate", "--n", "120", "--seed", "5", "--oracle-n", "20000", "--out", &trial, "--truth", &truth],
        vec![
            "estimate",
            "--input",
            &trial,
            "--bootstrap",
            "100",
            "--seed",
            "9",
            "--format",
            "csv",
            "--out",
            &p("estimate.csv"),
        ],
        vec!["estimate", "--input", &trial, "--method", "direct", "--format", "md", "--out", &p("estimate.md")],
        vec![
            "diagnose",
            "--input",
            &trial,
            "--bootstrap",
            "100",
            "--seed",
            "9",
            "--format",
            "json",
            "--out",
            &p("diagnose.json"),
        ],
        vec![
            "replicate",
            "--scenario",
            "a4p_violated",
            "--n",
            "80",
            "--reps",
            "3",
            "--bootstrap",
            "30",
            "--oracle-n",
            "10000",
            "--seed",
            "3",
            "--format",
            "csv",
            "--out",
            &p("replicate.csv"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        assert!(run_cli(&args, dir), "pstrat {} failed", args.join(" "));
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    // paths differ between the two runs only inside simulate's stdout, which is not compared
    let same = first == second;
    outcome(same && first.len() == 6, format!("{} output files compared, identical: {same}", first.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 regression oracles", regression_oracles),
        ("2 estimator identities", estimator_identities),
        ("3 bootstrap oracle", bootstrap_oracle),
        ("4 consistency under A3''+A4'", consistency),
        ("5 ignorability diagnostics pattern", ignorability_pattern),
        ("6 monotonicity finding", monotonicity_finding),
        ("7 independence test calibration", independence_calibration),
        ("8 crossover effects test", crossover_effects),
        ("9 CLI determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, f) in criteria {
        if let Some(pat) = &filter {
            if !name.contains(pat.as_str()) {
                continue;
            }
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += (!o.pass) as usize;
        println!("{verdict} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
