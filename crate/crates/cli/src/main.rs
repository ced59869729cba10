mod replicate;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pstrat::data::{select_covariates, ThresholdRule};
use pstrat::diagnostics::{
    crossover_effects_test, ignorability_regressions, independence_test, monotonicity_report, MonotonicityDirection,
};
use pstrat::estimators::{estimate_pce_table, MethodSelection, PceCell, PceConfig, ProbMethod};
use pstrat::report::{render_diagnostics, render_pce_table, render_truth, DiagnosticsDocument, Format};
use pstrat::simulator::{generate_trial, true_pce, DgpConfig, Scenario};
use pstrat::{load_dataset, BootstrapSpec, Dataset, Error};
use sha2::{Digest, Sha256};

/// Principal stratification analysis of two-arm trials.
#[derive(Debug, Parser)]
#[command(name = "pstrat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a crossover trial and its oracle truth table.
    Simulate(SimulateArgs),
    /// Estimate principal causal effects by stratum.
    Estimate(EstimateArgs),
    /// Assess monotonicity, ignorability, cross-world independence and crossover effects.
    Diagnose(DiagnoseArgs),
    /// Repeat simulate, estimate and diagnose, then aggregate bias, coverage and rejection rates.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
struct DgpArgs {
    /// Preset data-generating process.
    #[arg(long, value_parser = parse_scenario, conflicts_with = "config")]
    scenario: Option<Scenario>,
    /// TOML file with data-generating parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of subjects (overrides the scenario or config).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subjects in the Monte Carlo truth oracle.
    #[arg(long, default_value_t = 200_000)]
    oracle_n: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    /// Dataset CSV path [default: $PSTRAT_OUT_DIR/trial.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truth table path; `.json` or `.md` select the format, CSV otherwise [default: <out>_truth.csv].
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    /// Crossover (t_p1 column) or parallel (treatment column) CSV.
    #[arg(long)]
    input: PathBuf,
    /// Principal-score covariates, comma separated [default: all x_ columns].
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Rebuild the stratum indicator from the outcome, e.g. "y>0".
    #[arg(long)]
    derive_a: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value = "md")]
    format: FormatArg,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: AnalysisArgs,
    #[arg(long, default_value = "both")]
    method: MethodArg,
    /// Bootstrap resamples for standard errors and intervals; 0 disables.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Monotonicity,
    Ignorability,
    Independence,
    CrossoverEffects,
    All,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: AnalysisArgs,
    #[arg(long, value_delimiter = ',', default_value = "all")]
    checks: Vec<Check>,
    #[arg(long, default_value = "increasing")]
    direction: DirectionArg,
    #[arg(long, default_value = "a4p")]
    independence_method: IndependenceArg,
    /// Bootstrap resamples for the independence test.
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    /// Number of simulated trials.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value = "both")]
    method: MethodArg,
    /// Bootstrap resamples per trial; 0 disables intervals and the independence test.
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value = "md")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Md,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Md => Format::Md,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Ps,
    Direct,
    Both,
}

impl From<MethodArg> for MethodSelection {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ps => MethodSelection::Ps,
            MethodArg::Direct => MethodSelection::Direct,
            MethodArg::Both => MethodSelection::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Increasing,
    Decreasing,
    Equality,
}

impl From<DirectionArg> for MonotonicityDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Increasing => MonotonicityDirection::IncreasingA1geA0,
            DirectionArg::Decreasing => MonotonicityDirection::DecreasingA1leA0,
            DirectionArg::Equality => MonotonicityDirection::Equality,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IndependenceArg {
    /// Conditional on covariates.
    A4p,
    /// Unconditional.
    A4pp,
}

impl From<IndependenceArg> for ProbMethod {
    fn from(m: IndependenceArg) -> Self {
        match m {
            IndependenceArg::A4p => ProbMethod::CondIndepA4p,
            IndependenceArg::A4pp => ProbMethod::IndepA4pp,
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownColumn(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

const OUT_DIR_ENV: &str = "PSTRAT_OUT_DIR";

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve_dgp(args: &DgpArgs) -> Result<DgpConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            DgpConfig::from_toml(&text)?
        }
        None => args.scenario.unwrap_or(Scenario::PaperLike).config(),
    };
    if let Some(n) = args.n {
        cfg.n_subjects = n;
    }
    cfg.seed = args.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn truth_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        Some("md") => Format::Md,
        _ => Format::Csv,
    }
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let cfg = resolve_dgp(&args.dgp)?;
    let out = args.out.unwrap_or_else(|| default_out_dir().join("trial.csv"));
    let truth_path = args.truth.unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
        out.with_file_name(format!("{stem}_truth.csv"))
    });
    let data = generate_trial::<f64>(&cfg)?;
    let mut buf = Vec::new();
    pstrat::data::write_crossover_csv(&data, &mut buf)?;
    write_output(Some(&out), std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    // a stratum that is empty by construction leaves the dataset usable
    let truth = match true_pce(&cfg, args.dgp.oracle_n) {
        Ok(t) => Some(t),
        Err(e @ Error::Inestimable { .. }) => {
            log::warn!("truth table not written: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(t) = &truth {
        write_output(Some(&truth_path), &render_truth(t, truth_format(&truth_path))?)?;
    }
    println!("seed: {}", cfg.seed);
    println!("config_sha256: {}", sha256_hex(cfg.to_toml().as_bytes()));
    println!("dataset: {}", out.display());
    match truth {
        Some(_) => println!("truth: {}", truth_path.display()),
        None => println!("truth: none (a stratum is empty under this configuration)"),
    }
    Ok(())
}

fn load_input(args: &AnalysisArgs) -> Result<Dataset<f64>, Failure> {
    let data = load_dataset::<f64>(&args.input)?;
    Ok(match &args.derive_a {
        Some(rule) => data.apply_threshold(&rule.parse::<ThresholdRule<f64>>()?),
        None => data,
    })
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let data = load_input(&args.common)?;
    let bootstrap = match args.bootstrap {
        0 => None,
        b => Some(BootstrapSpec::with_confidence(b, args.common.seed, args.common.confidence)?),
    };
    let config = PceConfig { methods: args.method.into(), covariates: args.common.covariates.clone(), bootstrap };
    let table = estimate_pce_table(&data, &config)?;
    write_output(args.common.out.as_deref(), &render_pce_table(&table, args.common.format.into())?)?;
    if table.rows.iter().all(|r| matches!(r.cell, PceCell::Inestimable { .. })) {
        return Err(Failure::runtime("no stratum was estimable"));
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> CmdResult {
    let Dataset::Crossover(data) = load_input(&args.common)? else {
        return Err(Failure::usage("diagnostics require crossover data"));
    };
    let covariates = select_covariates(&data.covariate_names, args.common.covariates.as_deref())?;
    let want = |c: Check| args.checks.contains(&Check::All) || args.checks.contains(&c);
    let mut doc = DiagnosticsDocument::new(data.records.len());
    let fail = |name: &str, e: Error| {
        log::error!("{name}: {e}");
        (name.to_string(), e.to_string())
    };
    if want(Check::Monotonicity) {
        match monotonicity_report(&data.records, args.direction.into()) {
            Ok(r) => doc.monotonicity = Some(r),
            Err(e) => doc.failures.push(fail("monotonicity", e)),
        }
    }
    if want(Check::Ignorability) {
        match ignorability_regressions(&data, &covariates) {
            Ok(r) => doc.ignorability = Some(r),
            Err(e) => doc.failures.push(fail("ignorability", e)),
        }
    }
    if want(Check::Independence) {
        let result = BootstrapSpec::with_confidence(args.bootstrap, args.common.seed, args.common.confidence)
            .and_then(|spec| independence_test(&data, &covariates, &spec, args.independence_method.into()));
        match result {
            Ok(r) => doc.independence = Some(r),
            Err(e) => doc.failures.push(fail("independence", e)),
        }
    }
    if want(Check::CrossoverEffects) {
        match crossover_effects_test(&data.records) {
            Ok(r) => doc.crossover_effects = Some(r),
            Err(e) => doc.failures.push(fail("crossover_effects", e)),
        }
    }
    write_output(args.common.out.as_deref(), &render_diagnostics(&doc, args.common.format.into())?)?;
    if doc.completed() == 0 {
        return Err(Failure::runtime("no diagnostic check completed"));
    }
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> CmdResult {
    let cfg = resolve_dgp(&args.dgp)?;
    if args.reps == 0 {
        return Err(Failure::usage("--reps must be positive"));
    }
    let opts = replicate::Options {
        reps: args.reps,
        methods: args.method.into(),
        bootstrap: args.bootstrap,
        confidence: args.confidence,
        oracle_n: args.dgp.oracle_n,
    };
    let summary = replicate::run(&cfg, &opts)?;
    write_output(args.out.as_deref(), &replicate::render(&summary, args.format.into())?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Replicate(a) => cmd_replicate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
