//! Synthetic 2×2 crossover trials with known principal causal effects.
//!
//! Each subject draws a baseline covariate `X ~ N(μX, σX²)` and a Gaussian
//! noise vector `(e_A0, e_A1, e_Y0, e_Y1)` with unit variances and
//!
//! ```text
//! corr(e_A0, e_A1) = rho_strata
//! corr(e_At, e_Yt) = rho_within
//! corr(e_At, e_Y(1-t)) = rho_cross
//! corr(e_Y0, e_Y1) = 0
//! ```
//!
//! The stratum noises are pushed through the normal-to-logistic quantile map,
//! so `A(t) = 1{η_t + β_t X + ε_t > 0}` has a logistic principal score
//! `expit(η_t + β_t X)` whatever the correlations. Outcomes are
//! `Y(t) = γ_t + δ_t X + σ_t e_Yt`.
//!
//! `rho_within ≠ 0` breaks within-treatment ignorability, `rho_cross ≠ 0`
//! breaks cross-world ignorability and `rho_strata ≠ 0` breaks conditional
//! cross-world stratum independence.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, CrossoverData, PeriodObs, Sequence, StratumLabel, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, Matrix};
use crate::resampling::{stream_rng, stream_seed, StreamRng};
use crate::scalar::{lit, Real};
use crate::special::normal_to_logistic;

/// Sub-stream tag for the truth oracle.
const ORACLE_STREAM: u64 = 0x6f72_6163_6c65;

/// Linear index `intercept + slope·X` of the latent stratum threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumModel {
    pub intercept: f64,
    pub slope: f64,
}

/// `Y(t) = intercept + slope·X + sd·e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub slope: f64,
    pub sd: f64,
}

/// Data-generating process of a simulated crossover trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_subjects: usize,
    pub seed: u64,
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    pub stratum_control: StratumModel,
    pub stratum_experimental: StratumModel,
    pub outcome_control: OutcomeModel,
    pub outcome_experimental: OutcomeModel,
    pub rho_within: f64,
    pub rho_cross: f64,
    pub rho_strata: f64,
    /// Added to every period-2 outcome.
    pub period_effect: f64,
    /// Period-2 outcome gains `carryover · (period-1 outcome)`.
    pub carryover: f64,
    /// Outcome missingness rate, control then experimental.
    pub missing_y_prob: [f64; 2],
}

impl Default for DgpConfig {
    fn default() -> Self {
        Scenario::PaperLike.config()
    }
}

impl DgpConfig {
    pub fn stratum(&self, arm: Arm) -> StratumModel {
        match arm {
            Arm::Control => self.stratum_control,
            Arm::Experimental => self.stratum_experimental,
        }
    }

    pub fn outcome(&self, arm: Arm) -> OutcomeModel {
        match arm {
            Arm::Control => self.outcome_control,
            Arm::Experimental => self.outcome_experimental,
        }
    }

    /// Correlation matrix of `(e_A0, e_A1, e_Y0, e_Y1)`.
    pub fn correlation(&self) -> Matrix<f64> {
        let (w, c, s) = (self.rho_within, self.rho_cross, self.rho_strata);
        Matrix::from_rows(&[vec![1.0, s, w, c], vec![s, 1.0, c, w], vec![w, c, 1.0, 0.0], vec![c, w, 0.0, 1.0]])
    }

    fn noise_factor(&self) -> Result<Matrix<f64>> {
        cholesky_psd(&self.correlation(), 1e-12).map_err(|_| {
            Error::Config(format!(
                "correlations rho_within = {}, rho_cross = {}, rho_strata = {} do not form a positive semi-definite matrix",
                self.rho_within, self.rho_cross, self.rho_strata
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        let finite = [
            self.covariate_mean,
            self.stratum_control.intercept,
            self.stratum_control.slope,
            self.stratum_experimental.intercept,
            self.stratum_experimental.slope,
            self.outcome_control.intercept,
            self.outcome_control.slope,
            self.outcome_experimental.intercept,
            self.outcome_experimental.slope,
            self.period_effect,
            self.carryover,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("model parameters must be finite".into());
        }
        for (name, sd) in [
            ("covariate_sd", self.covariate_sd),
            ("outcome_control.sd", self.outcome_control.sd),
            ("outcome_experimental.sd", self.outcome_experimental.sd),
        ] {
            if !(sd > 0.0 && sd.is_finite()) {
                return bad(format!("{name} must be positive, got {sd}"));
            }
        }
        for (name, r) in
            [("rho_within", self.rho_within), ("rho_cross", self.rho_cross), ("rho_strata", self.rho_strata)]
        {
            if !(-1.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [-1, 1], got {r}"));
            }
        }
        for p in self.missing_y_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("missing_y_prob entries must lie in [0, 1], got {p}"));
            }
        }
        self.noise_factor().map(|_| ())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: DgpConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Named presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Calibrated to a small glucose-variability crossover: 163 subjects,
    /// roughly 32/25/19/24% in `S_00/S_01/S_10/S_11`, arm outcome means
    /// −3.4 and −1.7 with SDs near 25. Within-arm ignorability is violated
    /// (`rho_within = 0.7`); cross-world ignorability and conditional
    /// stratum independence hold.
    PaperLike,
    /// Shared stratum noise and a higher experimental threshold index, so
    /// `A(1) ≥ A(0)` for every subject.
    Monotone,
    /// `rho_within = 0.9`.
    A3pViolated,
    /// `rho_within = rho_cross = 0.4`.
    A3ppViolated,
    /// `rho_strata = 0.8`, `rho_within = 0.3`.
    A4pViolated,
    /// Period effect 10 and carry-over 0.5.
    CarryoverHeavy,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::PaperLike,
        Scenario::Monotone,
        Scenario::A3pViolated,
        Scenario::A3ppViolated,
        Scenario::A4pViolated,
        Scenario::CarryoverHeavy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PaperLike => "paper_like",
            Scenario::Monotone => "monotone",
            Scenario::A3pViolated => "a3p_violated",
            Scenario::A3ppViolated => "a3pp_violated",
            Scenario::A4pViolated => "a4p_violated",
            Scenario::CarryoverHeavy => "carryover_heavy",
        }
    }

    pub fn config(self) -> DgpConfig {
        let base = DgpConfig {
            n_subjects: 163,
            seed: 0,
            covariate_mean: 41.3,
            covariate_sd: 22.4,
            stratum_control: StratumModel { intercept: 1.1254, slope: -0.035 },
            stratum_experimental: StratumModel { intercept: 1.4, slope: -0.035 },
            outcome_control: OutcomeModel { intercept: 13.12, slope: -0.4, sd: 23.77 },
            outcome_experimental: OutcomeModel { intercept: 14.82, slope: -0.4, sd: 23.12 },
            rho_within: 0.7,
            rho_cross: 0.0,
            rho_strata: 0.0,
            period_effect: 0.0,
            carryover: 0.0,
            missing_y_prob: [0.0, 0.0],
        };
        match self {
            Scenario::PaperLike => base,
            Scenario::Monotone => DgpConfig {
                stratum_control: StratumModel { intercept: 3.0, slope: -0.08 },
                stratum_experimental: StratumModel { intercept: 3.6, slope: -0.08 },
                rho_strata: 1.0,
                rho_within: 0.3,
                rho_cross: 0.3,
                ..base
            },
            Scenario::A3pViolated => DgpConfig { rho_within: 0.9, ..base },
            Scenario::A3ppViolated => DgpConfig { rho_within: 0.4, rho_cross: 0.4, ..base },
            Scenario::A4pViolated => DgpConfig { rho_strata: 0.8, rho_within: 0.3, ..base },
            Scenario::CarryoverHeavy => DgpConfig { period_effect: 10.0, carryover: 0.5, ..base },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
            Error::InvalidArgument(format!("unknown scenario {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

/// Covariate, potential indicators and potential outcomes of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSubject {
    pub x: f64,
    pub a: [bool; 2],
    pub y: [f64; 2],
}

impl PotentialSubject {
    pub fn stratum(&self) -> StratumLabel {
        StratumLabel::joint(self.a[0], self.a[1])
    }
}

struct Sampler<'a> {
    cfg: &'a DgpConfig,
    factor: Matrix<f64>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a DgpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, factor: cfg.noise_factor()? })
    }

    fn draw(&self, rng: &mut StreamRng) -> PotentialSubject {
        let c = self.cfg;
        let x = c.covariate_mean
            + c.covariate_sd * {
                let z: f64 = StandardNormal.sample(rng);
                z
            };
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let e: [f64; 4] = std::array::from_fn(|i| (0..=i).map(|k| self.factor[(i, k)] * z[k]).sum());
        let a = [Arm::Control, Arm::Experimental].map(|arm| {
            let m = c.stratum(arm);
            m.intercept + m.slope * x + normal_to_logistic(e[arm.index()]) > 0.0
        });
        let y = [Arm::Control, Arm::Experimental].map(|arm| {
            let m = c.outcome(arm);
            m.intercept + m.slope * x + m.sd * e[2 + arm.index()]
        });
        PotentialSubject { x, a, y }
    }
}

/// Draws `n` subjects' potential values from stream `seed`.
///
/// A trial generated with the same seed has exactly these potential values.
pub fn draw_potential(config: &DgpConfig, n: usize, seed: u64) -> Result<Vec<PotentialSubject>> {
    let sampler = Sampler::new(config)?;
    let mut rng = stream_rng(seed, 0);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Simulates an observed crossover trial.
///
/// Potential values come from sub-stream 0 of the seed and assignment
/// (sequence, missingness) from sub-stream 1. Sequences are assigned 1:1 at random. The period-1 outcome equals the
/// potential outcome of the arm received; the period-2 outcome adds the
/// period effect and `carryover` times the period-1 outcome. Missingness is
/// applied last, independently per arm.
pub fn generate_trial<T: Real>(config: &DgpConfig) -> Result<CrossoverData<T>> {
    let potential = draw_potential(config, config.n_subjects, config.seed)?;
    let mut rng = stream_rng(config.seed, 1);
    let width = config.n_subjects.to_string().len();
    let mut records = Vec::with_capacity(config.n_subjects);
    for (i, s) in potential.iter().enumerate() {
        let sequence = if rng.random_bool(0.5) { Sequence::ControlFirst } else { Sequence::ExperimentalFirst };
        let missing: [bool; 2] = std::array::from_fn(|t| rng.random::<f64>() < config.missing_y_prob[t]);
        let first = sequence.arm_in_period(0);
        let second = sequence.arm_in_period(1);
        let y1 = s.y[first.index()];
        let y2 = s.y[second.index()] + config.period_effect + config.carryover * y1;
        let obs = |arm: Arm, y: f64| PeriodObs {
            treatment: arm,
            a: Some(s.a[arm.index()]),
            y: (!missing[arm.index()]).then(|| lit(y)),
        };
        records.push(SubjectRecord::new(
            format!("S{:0width$}", i + 1),
            vec![lit(s.x)],
            sequence,
            [obs(first, y1), obs(second, y2)],
        )?);
    }
    Ok(CrossoverData { covariate_names: vec!["baseline".to_string()], records })
}

/// Oracle values for one joint stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub stratum: StratumLabel,
    pub probability: f64,
    pub probability_se: f64,
    /// `E[Y(1) − Y(0) | S]`.
    pub pce: f64,
    pub pce_se: f64,
    pub mean_y0: f64,
    pub mean_y1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub oracle_n: usize,
    /// `S_00, S_01, S_10, S_11`.
    pub cells: Vec<TruthCell>,
}

impl TruthTable {
    pub fn cell(&self, stratum: StratumLabel) -> &TruthCell {
        &self.cells[stratum.joint_index().expect("joint stratum")]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stratum", "probability", "probability_se", "pce", "pce_se", "mean_y0", "mean_y1", "n"])?;
        for c in &self.cells {
            w.write_record([
                c.stratum.to_string(),
                c.probability.to_string(),
                c.probability_se.to_string(),
                c.pce.to_string(),
                c.pce_se.to_string(),
                c.mean_y0.to_string(),
                c.mean_y1.to_string(),
                c.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest oracle sample accepted by [`true_pce`].
pub const MIN_ORACLE_N: usize = 10_000;

/// Monte Carlo truth from `oracle_n` fresh subjects' potential values, drawn
/// from a stream separate from the trial's.
pub fn true_pce(config: &DgpConfig, oracle_n: usize) -> Result<TruthTable> {
    if oracle_n < MIN_ORACLE_N {
        return Err(Error::InvalidArgument(format!("oracle_n must be at least {MIN_ORACLE_N}, got {oracle_n}")));
    }
    let subjects = draw_potential(config, oracle_n, stream_seed(config.seed, ORACLE_STREAM))?;
    truth_from_potential(&subjects)
}

/// Cell probabilities and mean differences of a potential-outcome sample.
pub fn truth_from_potential(subjects: &[PotentialSubject]) -> Result<TruthTable> {
    let n = subjects.len();
    let mut stats = [(0usize, 0.0f64, 0.0f64, 0.0f64, 0.0f64); 4];
    for s in subjects {
        let c = s.stratum().joint_index().unwrap();
        let d = s.y[1] - s.y[0];
        let e = &mut stats[c];
        e.0 += 1;
        e.1 += d;
        e.2 += d * d;
        e.3 += s.y[0];
        e.4 += s.y[1];
    }
    let mut cells = Vec::with_capacity(4);
    for (c, stratum) in StratumLabel::JOINT.into_iter().enumerate() {
        let (m, sum, sumsq, s0, s1) = stats[c];
        if m < 2 {
            return Err(Error::Inestimable {
                stratum,
                reason: format!(
                    "{m} of {n} oracle subjects fell in this stratum; increase oracle_n or check for a degenerate configuration"
                ),
            });
        }
        let mf = m as f64;
        let mean = sum / mf;
        let var = ((sumsq - mf * mean * mean) / (mf - 1.0)).max(0.0);
        let p = mf / n as f64;
        cells.push(TruthCell {
            stratum,
            probability: p,
            probability_se: (p * (1.0 - p) / n as f64).sqrt(),
            pce: mean,
            pce_se: (var / mf).sqrt(),
            mean_y0: s0 / mf,
            mean_y1: s1 / mf,
            n: m,
        });
    }
    Ok(TruthTable { oracle_n: n, cells })
}
