//! Principal stratification estimators for two-arm trials with a binary
//! post-treatment stratum variable.
//!
//! Numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! bottom of this file fix the scalar for the common cases.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod linalg;
pub mod report;
pub mod resampling;
pub mod scalar;
pub mod simulator;
pub mod special;

pub use data::{
    classify_strata, completer_filter, load_dataset, Arm, CompleterRequirement, CrossoverData, Dataset, ParallelData,
    ParallelObservation, Sequence, StratumLabel, StratumTable, SubjectRecord, ThresholdRule,
};
pub use error::{Error, Result};
pub use estimators::{
    combine_marginal, estimate_mu_direct, estimate_mu_hayden, estimate_pce_table, estimate_stratum_probs,
    fit_principal_score, hayden_weight, Contrast, EstimateSummary, Method, MethodSelection, PceConfig, PceTable,
    PrincipalScoreModel, ProbMethod, StratumProbEstimate,
};
pub use glm::{fit_logistic, fit_ols, DesignMatrix, LogisticFit, OlsFit};
pub use resampling::{bootstrap, BootstrapResult, BootstrapSpec};
pub use scalar::Real;

pub type SubjectRecordF32 = SubjectRecord<f32>;
pub type SubjectRecordF64 = SubjectRecord<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type OlsFitF32 = OlsFit<f32>;
pub type OlsFitF64 = OlsFit<f64>;
pub type LogisticFitF32 = LogisticFit<f32>;
pub type LogisticFitF64 = LogisticFit<f64>;
pub type PceTableF32 = PceTable<f32>;
pub type PceTableF64 = PceTable<f64>;
