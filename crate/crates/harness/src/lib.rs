//! Experiment harness for the torus SPDE schemes: configuration parsing,
//! Monte Carlo convergence studies with coupled noise across mesh levels,
//! and CSV/JSON report emission.

pub mod config;
pub mod report;
pub mod study;

pub use config::{ConfigError, ExperimentConfig, OutputFormat, SolverChoice};
pub use report::{
    emit_report, ConvergenceReport, ReportEnvelope, ReportError, RunMetadata, StudyReport,
    TaylorReport, ValidationReport,
};
pub use study::{
    run_acceleration_study, run_expansion_study, run_taylor_study, run_validation, HarnessError,
};
