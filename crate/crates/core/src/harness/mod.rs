//! Experiment orchestration: convergence studies, the property suite,
//! dense test oracles and file I/O.

pub mod config;
pub mod convergence;
pub mod io;
pub mod oracle;
pub mod properties;

pub use config::{default_moment_order, ExperimentConfig, ExperimentKind};
pub use convergence::{
    green_table, green_table_csv, run_convergence, run_deterministic_convergence,
    run_stochastic_convergence, ConvergenceReport, ConvergenceRun, GreenRow, LevelRow, RunManifest,
    Verdict,
};
pub use properties::{run_property_suite, PropertyConfig, PropertyReport, PropertyVerdict};
