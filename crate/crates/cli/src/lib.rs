//! Experiment runner for the coupled condensate / pair-excitation dynamics:
//! TOML configuration, the `evolve`, `oracle`, `sweep` and `diagnose`
//! commands, and their CSV and JSON outputs.

pub mod config;
pub mod error;
pub mod initial;
pub mod output;
pub mod run;

pub use config::{parse_axis, RunConfig, SweepAxis};
pub use error::CliError;
pub use run::{run_diagnose, run_evolve, run_oracle, run_sweep, DiagnosticsReport, RunSummary, SweepSummary};
