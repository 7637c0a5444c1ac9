//! Command-line harness for the block Krylov solvers: configuration,
//! solver dispatch, sweeps, benchmarks and the reproducibility self-check.

pub mod bench;
pub mod check;
pub mod config;
pub mod error;
pub mod solve;
pub mod sweep;

pub use config::{ResolvedRun, RunConfig, RunFlags, SolverChoice};
pub use error::CliError;
pub use solve::{execute, RunResult, RunStatus};
