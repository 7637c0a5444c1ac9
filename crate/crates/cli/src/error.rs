//! Harness errors and their process exit codes.

use thiserror::Error;

/// The solve ran but did not reach the tolerance within `max_iter`.
pub const EXIT_NOT_CONVERGED: i32 = 1;
/// Invalid configuration file, flag value or parameter combination.
pub const EXIT_CONFIG: i32 = 2;
/// Missing or malformed input such as a matrix file.
pub const EXIT_INPUT: i32 = 3;
/// Breakdown, stagnation or non-finite values inside a solver.
pub const EXIT_NUMERICAL: i32 = 4;
/// The `check` self-test found a violated invariant or a nondeterminism.
pub const EXIT_CHECK_FAILED: i32 = 5;
/// Writing an output file failed.
pub const EXIT_OUTPUT: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("self-check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Input(_) => EXIT_INPUT,
            Self::Output(_) => EXIT_OUTPUT,
            Self::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        Self::Config(e.to_string())
    }
}
