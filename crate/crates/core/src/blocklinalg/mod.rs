//! Block vectors, sparse operators, instrumented kernels and preconditioners.

mod diagnostics;
mod generators;
mod io;
mod kernels;
mod precond;
mod sparse;
mod vector;

use thiserror::Error;

use crate::salgebra::AlgebraError;

pub use diagnostics::{block_grade_bruteforce, check_bsa, solution_distance_at_grade, BlockGrade, BsaReport, GRADE_MAX_ENTRIES};
pub use generators::{convection_diffusion, generate_rhs, network_spd, poisson2d, Generator};
pub use io::{format_matrixmarket, load_matrixmarket, parse_matrixmarket, write_matrixmarket};
pub use kernels::{
    apply_right, axpy_scalar, baxpy, bdot, bdot_gram, bop, bop_into, scale_right, xpby, xpby_scalar, KernelCounters, KernelModel,
    ROW_CHUNK,
};
pub use precond::{ilu0_dense_factors, Preconditioner, PreconditionerKind};
pub use sparse::{Operator, SparseOperator};
pub use vector::BlockVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}
