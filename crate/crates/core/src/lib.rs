//! Block Krylov solvers over *-subalgebras of the coefficient space, with a
//! deterministic simulated-distributed communication layer.

pub mod bicgstab;
pub mod blocklinalg;
pub mod cg;
pub mod comms;
pub mod gmres;
pub mod report;
pub mod salgebra;
mod session;

pub use bicgstab::{bbicgstab_solve, BicgstabConfig, BicgstabVariant, ShadowChoice};
pub use blocklinalg::{BlockVector, Generator, KernelCounters, Operator, Preconditioner, PreconditionerKind, SparseOperator};
pub use cg::{bcg_solve, CgConfig, CgVariant};
pub use comms::{CostModel, LatencyModel, OverlapPolicy, WorldConfig};
pub use gmres::{bgmres_solve, GmresConfig, OrthoStrategy};
pub use report::{NormKind, ReportSummary, SolveOutcome, SolverError, SolverReport};
pub use salgebra::{AlgebraKind, AlgebraSpec, SElement};
