//! Block Conjugate Gradients over a *-subalgebra, with adaptive residual
//! re-orthonormalization and five communication-reduced reformulations.
//!
//! All variants are arithmetically equivalent. They differ in how the block
//! inner products are fused into reductions, which reductions are overlapped
//! with operator or preconditioner applications, and how many auxiliary block
//! vectors are carried.

mod bounds;
mod variants;

use serde::{Deserialize, Serialize};

use crate::blocklinalg::{apply_right, BlockVector, Operator, Preconditioner};
use crate::comms::WorldConfig;
use crate::report::{NormKind, SolveOutcome, SolverError};
use crate::salgebra::{AlgebraSpec, SElement};
use crate::session::Session;

pub use bounds::{blockglobal_rate_check, chebyshev_bound, RateCheck};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgVariant {
    Classic,
    TwoReduction,
    OneReduction,
    Gropp,
    PartiallyPipelined,
    Ghysels,
}

/// Structural properties of a variant per iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantProfile {
    pub block_vectors: usize,
    pub baxpys: usize,
    pub synchronizations: usize,
    pub overlapped: bool,
}

impl CgVariant {
    pub const ALL: [CgVariant; 6] = [Self::Classic, Self::TwoReduction, Self::OneReduction, Self::Gropp, Self::PartiallyPipelined, Self::Ghysels];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Classic => "classic",
            Self::TwoReduction => "2r",
            Self::OneReduction => "1r",
            Self::Gropp => "gropp",
            Self::PartiallyPipelined => "ppbcg",
            Self::Ghysels => "ghysels",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "classic" | "bcg" => Some(Self::Classic),
            "2r" | "two_reduction" | "tworeduction" => Some(Self::TwoReduction),
            "1r" | "one_reduction" | "onereduction" => Some(Self::OneReduction),
            "gropp" => Some(Self::Gropp),
            "ppbcg" | "pp" | "partially_pipelined" => Some(Self::PartiallyPipelined),
            "ghysels" | "pipelined" => Some(Self::Ghysels),
            _ => None,
        }
    }

    /// Expected counts of an iteration without re-orthonormalization.
    pub fn profile(&self) -> VariantProfile {
        let (block_vectors, baxpys, synchronizations, overlapped) = match self {
            Self::Classic => (4, 3, 3, false),
            Self::TwoReduction => (4, 3, 2, false),
            Self::OneReduction => (6, 4, 1, false),
            Self::Gropp => (6, 5, 2, true),
            Self::PartiallyPipelined => (8, 6, 1, true),
            Self::Ghysels => (10, 8, 1, true),
        };
        VariantProfile { block_vectors, baxpys, synchronizations, overlapped }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub variant: CgVariant,
    /// Re-orthonormalization parameter; `0` disables it, `∞` forces it every
    /// iteration.
    pub eta: f64,
    pub tolerance: f64,
    /// Tolerance relative to the initial residual.
    pub relative: bool,
    pub norm: NormKind,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { variant: CgVariant::Classic, eta: 1e4, tolerance: 1e-8, relative: true, norm: NormKind::MaxColumn, max_iter: 1000 }
    }
}

/// State visible to an observer after each iteration's solution update.
pub struct CgSnapshot<'s> {
    pub iteration: usize,
    pub x: &'s BlockVector,
    /// Search direction used in this iteration.
    pub direction: &'s BlockVector,
    pub r_bar: &'s BlockVector,
    pub sigma: &'s SElement,
}

impl CgSnapshot<'_> {
    /// Residual `R̄·σ` of the updated iterate.
    pub fn residual(&self) -> BlockVector {
        apply_right(self.r_bar, self.sigma)
    }
}

/// Solves `A X = B` for SPD `A` and SPD `M`.
///
/// Running out of iterations is not an error: the outcome's report has
/// `converged == false`.
pub fn bcg_solve(
    a: &dyn Operator,
    m: &Preconditioner,
    b: &BlockVector,
    x0: Option<&BlockVector>,
    alg: &AlgebraSpec,
    cfg: &CgConfig,
    world: WorldConfig,
) -> Result<SolveOutcome, SolverError> {
    bcg_solve_observed(a, m, b, x0, alg, cfg, world, &mut |_| {})
}

/// [`bcg_solve`] with a per-iteration observer.
#[allow(clippy::too_many_arguments)]
pub fn bcg_solve_observed(
    a: &dyn Operator,
    m: &Preconditioner,
    b: &BlockVector,
    x0: Option<&BlockVector>,
    alg: &AlgebraSpec,
    cfg: &CgConfig,
    world: WorldConfig,
    observer: &mut dyn FnMut(&CgSnapshot<'_>),
) -> Result<SolveOutcome, SolverError> {
    if cfg.eta.is_nan() || cfg.eta < 0.0 {
        return Err(SolverError::Input(format!("eta must be nonnegative, got {}", cfg.eta)));
    }
    let name = format!("cg:{}", cfg.variant.label());
    let mut session = Session::new(&name, a, m, b, x0, alg, world)?;
    let (x, converged) = match cfg.variant {
        CgVariant::Classic | CgVariant::TwoReduction => variants::classic(&mut session, b, x0, cfg, observer)?,
        CgVariant::Gropp => variants::gropp(&mut session, b, x0, cfg, observer)?,
        CgVariant::OneReduction | CgVariant::PartiallyPipelined | CgVariant::Ghysels => {
            variants::single_reduction(&mut session, b, x0, cfg, observer)?
        }
    };
    Ok(SolveOutcome { x, report: session.finish(converged) })
}

#[cfg(test)]
mod tests;
