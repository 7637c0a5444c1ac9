use super::{bcg_solve, CgConfig};
use crate::blocklinalg::{generate_rhs, Preconditioner, SparseOperator};
use crate::comms::WorldConfig;
use crate::report::{NormKind, SolverError};
use crate::salgebra::dense::DenseMatrix;
use crate::salgebra::AlgebraSpec;

/// `2·((√κ − 1)/(√κ + 1))^k · ‖e⁰‖_A`, the classical energy-error bound of CG.
///
/// # Panics
/// If `kappa < 1`.
pub fn chebyshev_bound(kappa: f64, k: usize, e0_norm: f64) -> f64 {
    assert!(kappa >= 1.0, "condition number below one");
    let root = kappa.sqrt();
    let factor = (root - 1.0) / (root + 1.0);
    let power = if k == 0 { 1.0 } else { factor.powi(k as i32) };
    2.0 * power * e0_norm
}

/// Measured against predicted convergence of block-global BCG.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCheck {
    /// Average Frobenius residual reduction per iteration.
    pub measured_rate: f64,
    /// 1-based index `⌈p/q⌉` of the eigenvalue that enters the effective
    /// condition number.
    pub eigenvalue_index: usize,
    /// `λ_n / λ_⌈p/q⌉`.
    pub kappa_hat: f64,
    /// `(√κ̂ − 1)/(√κ̂ + 1)`.
    pub predicted_rate: f64,
    pub iterations: usize,
}

/// Largest dimension accepted by [`blockglobal_rate_check`].
pub const RATE_CHECK_MAX_DIM: usize = 2000;

/// Runs unpreconditioned block-global BCG with `s` random right-hand sides
/// and group width `p` on a small SPD matrix and compares its rate with the
/// prediction from the spectrum.
pub fn blockglobal_rate_check(a: &SparseOperator, s: usize, p: usize, seed: u64) -> Result<RateCheck, SolverError> {
    let n = a.n();
    if n > RATE_CHECK_MAX_DIM {
        return Err(SolverError::Input(format!("rate check needs n <= {RATE_CHECK_MAX_DIM}, got {n}")));
    }
    let alg = AlgebraSpec::block_global(s, p)?;
    let index = p.div_ceil(alg.q());
    let eigen = DenseMatrix::from_row_major(n, n, a.to_dense()).symmetric_eigenvalues();
    if eigen[0] <= 0.0 {
        return Err(SolverError::Input("matrix is not positive definite".into()));
    }
    let kappa_hat = eigen[n - 1] / eigen[index - 1];
    let root = kappa_hat.sqrt();
    let cfg = CgConfig { eta: 0.0, tolerance: 1e-10, norm: NormKind::Frobenius, max_iter: 4 * n, ..CgConfig::default() };
    let b = generate_rhs(n, s, seed);
    let out = bcg_solve(a, &Preconditioner::identity(n), &b, None, &alg, &cfg, WorldConfig::default())?;
    Ok(RateCheck {
        measured_rate: out.report.convergence_rate(),
        eigenvalue_index: index,
        kappa_hat,
        predicted_rate: (root - 1.0) / (root + 1.0),
        iterations: out.report.iterations(),
    })
}
