//! Diagonally scaled condition number.

use super::{AlgebraError, SElement};

/// `κ(δ^{-1/2} c δ^{-1/2})` with `δ = diag(c)`, from the extreme eigenvalues
/// of the scaled (symmetrized) matrix. Returns `+∞` when the scaled matrix
/// is not positive definite.
pub fn kappa_diag_scaled(c: &SElement) -> Result<f64, AlgebraError> {
    let a = c.algebra();
    let p = a.p();
    let groups = if a.is_replicated() { 1 } else { a.q() };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in 0..groups {
        let block = c.group_block(g);
        let mut scale = Vec::with_capacity(p);
        for i in 0..p {
            let d = block[(i, i)];
            if d.is_nan() || d <= 0.0 {
                return Err(AlgebraError::NonPositiveDiagonal { index: g * p + i, value: d });
            }
            scale.push(1.0 / d.sqrt());
        }
        let scaled = super::dense::DenseMatrix::from_fn(p, p, |i, j| block[(i, j)] * scale[i] * scale[j]);
        let ev = scaled.symmetric_eigenvalues();
        lo = lo.min(ev[0]);
        hi = hi.max(ev[p - 1]);
    }
    if lo.is_nan() || lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}
