//! Normalizers: `X = Q·σ` with `⟨Q, Q⟩_S = I`, via Householder QR per group.

use std::ops::Range;

use super::dense::{DenseMatrix, QrFactors};
use super::{AlgebraError, AlgebraSpec, SElement};
use crate::blocklinalg::BlockVector;

/// Householder factors of the rows `rows` of `x`, one per distinct group.
/// Replicated algebras factor the groups stacked on top of each other.
pub(crate) fn local_group_qr(x: &BlockVector, rows: Range<usize>, a: &AlgebraSpec) -> Result<Vec<QrFactors>, AlgebraError> {
    let (p, q) = (a.p(), a.q());
    let m = rows.len();
    let stacked = if a.is_replicated() { m * q } else { m };
    if stacked < p {
        return Err(AlgebraError::Dimension(format!(
            "normalizing {stacked} local rows needs at least p = {p}"
        )));
    }
    for r in rows.clone() {
        if x.row(r).iter().any(|v| !v.is_finite()) {
            return Err(AlgebraError::NonFinite);
        }
    }
    let gather = |g: usize| DenseMatrix::from_fn(m, p, |i, j| x.get(rows.start + i, g * p + j));
    if a.is_replicated() {
        let mut stack = gather(0);
        for g in 1..q {
            stack = stack.vstack(&gather(g));
        }
        Ok(vec![stack.householder_qr()])
    } else {
        Ok((0..q).map(|g| gather(g).householder_qr()).collect())
    }
}

/// Writes `Q` factors from [`local_group_qr`] back into rows `rows` of `x`,
/// multiplied by `scale`.
pub(crate) fn write_group_q(x: &mut BlockVector, rows: Range<usize>, a: &AlgebraSpec, qs: &[DenseMatrix], scale: f64) {
    let (p, q) = (a.p(), a.q());
    let m = rows.len();
    for g in 0..q {
        let (f, offset) = if a.is_replicated() { (&qs[0], g * m) } else { (&qs[g], 0) };
        for i in 0..m {
            let row = x.row_mut(rows.start + i);
            for j in 0..p {
                row[g * p + j] = scale * f[(offset + i, j)];
            }
        }
    }
}

/// Normalizes the rows `rows` of `x` in place, treating them as a complete
/// block vector, and returns the normalizer.
pub fn normalize_rows(x: &mut BlockVector, rows: Range<usize>, a: &AlgebraSpec) -> Result<SElement, AlgebraError> {
    if x.s() != a.s() {
        return Err(AlgebraError::Dimension(format!("block vector has {} columns, algebra {a}", x.s())));
    }
    let factors = local_group_qr(x, rows.clone(), a)?;
    let (q_scale, r_scale) = if a.is_replicated() {
        let sq = (a.q() as f64).sqrt();
        (sq, 1.0 / sq)
    } else {
        (1.0, 1.0)
    };
    let qs: Vec<DenseMatrix> = factors.iter().map(|f| f.q.clone()).collect();
    write_group_q(x, rows, a, &qs, q_scale);
    let rs: Vec<DenseMatrix> = factors
        .iter()
        .map(|f| {
            let r = &f.r;
            DenseMatrix::from_fn(r.rows(), r.cols(), |i, j| r[(i, j)] * r_scale)
        })
        .collect();
    Ok(SElement::from_group_blocks(*a, &rs))
}

/// In-place normalization of the whole block vector.
pub fn normalize_in_place(x: &mut BlockVector, a: &AlgebraSpec) -> Result<SElement, AlgebraError> {
    let n = x.n();
    normalize_rows(x, 0..n, a)
}

/// Returns `(Q, σ)` with `X = Q·σ`, `⟨Q, Q⟩_S = I` and `σ` upper triangular
/// with nonnegative diagonal. Rank-deficient input yields a singular `σ` and
/// a `Q` completed by orthonormal directions.
pub fn normalize(x: &BlockVector, a: &AlgebraSpec) -> Result<(BlockVector, SElement), AlgebraError> {
    let mut q = x.clone();
    let sigma = normalize_in_place(&mut q, a)?;
    Ok((q, sigma))
}

/// Normalizes a coefficient vector `(c_0, …, c_{m-1})` with respect to
/// `⟨c, d⟩ = Σ c_iᵀ d_i`: returns `(c̃, ρ)` with `c_i = c̃_i ρ` and
/// `Σ c̃_iᵀ c̃_i = I`.
pub fn coefficient_qr(coeffs: &[SElement]) -> (Vec<SElement>, SElement) {
    assert!(!coeffs.is_empty(), "empty coefficient vector");
    let a = coeffs[0].algebra();
    let groups = if a.is_replicated() { 1 } else { a.q() };
    let p = a.p();
    let len = coeffs.len();
    let mut q_blocks: Vec<Vec<DenseMatrix>> = vec![Vec::with_capacity(groups); len];
    let mut r_blocks = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut stack = coeffs[0].group_block(g);
        for c in &coeffs[1..] {
            stack = stack.vstack(&c.group_block(g));
        }
        let f = stack.householder_qr();
        for (i, qb) in q_blocks.iter_mut().enumerate() {
            qb.push(f.q.row_block(i * p, (i + 1) * p));
        }
        r_blocks.push(f.r);
    }
    let q = q_blocks.iter().map(|b| SElement::from_group_blocks(a, b)).collect();
    (q, SElement::from_group_blocks(a, &r_blocks))
}
