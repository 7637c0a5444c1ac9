//! Block Givens triangulation of the block Hessenberg matrix.
//!
//! A rotation acts on two consecutive block rows. Within each coefficient
//! group it is the full `2p × 2p` orthogonal factor of a Householder QR, so
//! its four `p × p` quadrants are themselves coefficient elements.

use crate::salgebra::dense::DenseMatrix;
use crate::salgebra::{AlgebraError, AlgebraSpec, SElement};

/// Orthogonal transform of two consecutive block rows.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRotation {
    algebra: AlgebraSpec,
    /// One `2p × 2p` orthogonal matrix per distinct group.
    groups: Vec<DenseMatrix>,
}

fn distinct_groups(alg: &AlgebraSpec) -> usize {
    if alg.is_replicated() {
        1
    } else {
        alg.q()
    }
}

impl BlockRotation {
    /// Rotation eliminating `lower` against `upper`; returns it together with
    /// the triangular block `ρ` such that `Qᵀ (upper; lower) = (ρ; 0)`.
    pub fn eliminate(upper: &SElement, lower: &SElement) -> (Self, SElement) {
        let alg = upper.algebra();
        let mut groups = Vec::new();
        let mut tops = Vec::new();
        for g in 0..distinct_groups(&alg) {
            let stacked = upper.group_block(g).vstack(&lower.group_block(g));
            let qr = stacked.householder_qr_full();
            groups.push(qr.q);
            tops.push(qr.r);
        }
        (Self { algebra: alg, groups }, SElement::from_group_blocks(alg, &tops))
    }

    pub fn algebra(&self) -> AlgebraSpec {
        self.algebra
    }

    /// Dense `2p × 2p` factor of group `g`.
    pub fn group(&self, g: usize) -> &DenseMatrix {
        &self.groups[g]
    }

    fn apply(&self, upper: &SElement, lower: &SElement, transpose: bool) -> (SElement, SElement) {
        let p = self.algebra.p();
        let mut tops = Vec::with_capacity(self.groups.len());
        let mut bottoms = Vec::with_capacity(self.groups.len());
        for (g, q) in self.groups.iter().enumerate() {
            let stacked = upper.group_block(g).vstack(&lower.group_block(g));
            let out = if transpose { q.transpose().matmul(&stacked) } else { q.matmul(&stacked) };
            tops.push(out.row_block(0, p));
            bottoms.push(out.row_block(p, 2 * p));
        }
        (SElement::from_group_blocks(self.algebra, &tops), SElement::from_group_blocks(self.algebra, &bottoms))
    }

    /// `Qᵀ (upper; lower)`.
    pub fn apply_transpose(&self, upper: &SElement, lower: &SElement) -> (SElement, SElement) {
        self.apply(upper, lower, true)
    }

    /// `Q (upper; lower)`.
    pub fn apply_forward(&self, upper: &SElement, lower: &SElement) -> (SElement, SElement) {
        self.apply(upper, lower, false)
    }
}

/// Triangulates the newest Hessenberg column.
///
/// `column` holds `η_{0,k} … η_{k,k}, γ` on entry. The stored rotations are
/// applied first, then a new rotation eliminates `γ`; on return `column` has
/// `k + 1` entries of the triangular factor. `rhs` holds `σ⁰ … σᵏ` and gains
/// `σᵏ⁺¹`, whose Frobenius norm is the residual norm.
///
/// # Panics
/// If the lengths of `column`, `rotations` and `rhs` are inconsistent.
pub fn block_givens_update(column: &mut Vec<SElement>, rotations: &mut Vec<BlockRotation>, rhs: &mut Vec<SElement>) {
    let k = rotations.len();
    assert_eq!(column.len(), k + 2, "Hessenberg column must have k + 2 entries");
    assert_eq!(rhs.len(), k + 1, "transformed right-hand side must have k + 1 entries");
    for (j, rot) in rotations.iter().enumerate() {
        let (a, b) = rot.apply_transpose(&column[j], &column[j + 1]);
        column[j] = a;
        column[j + 1] = b;
    }
    let gamma = column.pop().expect("column has a subdiagonal entry");
    let (rot, rho) = BlockRotation::eliminate(&column[k], &gamma);
    column[k] = rho;
    let zero = SElement::zeros(gamma.algebra());
    let (top, bottom) = rot.apply_transpose(&rhs[k], &zero);
    rhs[k] = top;
    rhs.push(bottom);
    rotations.push(rot);
}

/// Solves the block upper-triangular system `Σ_{j ≥ l} R_{l,j} y_j = σ^l`
/// by back-substitution. `columns[j]` holds `R_{0,j} … R_{j,j}`.
///
/// Returns the index of the first singular diagonal block on failure.
pub fn back_substitute(columns: &[Vec<SElement>], rhs: &[SElement]) -> Result<Vec<SElement>, (usize, AlgebraError)> {
    let k = columns.len();
    let mut y: Vec<SElement> = Vec::with_capacity(k);
    for l in (0..k).rev() {
        let mut acc = rhs[l].clone();
        for (offset, yj) in y.iter().rev().enumerate() {
            let j = l + 1 + offset;
            acc = &acc - &columns[j][l].multiply(yj);
        }
        let inv = columns[l][l].inverse().map_err(|e| (l, e))?;
        y.push(inv.multiply(&acc));
    }
    y.reverse();
    Ok(y)
}
