//! Block inner products with a fixed, thread-count independent summation
//! order.
//!
//! Rows are cut into [`LEAF_SEGMENTS`] segments at `⌊i·n/L⌋`. Each segment
//! accumulates its rows sequentially and segments are combined by a balanced
//! pairwise tree. A rank that owns a contiguous, aligned range of segments
//! computes exactly one subtree, so summing rank partials pairwise reproduces
//! the single-process bits.

use std::ops::Range;

use super::{AlgebraError, AlgebraSpec, SElement};
use crate::blocklinalg::BlockVector;

/// Number of leaf segments of the reduction tree.
pub const LEAF_SEGMENTS: usize = 256;

/// Rows per leaf below which subtrees are evaluated without spawning tasks.
const PARALLEL_GRAIN_ROWS: usize = 2048;

/// Shape of a group Gram: `groups` diagonal blocks of size `width × width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GramLayout {
    s: usize,
    width: usize,
}

impl GramLayout {
    pub fn new(s: usize, width: usize) -> Self {
        assert!(width > 0 && s % width == 0, "Gram width must divide s");
        Self { s, width }
    }

    /// Groups of `a`, without averaging replicated blocks.
    pub fn for_algebra(a: &AlgebraSpec) -> Self {
        Self::new(a.s(), a.p())
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn groups(&self) -> usize {
        self.s / self.width
    }

    /// Number of stored values.
    pub fn len(&self) -> usize {
        self.groups() * self.width * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unaveraged diagonal group blocks `X_gᵀY_g`, the payload of every
/// inner-product reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGram {
    layout: GramLayout,
    data: Vec<f64>,
}

impl GroupGram {
    pub fn zeros(layout: GramLayout) -> Self {
        Self { layout, data: vec![0.0; layout.len()] }
    }

    pub fn layout(&self) -> GramLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Elementwise sum.
    ///
    /// # Panics
    /// On layout mismatch.
    pub fn accumulate(&mut self, other: &GroupGram) {
        assert_eq!(self.layout, other.layout, "Gram layouts differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Entry `(i, j)` of group `g`.
    pub fn entry(&self, g: usize, i: usize, j: usize) -> f64 {
        let w = self.layout.width;
        self.data[g * w * w + i * w + j]
    }

    /// Sum of all diagonal entries, i.e. the Frobenius inner product.
    pub fn trace(&self) -> f64 {
        let w = self.layout.width;
        (0..self.layout.groups()).map(|g| (0..w).map(|i| self.entry(g, i, i)).sum::<f64>()).sum()
    }

    /// Converts to the algebra element: blocks are placed on the diagonal,
    /// replicated algebras take the group average.
    pub fn to_element(&self, a: &AlgebraSpec) -> SElement {
        assert!(a.s() == self.layout.s && a.p() == self.layout.width, "Gram layout does not match {a}");
        let (s, w) = (a.s(), a.p());
        let q = a.q();
        let mut dense = vec![0.0; s * s];
        if a.is_replicated() {
            let mut block = vec![0.0; w * w];
            for g in 0..q {
                for (b, v) in block.iter_mut().zip(&self.data[g * w * w..(g + 1) * w * w]) {
                    *b += v;
                }
            }
            for b in &mut block {
                *b /= q as f64;
            }
            for g in 0..q {
                for i in 0..w {
                    for j in 0..w {
                        dense[(g * w + i) * s + g * w + j] = block[i * w + j];
                    }
                }
            }
        } else {
            for g in 0..q {
                for i in 0..w {
                    for j in 0..w {
                        dense[(g * w + i) * s + g * w + j] = self.entry(g, i, j);
                    }
                }
            }
        }
        SElement::from_dense(*a, dense).expect("Gram blocks respect the pattern by construction")
    }

    /// Squared column norms of `X·c` when this is the Gram of `X` with itself
    /// and `c` lies in the block-parallel algebra of this layout:
    /// `diag(c_gᵀ G_g c_g)`.
    pub fn column_sq_norms_after(&self, c: &SElement) -> Vec<f64> {
        let w = self.layout.width;
        assert!(c.s() == self.layout.s && w % c.algebra().p() == 0, "coefficient not compatible with Gram layout");
        let s = self.layout.s;
        let mut out = vec![0.0; s];
        for (j, slot) in out.iter_mut().enumerate() {
            let g = j / w;
            let o = g * w;
            let mut acc = 0.0;
            for a in 0..w {
                let ca = c.get(o + a, j);
                if ca == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for b in 0..w {
                    row += self.entry(g, a, b) * c.get(o + b, j);
                }
                acc += ca * row;
            }
            *slot = acc.max(0.0);
        }
        out
    }

    /// Gram of the rows `lo..hi` of the leaf range, evaluated as a subtree of
    /// the global pairwise reduction.
    pub fn over_leaves(x: &BlockVector, y: &BlockVector, layout: GramLayout, leaves: Range<usize>) -> Self {
        check_pair(x, y, layout);
        let n = x.n();
        let bound = move |i: usize| ((i as u128 * n as u128) / LEAF_SEGMENTS as u128) as usize;
        let data = tree(x, y, layout, leaves.start, leaves.end, &bound).unwrap_or_else(|| vec![0.0; layout.len()]);
        Self { layout, data }
    }

    /// Gram of a row range with its own `segments`-leaf tree. Used when a
    /// rank partition is not aligned with the global leaves.
    pub fn over_rows(x: &BlockVector, y: &BlockVector, layout: GramLayout, rows: Range<usize>, segments: usize) -> Self {
        check_pair(x, y, layout);
        let segments = segments.max(1);
        let (lo, len) = (rows.start, rows.len());
        let bound = move |i: usize| lo + ((i as u128 * len as u128) / segments as u128) as usize;
        let data = tree(x, y, layout, 0, segments, &bound).unwrap_or_else(|| vec![0.0; layout.len()]);
        Self { layout, data }
    }

    /// Gram over all rows.
    pub fn full(x: &BlockVector, y: &BlockVector, layout: GramLayout) -> Self {
        Self::over_leaves(x, y, layout, 0..LEAF_SEGMENTS)
    }
}

fn check_pair(x: &BlockVector, y: &BlockVector, layout: GramLayout) {
    assert!(
        x.n() == y.n() && x.s() == y.s() && x.s() == layout.s,
        "inner product operands must share n and s"
    );
}

fn tree(
    x: &BlockVector,
    y: &BlockVector,
    layout: GramLayout,
    lo: usize,
    hi: usize,
    bound: &(impl Fn(usize) -> usize + Sync),
) -> Option<Vec<f64>> {
    let (r0, r1) = (bound(lo), bound(hi));
    if r0 == r1 {
        return None;
    }
    if hi - lo == 1 {
        return Some(leaf(x, y, layout, r0..r1));
    }
    let mid = (lo + hi) / 2;
    let (a, b) = if r1 - r0 > PARALLEL_GRAIN_ROWS {
        rayon::join(|| tree(x, y, layout, lo, mid, bound), || tree(x, y, layout, mid, hi, bound))
    } else {
        (tree(x, y, layout, lo, mid, bound), tree(x, y, layout, mid, hi, bound))
    };
    match (a, b) {
        (Some(mut a), Some(b)) => {
            for (u, v) in a.iter_mut().zip(&b) {
                *u += v;
            }
            Some(a)
        }
        (a, None) => a,
        (None, b) => b,
    }
}

fn leaf(x: &BlockVector, y: &BlockVector, layout: GramLayout, rows: Range<usize>) -> Vec<f64> {
    let w = layout.width;
    let mut acc = vec![0.0; layout.len()];
    for r in rows {
        let xr = x.row(r);
        let yr = y.row(r);
        for g in 0..layout.groups() {
            let o = g * w;
            let block = &mut acc[g * w * w..(g + 1) * w * w];
            for i in 0..w {
                let xi = xr[o + i];
                if xi == 0.0 {
                    continue;
                }
                let dst = &mut block[i * w..(i + 1) * w];
                for (d, yj) in dst.iter_mut().zip(&yr[o..o + w]) {
                    *d += xi * yj;
                }
            }
        }
    }
    acc
}

/// `⟨X, Y⟩_S` for the algebra `a`.
pub fn block_inner_product(x: &BlockVector, y: &BlockVector, a: &AlgebraSpec) -> Result<SElement, AlgebraError> {
    if x.n() != y.n() || x.s() != y.s() || x.s() != a.s() {
        return Err(AlgebraError::Dimension(format!(
            "inner product of {}x{} and {}x{} in {a}",
            x.n(),
            x.s(),
            y.n(),
            y.s()
        )));
    }
    Ok(GroupGram::full(x, y, GramLayout::for_algebra(a)).to_element(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> (BlockVector, BlockVector) {
        (
            BlockVector::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            BlockVector::from_row_major(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap(),
        )
    }

    #[test]
    fn parallel_product_is_diagonal_of_transpose_product() {
        let (x, y) = xy();
        let c = block_inner_product(&x, &y, &AlgebraSpec::parallel(2).unwrap()).unwrap();
        assert_eq!(c.as_slice(), &[26.0, 0.0, 0.0, 44.0]);
    }

    #[test]
    fn global_product_is_scaled_trace() {
        let (x, y) = xy();
        let c = block_inner_product(&x, &y, &AlgebraSpec::global(2).unwrap()).unwrap();
        assert_eq!(c.as_slice(), &[35.0, 0.0, 0.0, 35.0]);
    }

    #[test]
    fn block_product_is_full_transpose_product() {
        let (x, y) = xy();
        let c = block_inner_product(&x, &y, &AlgebraSpec::block(2).unwrap()).unwrap();
        assert_eq!(c.as_slice(), &[26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn aligned_rank_partials_sum_to_the_same_bits() {
        let n = 1000;
        let x = BlockVector::from_fn(n, 4, |i, j| ((i * 7 + j * 13) % 17) as f64 / 3.0 - 2.0);
        let y = BlockVector::from_fn(n, 4, |i, j| ((i * 5 + j * 11) % 19) as f64 / 7.0 + 0.1);
        let layout = GramLayout::new(4, 2);
        let full = GroupGram::full(&x, &y, layout);
        let step = LEAF_SEGMENTS / 4;
        let parts: Vec<_> = (0..4).map(|r| GroupGram::over_leaves(&x, &y, layout, r * step..(r + 1) * step)).collect();
        let mut left = parts[0].clone();
        left.accumulate(&parts[1]);
        let mut right = parts[2].clone();
        right.accumulate(&parts[3]);
        left.accumulate(&right);
        assert_eq!(left, full);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (x, _) = xy();
        let z = BlockVector::zeros(3, 2);
        assert!(block_inner_product(&x, &z, &AlgebraSpec::block(2).unwrap()).is_err());
    }
}
