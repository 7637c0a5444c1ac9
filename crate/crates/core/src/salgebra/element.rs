//! Coefficient elements: dense `s × s` storage restricted to a pattern.

use std::ops::{Add, Mul, Neg, Sub};

use super::dense::DenseMatrix;
use super::{AlgebraError, AlgebraSpec};

/// An element of a *-subalgebra. Entries outside the pattern are exactly
/// zero and, for replicated algebras, all diagonal blocks are identical.
#[derive(Clone, Debug, PartialEq)]
pub struct SElement {
    algebra: AlgebraSpec,
    data: Vec<f64>,
}

impl SElement {
    pub fn zeros(algebra: AlgebraSpec) -> Self {
        let s = algebra.s();
        Self { algebra, data: vec![0.0; s * s] }
    }

    pub fn identity(algebra: AlgebraSpec) -> Self {
        Self::scalar(algebra, 1.0)
    }

    /// `value · I`.
    pub fn scalar(algebra: AlgebraSpec, value: f64) -> Self {
        let mut e = Self::zeros(algebra);
        let s = algebra.s();
        for i in 0..s {
            e.data[i * s + i] = value;
        }
        e
    }

    /// Builds from a dense row-major `s × s` array, checking the pattern.
    pub fn from_dense(algebra: AlgebraSpec, data: Vec<f64>) -> Result<Self, AlgebraError> {
        let s = algebra.s();
        if data.len() != s * s {
            return Err(AlgebraError::Dimension(format!("expected {} entries, got {}", s * s, data.len())));
        }
        for i in 0..s {
            for j in 0..s {
                if !algebra.in_pattern(i, j) && data[i * s + j] != 0.0 {
                    return Err(AlgebraError::OutsidePattern { row: i, col: j, algebra: algebra.label() });
                }
            }
        }
        let e = Self { algebra, data };
        if algebra.is_replicated() {
            let first = e.group_block(0);
            if (1..algebra.q()).any(|g| e.group_block(g) != first) {
                return Err(AlgebraError::NotReplicated);
            }
        }
        Ok(e)
    }

    /// Builds from one `p × p` block per group; replicated algebras take a
    /// single block.
    ///
    /// # Panics
    /// If the number or shape of blocks does not fit the algebra.
    pub fn from_group_blocks(algebra: AlgebraSpec, blocks: &[DenseMatrix]) -> Self {
        let (p, q) = (algebra.p(), algebra.q());
        let expected = if algebra.is_replicated() { 1 } else { q };
        assert_eq!(blocks.len(), expected, "wrong number of group blocks");
        let mut e = Self::zeros(algebra);
        for g in 0..q {
            let b = &blocks[if algebra.is_replicated() { 0 } else { g }];
            assert!(b.rows() == p && b.cols() == p, "group block must be p x p");
            e.set_group_block(g, b);
        }
        e
    }

    pub fn algebra(&self) -> AlgebraSpec {
        self.algebra
    }

    pub fn s(&self) -> usize {
        self.algebra.s()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.s() + j]
    }

    /// Row-major `s × s` entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_row_major(self.s(), self.s(), self.data.clone())
    }

    /// The `p × p` diagonal block of group `g`.
    pub fn group_block(&self, g: usize) -> DenseMatrix {
        let (s, p) = (self.s(), self.algebra.p());
        let o = g * p;
        DenseMatrix::from_fn(p, p, |i, j| self.data[(o + i) * s + o + j])
    }

    fn set_group_block(&mut self, g: usize, b: &DenseMatrix) {
        let (s, p) = (self.s(), self.algebra.p());
        let o = g * p;
        for i in 0..p {
            for j in 0..p {
                self.data[(o + i) * s + o + j] = b[(i, j)];
            }
        }
    }

    /// Number of distinct blocks that carry data.
    fn distinct_groups(&self) -> usize {
        if self.algebra.is_replicated() {
            1
        } else {
            self.algebra.q()
        }
    }

    /// Applies `f` to every distinct group block and reassembles.
    pub fn map_groups(&self, mut f: impl FnMut(&DenseMatrix) -> DenseMatrix) -> Self {
        let blocks: Vec<DenseMatrix> = (0..self.distinct_groups()).map(|g| f(&self.group_block(g))).collect();
        Self::from_group_blocks(self.algebra, &blocks)
    }

    fn assert_same(&self, other: &Self) {
        assert_eq!(self.algebra, other.algebra, "coefficient operands live in different algebras");
    }

    /// Product within the algebra.
    ///
    /// # Panics
    /// If the operands belong to different algebras.
    pub fn multiply(&self, other: &Self) -> Self {
        self.assert_same(other);
        let (s, p) = (self.s(), self.algebra.p());
        let mut out = Self::zeros(self.algebra);
        let groups = self.distinct_groups();
        for g in 0..groups {
            let o = g * p;
            for i in 0..p {
                for k in 0..p {
                    let a = self.data[(o + i) * s + o + k];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..p {
                        out.data[(o + i) * s + o + j] += a * other.data[(o + k) * s + o + j];
                    }
                }
            }
        }
        if groups == 1 && self.algebra.is_replicated() {
            let b = out.group_block(0);
            for g in 1..self.algebra.q() {
                out.set_group_block(g, &b);
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { algebra: self.algebra, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn transpose(&self) -> Self {
        let s = self.s();
        let mut data = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                data[j * s + i] = self.data[i * s + j];
            }
        }
        Self { algebra: self.algebra, data }
    }

    /// Inverse within the algebra. A pivot below `1e3·ε·‖c‖_F` is reported
    /// as singular together with its magnitude.
    pub fn inverse(&self) -> Result<Self, AlgebraError> {
        let threshold = 1e3 * f64::EPSILON * self.frobenius_norm();
        let p = self.algebra.p();
        let mut blocks = Vec::with_capacity(self.distinct_groups());
        for g in 0..self.distinct_groups() {
            let inv = self.group_block(g).inverse(threshold).map_err(|e| AlgebraError::Singular {
                index: g * p + e.index,
                magnitude: e.magnitude,
            })?;
            blocks.push(inv);
        }
        Ok(Self::from_group_blocks(self.algebra, &blocks))
    }

    /// Inverse after two-sided diagonal equilibration, so the singularity
    /// test is invariant under row and column scaling. Each group block is
    /// written `D_r C' D_c` with unit row norms in `D_r⁻¹ C` and unit column
    /// norms in `C'`; a pivot of `C'` below `1e3·ε·‖C'‖_F` is singular.
    pub fn inverse_equilibrated(&self) -> Result<Self, AlgebraError> {
        let p = self.algebra.p();
        let mut blocks = Vec::with_capacity(self.distinct_groups());
        for g in 0..self.distinct_groups() {
            let block = self.group_block(g);
            let rows: Vec<f64> = (0..p).map(|i| (0..p).map(|j| block[(i, j)].powi(2)).sum::<f64>().sqrt()).collect();
            let scaled_rows = DenseMatrix::from_fn(p, p, |i, j| if rows[i] > 0.0 { block[(i, j)] / rows[i] } else { 0.0 });
            let cols: Vec<f64> = (0..p).map(|j| (0..p).map(|i| scaled_rows[(i, j)].powi(2)).sum::<f64>().sqrt()).collect();
            let unit = DenseMatrix::from_fn(p, p, |i, j| if cols[j] > 0.0 { scaled_rows[(i, j)] / cols[j] } else { 0.0 });
            let inv = unit.inverse(1e3 * f64::EPSILON * unit.frobenius_norm()).map_err(|e| AlgebraError::Singular {
                index: g * p + e.index,
                magnitude: e.magnitude,
            })?;
            blocks.push(DenseMatrix::from_fn(p, p, |i, j| inv[(i, j)] / (cols[i] * rows[j])));
        }
        Ok(Self::from_group_blocks(self.algebra, &blocks))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let (s, p) = (self.s(), self.algebra.p());
        (0..s)
            .map(|j| {
                let g = j / p;
                (g * p..(g + 1) * p).map(|i| self.data[i * s + j].powi(2)).sum::<f64>().sqrt()
            })
            .collect()
    }

    pub fn max_column_norm(&self) -> f64 {
        self.column_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        let s = self.s();
        (0..s).map(|i| self.data[i * s + i]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let s = self.s();
        (0..s).map(|i| self.data[i * s + i]).collect()
    }

    /// `‖c − I‖_F`.
    pub fn distance_to_identity(&self) -> f64 {
        let s = self.s();
        let mut acc = 0.0;
        for i in 0..s {
            for j in 0..s {
                let d = self.data[i * s + j] - if i == j { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks the pattern and replication invariants exactly.
    pub fn satisfies_pattern(&self) -> bool {
        SElement::from_dense(self.algebra, self.data.clone()).is_ok()
    }

    /// Same matrix, viewed in a larger algebra.
    pub fn embed(&self, big: &AlgebraSpec) -> Result<Self, AlgebraError> {
        if !self.algebra.is_contained_in(big) {
            return Err(AlgebraError::NotContained { small: self.algebra.to_string(), big: big.to_string() });
        }
        Ok(Self { algebra: *big, data: self.data.clone() })
    }

    /// Orthogonal projection onto `target ⊆ self.algebra()`: entries outside
    /// the target pattern are dropped and replicated blocks are averaged.
    pub fn project(&self, target: &AlgebraSpec) -> Self {
        assert!(target.is_contained_in(&self.algebra) && target.s() == self.s(), "projection target not a subalgebra");
        let (s, p) = (self.s(), target.p());
        let q = target.q();
        let mut out = Self::zeros(*target);
        if target.is_replicated() {
            let mut acc = DenseMatrix::zeros(p, p);
            for g in 0..q {
                for i in 0..p {
                    for j in 0..p {
                        acc[(i, j)] += self.data[(g * p + i) * s + g * p + j];
                    }
                }
            }
            let inv_q = 1.0 / q as f64;
            let avg = DenseMatrix::from_fn(p, p, |i, j| acc[(i, j)] * inv_q);
            for g in 0..q {
                out.set_group_block(g, &avg);
            }
        } else {
            for i in 0..s {
                for j in 0..s {
                    if target.in_pattern(i, j) {
                        out.data[i * s + j] = self.data[i * s + j];
                    }
                }
            }
        }
        out
    }
}

impl Add for &SElement {
    type Output = SElement;
    fn add(self, rhs: &SElement) -> SElement {
        self.assert_same(rhs);
        SElement { algebra: self.algebra, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &SElement {
    type Output = SElement;
    fn sub(self, rhs: &SElement) -> SElement {
        self.assert_same(rhs);
        SElement { algebra: self.algebra, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &SElement {
    type Output = SElement;
    fn mul(self, rhs: &SElement) -> SElement {
        self.multiply(rhs)
    }
}

impl Neg for &SElement {
    type Output = SElement;
    fn neg(self) -> SElement {
        self.scale(-1.0)
    }
}
