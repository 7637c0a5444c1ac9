use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::LinalgError;

/// Dense `n × s` multivector stored row-major: the `s` entries of one row
/// are contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockVector {
    n: usize,
    s: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(n: usize, s: usize) -> Self {
        Self { n, s, data: vec![0.0; n * s] }
    }

    pub fn from_row_major(n: usize, s: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != n * s {
            return Err(LinalgError::Dimension(format!("{} values for a {n}x{s} block vector", data.len())));
        }
        Ok(Self { n, s, data })
    }

    pub fn from_fn(n: usize, s: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * s);
        for i in 0..n {
            for j in 0..s {
                data.push(f(i, j));
            }
        }
        Self { n, s, data }
    }

    /// Stacks column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let s = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(LinalgError::Dimension("columns differ in length".into()));
        }
        Ok(Self::from_fn(n, s, |i, j| columns[j][i]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.s..(r + 1) * self.s]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.s..(r + 1) * self.s]
    }

    /// Contiguous storage of the rows in `rows`.
    pub fn rows(&self, rows: Range<usize>) -> &[f64] {
        &self.data[rows.start * self.s..rows.end * self.s]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.s + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.s + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// Copy of the rows in `rows` as a standalone block vector.
    pub fn slice_rows(&self, rows: Range<usize>) -> Self {
        Self { n: rows.len(), s: self.s, data: self.rows(rows).to_vec() }
    }

    /// Overwrites rows starting at `offset` with `part`.
    pub fn write_rows(&mut self, offset: usize, part: &BlockVector) {
        assert_eq!(part.s, self.s, "column count mismatch");
        self.data[offset * self.s..(offset + part.n) * self.s].copy_from_slice(&part.data);
    }

    pub fn copy_from(&mut self, other: &BlockVector) {
        assert!(self.n == other.n && self.s == other.s, "shape mismatch");
        self.data.copy_from_slice(&other.data);
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.s];
        for r in 0..self.n {
            for (a, v) in acc.iter_mut().zip(self.row(r)) {
                *a += v * v;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// `‖self − other‖_F`.
    pub fn sub_norm(&self, other: &BlockVector) -> f64 {
        assert!(self.n == other.n && self.s == other.s, "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `Σ x_ij y_ij`.
    pub fn frobenius_dot(&self, other: &BlockVector) -> f64 {
        assert!(self.n == other.n && self.s == other.s, "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self − other`, uninstrumented.
    pub fn difference(&self, other: &BlockVector) -> BlockVector {
        assert!(self.n == other.n && self.s == other.s, "shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { n: self.n, s: self.s, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let x = BlockVector::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(x.column(2), vec![3.0, 6.0]);
        assert!(BlockVector::from_row_major(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn norms() {
        let x = BlockVector::from_row_major(2, 2, vec![3.0, 0.0, 4.0, 1.0]).unwrap();
        assert_eq!(x.column_norms(), vec![5.0, 1.0]);
        assert!((x.frobenius_norm() - 26f64.sqrt()).abs() < 1e-15);
    }
}
