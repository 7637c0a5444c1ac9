use std::ops::Range;

use rayon::prelude::*;

use super::{BlockVector, LinalgError, ROW_CHUNK};

/// Forward application of a linear operator to block vectors. No transposed
/// product is part of the interface.
pub trait Operator: Sync {
    fn dim(&self) -> usize;

    /// Stored nonzeros, the `z` of the kernel cost model.
    fn nnz(&self) -> usize;

    /// Nonzeros in the given rows, for per-rank cost attribution.
    fn nnz_in_rows(&self, rows: Range<usize>) -> usize;

    /// `y ← A·x`.
    fn apply_into(&self, x: &BlockVector, y: &mut BlockVector);
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Validates raw CSR arrays. Columns inside a row are sorted on input.
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return Err(LinalgError::InvalidCsr(format!("row offsets must have length {} and start at 0", n + 1)));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(LinalgError::InvalidCsr("row offsets decrease".into()));
        }
        let z = row_ptr[n];
        if col_idx.len() != z || values.len() != z {
            return Err(LinalgError::InvalidCsr(format!("final offset {z} does not match the index/value arrays")));
        }
        if let Some(&c) = col_idx.iter().find(|&&c| c >= n) {
            return Err(LinalgError::InvalidCsr(format!("column index {c} out of range for n = {n}")));
        }
        let mut triplets = Vec::with_capacity(z);
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                triplets.push((i, col_idx[k], values[k]));
            }
        }
        Self::from_triplets(n, triplets)
    }

    /// Builds from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self, LinalgError> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n || j >= n) {
            return Err(LinalgError::InvalidCsr(format!("entry ({i}, {j}) out of range for n = {n}")));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry exists") += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Keeps the nonzero entries of a row-major dense matrix.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self, LinalgError> {
        if dense.len() != n * n {
            return Err(LinalgError::Dimension(format!("{} values for a {n}x{n} matrix", dense.len())));
        }
        let triplets = (0..n * n).filter(|&k| dense[k] != 0.0).map(|k| (k / n, k % n, dense[k])).collect();
        Self::from_triplets(n, triplets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// Largest `|a_ij − a_ji|` relative to the largest `|a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                scale = scale.max(v.abs());
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    fn apply_rows(&self, x: &BlockVector, out: &mut [f64], first_row: usize) {
        let s = x.s();
        for (local, y) in out.chunks_mut(s).enumerate() {
            y.fill(0.0);
            let (cols, vals) = self.row(first_row + local);
            for (&j, &v) in cols.iter().zip(vals) {
                for (yk, xk) in y.iter_mut().zip(x.row(j)) {
                    *yk += v * xk;
                }
            }
        }
    }

    /// `y ← A·x` with rows processed in chunks of `chunk` rows.
    pub fn apply_chunked(&self, x: &BlockVector, y: &mut BlockVector, chunk: usize) {
        assert!(x.n() == self.n && y.n() == self.n && x.s() == y.s(), "operator dimension mismatch");
        let s = x.s();
        if s == 0 {
            return;
        }
        let chunk = chunk.max(1);
        y.as_mut_slice()
            .par_chunks_mut(chunk * s)
            .with_min_len(64)
            .enumerate()
            .for_each(|(c, out)| self.apply_rows(x, out, c * chunk));
    }
}

impl Operator for SparseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }

    fn nnz_in_rows(&self, rows: Range<usize>) -> usize {
        self.row_ptr[rows.end] - self.row_ptr[rows.start]
    }

    fn apply_into(&self, x: &BlockVector, y: &mut BlockVector) {
        self.apply_chunked(x, y, ROW_CHUNK);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = SparseOperator::from_triplets(2, vec![(1, 0, 1.0), (0, 1, 2.0), (0, 0, 3.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(a.row_ptr(), &[0, 2, 3]);
        assert_eq!(a.col_idx(), &[0, 1, 0]);
        assert_eq!(a.values(), &[3.0, 3.0, 1.0]);
    }

    #[test]
    fn invalid_csr_is_rejected() {
        assert!(SparseOperator::from_csr(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseOperator::from_csr(2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
        assert!(SparseOperator::from_csr(2, vec![0, 1, 3], vec![0, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn chunking_does_not_change_bits() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + i as f64 / 7.0));
            t.push((i, (i * 13 + 5) % n, -0.3));
            t.push((i, (i * 7 + 1) % n, 0.1 * i as f64));
        }
        let a = SparseOperator::from_triplets(n, t).unwrap();
        let x = BlockVector::from_fn(n, 3, |i, j| ((i * 3 + j) as f64).sin());
        let mut y1 = BlockVector::zeros(n, 3);
        let mut y2 = BlockVector::zeros(n, 3);
        a.apply_chunked(&x, &mut y1, 1);
        a.apply_chunked(&x, &mut y2, 17);
        assert_eq!(y1, y2);
    }
}
