//! Small dense matrices used for coefficient blocks: row-major storage,
//! Householder QR with a canonical rank-deficient layout, and LU inversion.

use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Thin (or full) QR factors `A = Q R` with `R` square `cols × cols`.
#[derive(Clone, Debug)]
pub struct QrFactors {
    /// `rows × cols` (thin) or `rows × rows` (full), orthonormal columns.
    pub q: DenseMatrix,
    /// `cols × cols`, upper triangular, nonnegative diagonal. Columns judged
    /// linearly dependent have an all-zero row at their own index.
    pub r: DenseMatrix,
    /// Number of independent columns found.
    pub rank: usize,
}

/// Raised by [`DenseMatrix::inverse`] when a pivot falls below the threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularPivot {
    pub index: usize,
    pub magnitude: f64,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from row-major data.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// # Panics
    /// On inner dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Rows `lo..hi` as a new matrix.
    pub fn row_block(&self, lo: usize, hi: usize) -> Self {
        Self {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }

    /// Thin Householder QR, see [`QrFactors`]. Requires `rows >= cols`.
    pub fn householder_qr(&self) -> QrFactors {
        householder(self, false)
    }

    /// Householder QR with the full square orthogonal factor.
    pub fn householder_qr_full(&self) -> QrFactors {
        householder(self, true)
    }

    /// Inverse by Gaussian elimination with partial pivoting. A pivot whose
    /// magnitude is below `threshold` is reported as singular.
    pub fn inverse(&self, threshold: f64) -> Result<Self, SingularPivot> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let (piv, mag) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if mag.is_nan() || mag < threshold || mag == 0.0 {
                return Err(SingularPivot { index: col, magnitude: mag.max(0.0) });
            }
            if piv != col {
                a.swap_rows(piv, col);
                inv.swap_rows(piv, col);
            }
            let d = a[(col, col)];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)] / d;
                if f == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let av = a[(col, c)];
                    let iv = inv[(col, c)];
                    a[(r, c)] -= f * av;
                    inv[(r, c)] -= f * iv;
                }
            }
            for c in 0..n {
                a[(col, c)] /= d;
                inv[(col, c)] /= d;
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols, "eigenvalues of a non-square matrix");
        let n = self.rows;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]));
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `y -= 2 v (vᵀ y)` for a unit vector `v`.
fn reflect(v: &[f64], y: &mut [f64]) {
    let dot: f64 = v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    if dot == 0.0 {
        return;
    }
    let f = 2.0 * dot;
    for (yi, vi) in y.iter_mut().zip(v) {
        *yi -= f * vi;
    }
}

/// Column-pivot-free Householder QR that skips reflectors for columns whose
/// remaining part is negligible (at most `max(m, n)·ε·‖A‖_F`). Independent
/// columns produce the usual triangular rows; a dependent column gets a zero
/// row in `R` at its own index and is assigned a leftover Householder
/// direction in `Q`. This makes `R` a function of `AᵀA` and the dependency
/// pattern only, so different factorization orders agree on it.
fn householder(a: &DenseMatrix, full: bool) -> QrFactors {
    let (m, n) = (a.rows, a.cols);
    assert!(m >= n, "Householder QR needs rows >= cols ({m} < {n})");
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let tol = (m.max(n) as f64) * f64::EPSILON * a.frobenius_norm();

    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut signs: Vec<f64> = Vec::with_capacity(n);
    let mut pivot_row: Vec<Option<usize>> = vec![None; n];
    let mut r = 0usize;
    for j in 0..n {
        let x = &cols[j][r..];
        let norm = norm2(x);
        if norm.is_nan() || norm <= tol {
            continue;
        }
        let tail = norm2(&x[1..]);
        let diag = if tail == 0.0 {
            reflectors.push(None);
            x[0]
        } else {
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vn = norm2(&v);
            v.iter_mut().for_each(|e| *e /= vn);
            for c in cols.iter_mut().skip(j + 1) {
                reflect(&v, &mut c[r..]);
            }
            let col = &mut cols[j][r..];
            col[0] = alpha;
            col[1..].iter_mut().for_each(|e| *e = 0.0);
            reflectors.push(Some(v));
            alpha
        };
        signs.push(if diag < 0.0 { -1.0 } else { 1.0 });
        pivot_row[j] = Some(r);
        r += 1;
    }
    let rank = r;

    let mut rmat = DenseMatrix::zeros(n, n);
    for (j, piv) in pivot_row.iter().enumerate() {
        if let Some(i) = *piv {
            for k in j..n {
                rmat[(j, k)] = signs[i] * cols[k][i];
            }
        }
    }

    let apply_all = |unit: usize| -> Vec<f64> {
        let mut e = vec![0.0; m];
        e[unit] = 1.0;
        for (i, refl) in reflectors.iter().enumerate().rev() {
            if let Some(v) = refl {
                reflect(v, &mut e[i..]);
            }
        }
        e
    };

    let qcols = if full { m } else { n };
    let mut q = DenseMatrix::zeros(m, qcols);
    let mut next_free = rank;
    for (j, piv) in pivot_row.iter().enumerate() {
        let (unit, sign) = match *piv {
            Some(i) => (i, signs[i]),
            None => {
                let u = next_free;
                next_free += 1;
                (u, 1.0)
            }
        };
        let col = apply_all(unit);
        for i in 0..m {
            q[(i, j)] = sign * col[i];
        }
    }
    for j in n..qcols {
        let col = apply_all(j);
        for i in 0..m {
            q[(i, j)] = col[i];
        }
    }
    QrFactors { q, r: rmat, rank }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let a = DenseMatrix::from_row_major(4, 3, vec![
            1.0, 2.0, 0.5, //
            -3.0, 0.1, 2.0, //
            0.7, 4.0, -1.0, //
            2.0, -2.0, 3.0,
        ]);
        let f = a.householder_qr();
        assert_eq!(f.rank, 3);
        assert!(max_abs_diff(&f.q.matmul(&f.r), &a) < 1e-14);
        assert!(max_abs_diff(&f.q.transpose().matmul(&f.q), &DenseMatrix::identity(3)) < 1e-14);
        for i in 0..3 {
            assert!(f.r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(f.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn triangular_input_is_a_fixed_point() {
        let a = DenseMatrix::from_row_major(2, 2, vec![3.0, 1.0, 0.0, 2.0]);
        let f = a.householder_qr();
        assert_eq!(f.q, DenseMatrix::identity(2));
        assert_eq!(f.r, a);
    }

    #[test]
    fn duplicated_column_gives_zero_row_and_orthonormal_q() {
        let a = DenseMatrix::from_row_major(3, 2, vec![1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let f = a.householder_qr();
        assert_eq!(f.rank, 1);
        assert_eq!(f.r[(1, 1)], 0.0);
        assert_eq!(f.r[(1, 0)], 0.0);
        assert!(max_abs_diff(&f.q.transpose().matmul(&f.q), &DenseMatrix::identity(2)) < 1e-14);
        assert!(max_abs_diff(&f.q.matmul(&f.r), &a) < 1e-14);
    }

    #[test]
    fn full_q_is_square_orthogonal() {
        let a = DenseMatrix::from_row_major(4, 2, vec![3.0, 0.0, 0.0, 1.0, 4.0, 0.0, 0.0, 2.0]);
        let f = a.householder_qr_full();
        assert_eq!(f.q.cols(), 4);
        assert!(max_abs_diff(&f.q.transpose().matmul(&f.q), &DenseMatrix::identity(4)) < 1e-14);
        assert!((f.r[(0, 0)] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_round_trip_and_singular_pivot() {
        let a = DenseMatrix::from_row_major(2, 2, vec![2.0, 1.0, 0.0, 3.0]);
        let inv = a.inverse(1e-12).unwrap();
        assert!(max_abs_diff(&a.matmul(&inv), &DenseMatrix::identity(2)) < 1e-14);
        let s = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        let err = s.inverse(1e-12).unwrap_err();
        assert_eq!(err.index, 1);
        assert!(err.magnitude < 1e-12);
    }
}
