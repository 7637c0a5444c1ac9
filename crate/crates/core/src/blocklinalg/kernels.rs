//! The three block kernels with flop and memory-traffic accounting.
//!
//! Traffic is counted in bytes of 64-bit words; a column index occupies the
//! same space as a value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BlockVector, LinalgError, Operator};
use crate::salgebra::{AlgebraSpec, GramLayout, GroupGram, SElement};

/// Rows handled per inner kernel iteration.
pub const ROW_CHUNK: usize = 4;

const WORD: u64 = 8;

/// Cumulative kernel statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCounters {
    pub flops: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub bop_calls: u64,
    pub bdot_calls: u64,
    pub baxpy_calls: u64,
    pub precond_calls: u64,
}

impl KernelCounters {
    /// `2sz` flops, `2z + sn` words read, `sn` written.
    pub fn record_bop(&mut self, n: usize, s: usize, z: usize) {
        let (n, s, z) = (n as u64, s as u64, z as u64);
        self.flops += 2 * s * z;
        self.bytes_loaded += WORD * (2 * z + s * n);
        self.bytes_stored += WORD * s * n;
        self.bop_calls += 1;
    }

    /// `2np²q` flops and `2ns` words read.
    pub fn record_bdot(&mut self, n: usize, s: usize, p: usize) {
        let (n, s, p) = (n as u64, s as u64, p as u64);
        self.flops += 2 * n * p * s;
        self.bytes_loaded += WORD * 2 * n * s;
        self.bdot_calls += 1;
    }

    /// `2np²q` flops, `2ns` words read and `ns` written.
    pub fn record_baxpy(&mut self, n: usize, s: usize, p: usize) {
        let (n, s, p) = (n as u64, s as u64, p as u64);
        self.flops += 2 * n * p * s;
        self.bytes_loaded += WORD * 2 * n * s;
        self.bytes_stored += WORD * n * s;
        self.baxpy_calls += 1;
    }

    pub fn record_precond(&mut self, flops: u64, words_loaded: u64, words_stored: u64) {
        self.flops += flops;
        self.bytes_loaded += WORD * words_loaded;
        self.bytes_stored += WORD * words_stored;
        self.precond_calls += 1;
    }

    /// Words moved in either direction.
    pub fn values_transferred(&self) -> u64 {
        (self.bytes_loaded + self.bytes_stored) / WORD
    }

    /// Flops per transferred word.
    pub fn intensity(&self) -> f64 {
        self.flops as f64 / self.values_transferred() as f64
    }

    pub fn merge(&mut self, other: &KernelCounters) {
        self.flops += other.flops;
        self.bytes_loaded += other.bytes_loaded;
        self.bytes_stored += other.bytes_stored;
        self.bop_calls += other.bop_calls;
        self.bdot_calls += other.bdot_calls;
        self.baxpy_calls += other.baxpy_calls;
        self.precond_calls += other.precond_calls;
    }
}

fn check_same_shape(a: &BlockVector, b: &BlockVector) -> Result<(), LinalgError> {
    if a.n() != b.n() || a.s() != b.s() {
        return Err(LinalgError::Dimension(format!("{}x{} vs {}x{}", a.n(), a.s(), b.n(), b.s())));
    }
    Ok(())
}

/// `y ← A·x`.
pub fn bop_into(a: &dyn Operator, x: &BlockVector, y: &mut BlockVector, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    if a.dim() != x.n() {
        return Err(LinalgError::Dimension(format!("operator of size {} applied to {} rows", a.dim(), x.n())));
    }
    check_same_shape(x, y)?;
    a.apply_into(x, y);
    counters.record_bop(x.n(), x.s(), a.nnz());
    Ok(())
}

/// `A·x`.
pub fn bop(a: &dyn Operator, x: &BlockVector, counters: &mut KernelCounters) -> Result<BlockVector, LinalgError> {
    let mut y = BlockVector::zeros(x.n(), x.s());
    bop_into(a, x, &mut y, counters)?;
    Ok(y)
}

/// `⟨x, y⟩_S`.
pub fn bdot(x: &BlockVector, y: &BlockVector, a: &AlgebraSpec, counters: &mut KernelCounters) -> Result<SElement, LinalgError> {
    let c = crate::salgebra::block_inner_product(x, y, a)?;
    counters.record_bdot(x.n(), x.s(), a.p());
    Ok(c)
}

/// Unaveraged group Gram of `x` and `y` with `width`-column groups.
pub fn bdot_gram(x: &BlockVector, y: &BlockVector, width: usize, counters: &mut KernelCounters) -> Result<GroupGram, LinalgError> {
    check_same_shape(x, y)?;
    let g = GroupGram::full(x, y, GramLayout::new(x.s(), width));
    counters.record_bdot(x.n(), x.s(), width);
    Ok(g)
}

/// Dense group blocks of `c`, one per group (replicated blocks repeated).
struct RowMultiplier {
    p: usize,
    blocks: Vec<Vec<f64>>,
    replicated: bool,
}

impl RowMultiplier {
    fn new(c: &SElement) -> Self {
        let a = c.algebra();
        let distinct = if a.is_replicated() { 1 } else { a.q() };
        let blocks = (0..distinct).map(|g| c.group_block(g).as_slice().to_vec()).collect();
        Self { p: a.p(), blocks, replicated: a.is_replicated() }
    }

    /// `out (+)= x_row · c`.
    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64], accumulate: bool) {
        let p = self.p;
        if !accumulate {
            out.fill(0.0);
        }
        for (g, (xg, og)) in x.chunks(p).zip(out.chunks_mut(p)).enumerate() {
            let block = &self.blocks[if self.replicated { 0 } else { g }];
            for (i, &xi) in xg.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (o, b) in og.iter_mut().zip(&block[i * p..(i + 1) * p]) {
                    *o += xi * b;
                }
            }
        }
    }
}

fn check_coefficient(x: &BlockVector, c: &SElement) -> Result<(), LinalgError> {
    if c.s() != x.s() {
        return Err(LinalgError::Dimension(format!("coefficient of size {} for {} columns", c.s(), x.s())));
    }
    Ok(())
}

fn row_chunks(s: usize) -> usize {
    (ROW_CHUNK * s).max(1)
}

/// `x·c` without instrumentation.
pub fn apply_right(x: &BlockVector, c: &SElement) -> BlockVector {
    check_coefficient(x, c).expect("coefficient size matches");
    let mut y = BlockVector::zeros(x.n(), x.s());
    let m = RowMultiplier::new(c);
    let s = x.s();
    if s == 0 {
        return y;
    }
    y.as_mut_slice()
        .par_chunks_mut(row_chunks(s))
        .zip(x.as_slice().par_chunks(row_chunks(s)))
        .with_min_len(64)
        .for_each(|(yc, xc)| {
            for (yr, xr) in yc.chunks_mut(s).zip(xc.chunks(s)) {
                m.apply(xr, yr, false);
            }
        });
    y
}

/// `y ← y + x·c`.
pub fn baxpy(y: &mut BlockVector, x: &BlockVector, c: &SElement, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    check_same_shape(x, y)?;
    check_coefficient(x, c)?;
    let s = x.s();
    if s > 0 {
        let m = RowMultiplier::new(c);
        y.as_mut_slice()
            .par_chunks_mut(row_chunks(s))
            .zip(x.as_slice().par_chunks(row_chunks(s)))
            .with_min_len(64)
            .for_each(|(yc, xc)| {
                for (yr, xr) in yc.chunks_mut(s).zip(xc.chunks(s)) {
                    m.apply(xr, yr, true);
                }
            });
    }
    counters.record_baxpy(x.n(), s, c.algebra().p());
    Ok(())
}

/// `y ← x + y·c`.
pub fn xpby(y: &mut BlockVector, x: &BlockVector, c: &SElement, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    check_same_shape(x, y)?;
    check_coefficient(x, c)?;
    let s = x.s();
    if s > 0 {
        let m = RowMultiplier::new(c);
        y.as_mut_slice()
            .par_chunks_mut(row_chunks(s))
            .zip(x.as_slice().par_chunks(row_chunks(s)))
            .with_min_len(64)
            .for_each(|(yc, xc)| {
                let mut tmp = vec![0.0; s];
                for (yr, xr) in yc.chunks_mut(s).zip(xc.chunks(s)) {
                    m.apply(yr, &mut tmp, false);
                    for ((o, t), xv) in yr.iter_mut().zip(&tmp).zip(xr) {
                        *o = xv + t;
                    }
                }
            });
    }
    counters.record_baxpy(x.n(), s, c.algebra().p());
    Ok(())
}

/// `y ← y·c` in place.
pub fn scale_right(y: &mut BlockVector, c: &SElement, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    check_coefficient(y, c)?;
    let s = y.s();
    if s > 0 {
        let m = RowMultiplier::new(c);
        y.as_mut_slice().par_chunks_mut(row_chunks(s)).with_min_len(64).for_each(|yc| {
            let mut tmp = vec![0.0; s];
            for yr in yc.chunks_mut(s) {
                m.apply(yr, &mut tmp, false);
                yr.copy_from_slice(&tmp);
            }
        });
    }
    counters.record_baxpy(y.n(), s, c.algebra().p());
    Ok(())
}

/// `y ← y + α·x` for a real scalar `α`.
pub fn axpy_scalar(y: &mut BlockVector, alpha: f64, x: &BlockVector, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    check_same_shape(x, y)?;
    y.as_mut_slice().par_iter_mut().zip(x.as_slice().par_iter()).with_min_len(1024).for_each(|(a, b)| *a += alpha * b);
    counters.record_baxpy(x.n(), x.s(), 1);
    Ok(())
}

/// `y ← x + α·y` for a real scalar `α`.
pub fn xpby_scalar(y: &mut BlockVector, x: &BlockVector, alpha: f64, counters: &mut KernelCounters) -> Result<(), LinalgError> {
    check_same_shape(x, y)?;
    y.as_mut_slice().par_iter_mut().zip(x.as_slice().par_iter()).with_min_len(1024).for_each(|(a, b)| *a = b + alpha * *a);
    counters.record_baxpy(x.n(), x.s(), 1);
    Ok(())
}

/// Kernel model for a block vector with `n` rows and `s` columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub flops: u64,
    pub values: u64,
    pub intensity: f64,
}

impl KernelModel {
    fn from_counters(c: KernelCounters) -> Self {
        Self { flops: c.flops, values: c.values_transferred(), intensity: c.intensity() }
    }

    pub fn bop(n: usize, s: usize, z: usize) -> Self {
        let mut c = KernelCounters::default();
        c.record_bop(n, s, z);
        Self::from_counters(c)
    }

    pub fn bdot(n: usize, s: usize, p: usize) -> Self {
        let mut c = KernelCounters::default();
        c.record_bdot(n, s, p);
        Self::from_counters(c)
    }

    pub fn baxpy(n: usize, s: usize, p: usize) -> Self {
        let mut c = KernelCounters::default();
        c.record_baxpy(n, s, p);
        Self::from_counters(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::SparseOperator;

    fn tridiag(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseOperator::from_triplets(n, t).unwrap()
    }

    #[test]
    fn tridiagonal_times_ones() {
        let mut c = KernelCounters::default();
        let y = bop(&tridiag(3), &BlockVector::from_fn(3, 2, |_, _| 1.0), &mut c).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(c.flops, 2 * 2 * 7);
    }

    #[test]
    fn bop_counter_matches_cost_model() {
        let mut c = KernelCounters::default();
        c.record_bop(5, 4, 10);
        assert_eq!(c.flops, 80);
        assert_eq!(c.values_transferred(), 2 * 10 + 2 * 4 * 5);
    }

    #[test]
    fn bdot_and_baxpy_counters() {
        let mut c = KernelCounters::default();
        c.record_baxpy(100, 8, 4);
        assert_eq!(c.flops, 6400);
        assert!((KernelModel::bdot(1000, 8, 4).intensity - 4.0).abs() < 1e-12);
        assert!((KernelModel::baxpy(1000, 8, 4).intensity - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn baxpy_with_zero_coefficient_is_identity() {
        let a = AlgebraSpec::block_parallel(4, 2).unwrap();
        let x = BlockVector::from_fn(9, 4, |i, j| (i + j) as f64);
        let mut y = BlockVector::from_fn(9, 4, |i, j| (i * j) as f64);
        let before = y.clone();
        baxpy(&mut y, &x, &SElement::zeros(a), &mut KernelCounters::default()).unwrap();
        assert_eq!(y, before);
    }

    #[test]
    fn right_multiplication_matches_dense_product() {
        let a = AlgebraSpec::block(3).unwrap();
        let c = SElement::from_dense(a, vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]).unwrap();
        let x = BlockVector::from_fn(5, 3, |i, j| (i as f64) - (j as f64) * 0.5);
        let y = apply_right(&x, &c);
        for i in 0..5 {
            for j in 0..3 {
                let expect: f64 = (0..3).map(|k| x.get(i, k) * c.get(k, j)).sum();
                assert!((y.get(i, j) - expect).abs() < 1e-14);
            }
        }
        let mut z = x.clone();
        let mut w = BlockVector::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        xpby(&mut w, &x, &c, &mut KernelCounters::default()).unwrap();
        let expect = apply_right(&BlockVector::from_fn(5, 3, |i, j| (i * 3 + j) as f64), &c);
        for i in 0..5 {
            for j in 0..3 {
                assert!((w.get(i, j) - expect.get(i, j) - x.get(i, j)).abs() < 1e-13);
            }
        }
        scale_right(&mut z, &c, &mut KernelCounters::default()).unwrap();
        assert_eq!(z, y);
    }
}
