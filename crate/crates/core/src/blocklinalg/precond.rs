use serde::{Deserialize, Serialize};

use super::{BlockVector, KernelCounters, LinalgError, Operator, SparseOperator};

/// Preconditioner family and parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreconditionerKind {
    Identity,
    Jacobi,
    /// Symmetric SSOR, `sweeps` steps of the stationary iteration.
    Ssor { omega: f64, sweeps: usize },
    /// Incomplete LU without fill in natural ordering.
    Ilu0,
}

impl PreconditionerKind {
    /// Parses `identity`, `jacobi`, `ssor`, `ssor:<omega>`,
    /// `ssor:<omega>:<sweeps>` or `ilu0`.
    pub fn parse(text: &str) -> Result<Self, LinalgError> {
        let t = text.trim().to_ascii_lowercase();
        let mut parts = t.split(':');
        let bad = || LinalgError::Unsupported(format!("preconditioner `{text}`"));
        let kind = match parts.next().unwrap_or("") {
            "identity" | "none" => Self::Identity,
            "jacobi" => Self::Jacobi,
            "ilu0" | "ilu" => Self::Ilu0,
            "ssor" => {
                let omega = parts.next().map(|v| v.parse::<f64>().map_err(|_| bad())).transpose()?.unwrap_or(1.0);
                let sweeps = parts.next().map(|v| v.parse::<usize>().map_err(|_| bad())).transpose()?.unwrap_or(1);
                Self::Ssor { omega, sweeps }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(kind)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Jacobi => "jacobi".into(),
            Self::Ssor { omega, sweeps } => format!("ssor:{omega}:{sweeps}"),
            Self::Ilu0 => "ilu0".into(),
        }
    }
}

#[derive(Clone, Debug)]
enum State {
    Identity,
    Jacobi { inv_diag: Vec<f64> },
    Ssor { a: SparseOperator, diag: Vec<f64>, omega: f64, sweeps: usize },
    Ilu0 { lu: SparseOperator, diag_pos: Vec<usize> },
}

/// `M⁻¹` application built from an operator.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    n: usize,
    z: usize,
    state: State,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self { kind: PreconditionerKind::Identity, n, z: 0, state: State::Identity }
    }

    pub fn build(kind: PreconditionerKind, a: &SparseOperator) -> Result<Self, LinalgError> {
        let n = a.n();
        let diag = a.diagonal();
        let need_diag = || match diag.iter().position(|&d| d == 0.0) {
            Some(row) => Err(LinalgError::ZeroDiagonal { row }),
            None => Ok(()),
        };
        let state = match kind {
            PreconditionerKind::Identity => State::Identity,
            PreconditionerKind::Jacobi => {
                need_diag()?;
                State::Jacobi { inv_diag: diag.iter().map(|d| 1.0 / d).collect() }
            }
            PreconditionerKind::Ssor { omega, sweeps } => {
                if !(omega > 0.0 && omega < 2.0) || sweeps == 0 {
                    return Err(LinalgError::Unsupported(format!("SSOR needs 0 < omega < 2 and sweeps >= 1, got {omega}, {sweeps}")));
                }
                need_diag()?;
                State::Ssor { a: a.clone(), diag, omega, sweeps }
            }
            PreconditionerKind::Ilu0 => {
                need_diag()?;
                let (lu, diag_pos) = ilu0_factor(a)?;
                State::Ilu0 { lu, diag_pos }
            }
        };
        Ok(Self { kind, n, z: a.nnz(), state })
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `M⁻¹ x`.
    pub fn apply(&self, x: &BlockVector, counters: &mut KernelCounters) -> Result<BlockVector, LinalgError> {
        let mut y = BlockVector::zeros(x.n(), x.s());
        self.apply_into(x, &mut y, counters)?;
        Ok(y)
    }

    /// `y ← M⁻¹ x`.
    pub fn apply_into(&self, x: &BlockVector, y: &mut BlockVector, counters: &mut KernelCounters) -> Result<(), LinalgError> {
        if x.n() != self.n || y.n() != self.n || x.s() != y.s() {
            return Err(LinalgError::Dimension(format!("preconditioner of size {} applied to {} rows", self.n, x.n())));
        }
        let (n, s, z) = (self.n as u64, x.s() as u64, self.z as u64);
        match &self.state {
            State::Identity => {
                y.copy_from(x);
                counters.record_precond(0, n * s, n * s);
            }
            State::Jacobi { inv_diag } => {
                let s = x.s();
                for (i, d) in inv_diag.iter().enumerate() {
                    for (o, v) in y.row_mut(i).iter_mut().zip(&x.as_slice()[i * s..(i + 1) * s]) {
                        *o = v * d;
                    }
                }
                counters.record_precond(n * s as u64, n + n * s as u64, n * s as u64);
            }
            State::Ssor { a, diag, omega, sweeps } => {
                ssor_apply(a, diag, *omega, *sweeps, x, y);
                let sw = *sweeps as u64;
                let extra = sw.saturating_sub(1);
                counters.record_precond(sw * (2 * s * z + 3 * n * s) + extra * (2 * s * z + n * s), sw * 2 * (2 * z + n * s) + extra * (2 * z + n * s), sw * 2 * n * s);
            }
            State::Ilu0 { lu, diag_pos } => {
                ilu0_apply(lu, diag_pos, x, y);
                counters.record_precond(2 * s * z, 2 * z + n * s, n * s);
            }
        }
        Ok(())
    }
}

fn ssor_sweep(a: &SparseOperator, diag: &[f64], omega: f64, x: &BlockVector, y: &mut BlockVector) {
    let (n, s) = (x.n(), x.s());
    let mut acc = vec![0.0; s];
    // (D + ωL) y = x
    for (i, &d) in diag.iter().enumerate().take(n) {
        acc.copy_from_slice(x.row(i));
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j >= i {
                break;
            }
            for (t, yj) in acc.iter_mut().zip(y.row(j)) {
                *t -= omega * v * yj;
            }
        }
        for (o, t) in y.row_mut(i).iter_mut().zip(&acc) {
            *o = t / d;
        }
    }
    // y ← D y, then (D + ωU) y = y
    for i in (0..n).rev() {
        for (t, yi) in acc.iter_mut().zip(y.row(i)) {
            *t = diag[i] * yi;
        }
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals).rev() {
            if j <= i {
                break;
            }
            for (t, yj) in acc.iter_mut().zip(y.row(j)) {
                *t -= omega * v * yj;
            }
        }
        for (o, t) in y.row_mut(i).iter_mut().zip(&acc) {
            *o = t / diag[i];
        }
    }
    let f = omega * (2.0 - omega);
    for v in y.as_mut_slice() {
        *v *= f;
    }
}

fn ssor_apply(a: &SparseOperator, diag: &[f64], omega: f64, sweeps: usize, x: &BlockVector, y: &mut BlockVector) {
    ssor_sweep(a, diag, omega, x, y);
    if sweeps == 1 {
        return;
    }
    let mut residual = BlockVector::zeros(x.n(), x.s());
    let mut correction = BlockVector::zeros(x.n(), x.s());
    for _ in 1..sweeps {
        a.apply_into(y, &mut residual);
        for (r, b) in residual.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *r = b - *r;
        }
        ssor_sweep(a, diag, omega, &residual, &mut correction);
        for (v, c) in y.as_mut_slice().iter_mut().zip(correction.as_slice()) {
            *v += c;
        }
    }
}

fn ilu0_factor(a: &SparseOperator) -> Result<(SparseOperator, Vec<usize>), LinalgError> {
    let n = a.n();
    let row_ptr = a.row_ptr().to_vec();
    let col_idx = a.col_idx().to_vec();
    let mut values = a.values().to_vec();
    let diag_pos: Vec<usize> = (0..n)
        .map(|i| {
            let r = row_ptr[i]..row_ptr[i + 1];
            col_idx[r.clone()].binary_search(&i).map(|k| r.start + k).map_err(|_| LinalgError::ZeroDiagonal { row: i })
        })
        .collect::<Result<_, _>>()?;
    for i in 0..n {
        for kk in row_ptr[i]..diag_pos[i] {
            let k = col_idx[kk];
            let pivot = values[diag_pos[k]];
            if pivot == 0.0 {
                return Err(LinalgError::ZeroDiagonal { row: k });
            }
            values[kk] /= pivot;
            let lik = values[kk];
            // a_ij -= l_ik u_kj for j > k present in both rows.
            let mut jj = kk + 1;
            for kj in diag_pos[k] + 1..row_ptr[k + 1] {
                let j = col_idx[kj];
                while jj < row_ptr[i + 1] && col_idx[jj] < j {
                    jj += 1;
                }
                if jj == row_ptr[i + 1] {
                    break;
                }
                if col_idx[jj] == j {
                    values[jj] -= lik * values[kj];
                }
            }
        }
        if values[diag_pos[i]] == 0.0 {
            return Err(LinalgError::ZeroDiagonal { row: i });
        }
    }
    let lu = SparseOperator::from_csr(n, row_ptr, col_idx, values)?;
    Ok((lu, diag_pos))
}

fn ilu0_apply(lu: &SparseOperator, diag_pos: &[usize], x: &BlockVector, y: &mut BlockVector) {
    let (n, s) = (x.n(), x.s());
    let row_ptr = lu.row_ptr();
    let cols = lu.col_idx();
    let vals = lu.values();
    let mut acc = vec![0.0; s];
    for i in 0..n {
        acc.copy_from_slice(x.row(i));
        for k in row_ptr[i]..diag_pos[i] {
            for (t, yj) in acc.iter_mut().zip(y.row(cols[k])) {
                *t -= vals[k] * yj;
            }
        }
        y.row_mut(i).copy_from_slice(&acc);
    }
    for i in (0..n).rev() {
        acc.copy_from_slice(y.row(i));
        for k in diag_pos[i] + 1..row_ptr[i + 1] {
            for (t, yj) in acc.iter_mut().zip(y.row(cols[k])) {
                *t -= vals[k] * yj;
            }
        }
        let d = vals[diag_pos[i]];
        for (o, t) in y.row_mut(i).iter_mut().zip(&acc) {
            *o = t / d;
        }
    }
}

/// Incomplete factors of an ILU(0) preconditioner as dense row-major
/// `(L, U)` with unit lower `L`. Intended for small diagnostic problems.
pub fn ilu0_dense_factors(a: &SparseOperator) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = a.n();
    let (lu, diag_pos) = ilu0_factor(a)?;
    let mut l = vec![0.0; n * n];
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        l[i * n + i] = 1.0;
        let (cols, vals) = lu.row(i);
        let start = lu.row_ptr()[i];
        for (k, (&j, &v)) in cols.iter().zip(vals).enumerate() {
            if start + k < diag_pos[i] {
                l[i * n + j] = v;
            } else {
                u[i * n + j] = v;
            }
        }
    }
    Ok((l, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::poisson2d;

    #[test]
    fn jacobi_divides_by_diagonal() {
        let a = SparseOperator::from_dense(2, &[2.0, 0.0, 0.0, 4.0]).unwrap();
        let m = Preconditioner::build(PreconditionerKind::Jacobi, &a).unwrap();
        let x = BlockVector::from_row_major(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(m.apply(&x, &mut KernelCounters::default()).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_diagonal_is_a_build_error() {
        let a = SparseOperator::from_dense(2, &[0.0, 1.0, 1.0, 4.0]).unwrap();
        assert_eq!(Preconditioner::build(PreconditionerKind::Jacobi, &a).unwrap_err(), LinalgError::ZeroDiagonal { row: 0 });
    }

    #[test]
    fn ssor_single_sweep_matches_dense_formula() {
        let a = poisson2d(3);
        let n = a.n();
        let dense = a.to_dense();
        let omega = 1.3;
        let m = Preconditioner::build(PreconditionerKind::Ssor { omega, sweeps: 1 }, &a).unwrap();
        let x = BlockVector::from_fn(n, 1, |i, _| (i as f64 * 0.7).cos());
        let y = m.apply(&x, &mut KernelCounters::default()).unwrap();
        // Check (D + ωL) D⁻¹ (D + ωU) y = ω(2 − ω) x.
        let lower = |i: usize, j: usize| if j < i { omega * dense[i * n + j] } else if i == j { dense[i * n + i] } else { 0.0 };
        let upper = |i: usize, j: usize| if j > i { omega * dense[i * n + j] } else if i == j { dense[i * n + i] } else { 0.0 };
        let u: Vec<f64> = (0..n).map(|i| (0..n).map(|j| upper(i, j) * y.get(j, 0)).sum::<f64>() / dense[i * n + i]).collect();
        for i in 0..n {
            let lhs: f64 = (0..n).map(|j| lower(i, j) * u[j]).sum();
            assert!((lhs - omega * (2.0 - omega) * x.get(i, 0)).abs() < 1e-13);
        }
    }

    #[test]
    fn ilu0_keeps_pattern_and_solves_with_its_factors() {
        let a = poisson2d(4);
        let n = a.n();
        let (l, u) = ilu0_dense_factors(&a).unwrap();
        let dense = a.to_dense();
        // L·U equals A on A's pattern.
        for i in 0..n {
            for j in 0..n {
                let lu: f64 = (0..n).map(|k| l[i * n + k] * u[k * n + j]).sum();
                if dense[i * n + j] != 0.0 {
                    assert!((lu - dense[i * n + j]).abs() < 1e-12);
                }
                if dense[i * n + j] == 0.0 {
                    assert_eq!(l[i * n + j], 0.0);
                    assert_eq!(u[i * n + j], 0.0);
                }
            }
        }
        let m = Preconditioner::build(PreconditionerKind::Ilu0, &a).unwrap();
        let x = BlockVector::from_fn(n, 2, |i, j| (i + 3 * j) as f64 - 4.0);
        let y = m.apply(&x, &mut KernelCounters::default()).unwrap();
        for c in 0..2 {
            for i in 0..n {
                let uy: Vec<f64> = (0..n).map(|k| (0..n).map(|j| u[k * n + j] * y.get(j, c)).sum()).collect();
                let luy: f64 = (0..n).map(|k| l[i * n + k] * uy[k]).sum();
                assert!((luy - x.get(i, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(PreconditionerKind::parse("ssor:1.2:3").unwrap(), PreconditionerKind::Ssor { omega: 1.2, sweeps: 3 });
        assert_eq!(PreconditionerKind::parse("jacobi").unwrap(), PreconditionerKind::Jacobi);
        assert!(PreconditionerKind::parse("amg").is_err());
    }
}
