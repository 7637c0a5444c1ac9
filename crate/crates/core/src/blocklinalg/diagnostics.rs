//! Small-instance diagnostics: block self-adjointness and block grade.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{generate_rhs, BlockVector, KernelCounters, LinalgError, Operator, Preconditioner, SparseOperator};
use crate::salgebra::{block_inner_product, AlgebraSpec};

/// Outcome of the randomized self-adjointness probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsaReport {
    /// `max ‖⟨AX,Y⟩ − ⟨X,AY⟩‖_F / (‖AX‖_F‖Y‖_F)` over trials.
    pub operator_residual: f64,
    /// The same quantity for `M⁻¹`.
    pub preconditioner_residual: f64,
    /// Maximum of the two.
    pub residual: f64,
    pub trials: usize,
}

fn probe(x: &BlockVector, y: &BlockVector, apply: &dyn Fn(&BlockVector) -> BlockVector, alg: &AlgebraSpec) -> Result<f64, LinalgError> {
    let ax = apply(x);
    let ay = apply(y);
    let left = block_inner_product(&ax, y, alg)?;
    let right = block_inner_product(x, &ay, alg)?;
    let scale = ax.frobenius_norm() * y.frobenius_norm();
    let diff = (&left - &right).frobenius_norm();
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// Probes whether `A` and `M⁻¹` are self-adjoint with respect to the block
/// inner product of `alg`, which makes the preconditioned operator block
/// self-adjoint in the `M`-inner product.
pub fn check_bsa(a: &SparseOperator, m: &Preconditioner, alg: &AlgebraSpec, trials: usize, seed: u64) -> Result<BsaReport, LinalgError> {
    let n = a.n();
    if m.n() != n {
        return Err(LinalgError::Dimension(format!("operator of size {n}, preconditioner of size {}", m.n())));
    }
    let s = alg.s();
    let apply_a = |v: &BlockVector| {
        let mut y = BlockVector::zeros(v.n(), v.s());
        a.apply_into(v, &mut y);
        y
    };
    let apply_m = |v: &BlockVector| m.apply(v, &mut KernelCounters::default()).expect("shapes checked");
    let (mut op, mut pre) = (0.0f64, 0.0f64);
    for t in 0..trials as u64 {
        let x = generate_rhs(n, s, seed.wrapping_add(2 * t));
        let y = generate_rhs(n, s, seed.wrapping_add(2 * t + 1));
        op = op.max(probe(&x, &y, &apply_a, alg)?);
        pre = pre.max(probe(&x, &y, &apply_m, alg)?);
    }
    Ok(BsaReport { operator_residual: op, preconditioner_residual: pre, residual: op.max(pre), trials })
}

/// Dimensions of the block Krylov spaces and the derived grades.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrade {
    /// First `k` with `dim K^k = dim K^{k+1}`.
    pub nu: usize,
    /// First `k ≥ 1` with `dim K^k < k·dim S`.
    pub xi: usize,
    /// `nu` was not reached within `kmax`; the value is a lower bound.
    pub nu_lower_bound: bool,
    pub xi_lower_bound: bool,
    /// `dims[k] = dim K^k` for `k = 0..=kmax+1` (truncated at the grade).
    pub dims: Vec<usize>,
}

/// Largest `n·s` accepted by the brute-force grade computation.
pub const GRADE_MAX_ENTRIES: usize = 512;

const RANK_TOLERANCE: f64 = 1e-9;

/// Matrix units spanning the algebra, as dense `s × s` arrays.
fn algebra_basis(alg: &AlgebraSpec) -> Vec<Vec<f64>> {
    let (s, p, q) = (alg.s(), alg.p(), alg.q());
    let mut basis = Vec::with_capacity(alg.dim());
    for i in 0..p {
        for j in 0..p {
            if alg.is_replicated() {
                let mut c = vec![0.0; s * s];
                for g in 0..q {
                    c[(g * p + i) * s + g * p + j] = 1.0;
                }
                basis.push(c);
            } else {
                for g in 0..q {
                    let mut c = vec![0.0; s * s];
                    c[(g * p + i) * s + g * p + j] = 1.0;
                    basis.push(c);
                }
            }
        }
    }
    basis
}

struct Span {
    vectors: Vec<Vec<f64>>,
}

impl Span {
    /// Adds `v` if it is not numerically in the span; returns whether it grew.
    fn push(&mut self, mut v: Vec<f64>) -> bool {
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for b in &self.vectors {
                let d: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
                for (x, bb) in v.iter_mut().zip(b) {
                    *x -= d * bb;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * norm0 {
            return false;
        }
        for x in &mut v {
            *x /= norm;
        }
        self.vectors.push(v);
        true
    }

    fn residual(&self, v: &[f64]) -> f64 {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in &self.vectors {
                let d: f64 = b.iter().zip(&r).map(|(a, c)| a * c).sum();
                for (x, bb) in r.iter_mut().zip(b) {
                    *x -= d * bb;
                }
            }
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn krylov_layers(a: &SparseOperator, r: &BlockVector, alg: &AlgebraSpec, kmax: usize) -> Result<(BlockGrade, Vec<Span>), LinalgError> {
    let (n, s) = (r.n(), r.s());
    if n * s > GRADE_MAX_ENTRIES {
        return Err(LinalgError::Dimension(format!("block grade is limited to n·s <= {GRADE_MAX_ENTRIES}, got {}", n * s)));
    }
    if a.n() != n || alg.s() != s {
        return Err(LinalgError::Dimension("operator, block vector and algebra disagree".into()));
    }
    let basis = algebra_basis(alg);
    let dim_s = basis.len();
    let mut span = Span { vectors: Vec::new() };
    let mut snapshots = vec![Span { vectors: Vec::new() }];
    let mut dims = vec![0usize];
    let mut power = r.clone();
    let mut nu = None;
    for k in 0..=kmax {
        // K^{k+1} = K^k + span{A^k R c}.
        for c in &basis {
            let mut v = vec![0.0; n * s];
            for i in 0..n {
                for (j, out) in v[i * s..(i + 1) * s].iter_mut().enumerate() {
                    *out = (0..s).map(|l| power.get(i, l) * c[l * s + j]).sum();
                }
            }
            span.push(v);
        }
        dims.push(span.vectors.len());
        snapshots.push(Span { vectors: span.vectors.clone() });
        if dims[k + 1] == dims[k] {
            nu = Some(k);
            break;
        }
        let mut next = BlockVector::zeros(n, s);
        a.apply_into(&power, &mut next);
        let scale = next.frobenius_norm();
        if scale > 0.0 {
            for x in next.as_mut_slice() {
                *x /= scale;
            }
        }
        power = next;
    }
    let xi = (1..dims.len()).find(|&k| dims[k] < k * dim_s);
    let grade = BlockGrade {
        nu: nu.unwrap_or(kmax + 1),
        xi: xi.unwrap_or(dims.len()),
        nu_lower_bound: nu.is_none(),
        xi_lower_bound: xi.is_none(),
        dims,
    };
    Ok((grade, snapshots))
}

/// Block grade of `r` with respect to `a` by explicit span construction.
pub fn block_grade_bruteforce(a: &SparseOperator, r: &BlockVector, alg: &AlgebraSpec, kmax: usize) -> Result<BlockGrade, LinalgError> {
    krylov_layers(a, r, alg, kmax).map(|(g, _)| g)
}

/// Distance of `X* − X⁰` to the block Krylov space at the grade of `R⁰`,
/// relative to `‖X* − X⁰‖_F`. Solves `A X* = B` densely.
pub fn solution_distance_at_grade(
    a: &SparseOperator,
    b: &BlockVector,
    x0: &BlockVector,
    alg: &AlgebraSpec,
    kmax: usize,
) -> Result<f64, LinalgError> {
    let (n, s) = (b.n(), b.s());
    let mut ax0 = BlockVector::zeros(n, s);
    a.apply_into(x0, &mut ax0);
    let r0 = b.difference(&ax0);
    let (grade, spans) = krylov_layers(a, &r0, alg, kmax)?;
    if grade.nu_lower_bound {
        return Err(LinalgError::Dimension(format!("grade exceeds kmax = {kmax}")));
    }
    let dense = DMatrix::from_row_slice(n, n, &a.to_dense());
    let lu = dense.lu();
    let rhs = DMatrix::from_row_slice(n, s, r0.as_slice());
    let e = lu.solve(&rhs).ok_or_else(|| LinalgError::Dimension("operator is singular".into()))?;
    let mut flat = vec![0.0; n * s];
    for i in 0..n {
        for j in 0..s {
            flat[i * s + j] = e[(i, j)];
        }
    }
    let norm = flat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = spans[grade.nu].residual(&flat);
    Ok(if norm == 0.0 { d } else { d / norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::{poisson2d, PreconditionerKind};

    #[test]
    fn identity_has_grade_one() {
        let a = SparseOperator::identity(6);
        let r = generate_rhs(6, 2, 3);
        let g = block_grade_bruteforce(&a, &r, &AlgebraSpec::block(2).unwrap(), 10).unwrap();
        assert_eq!(g.nu, 1);
        assert_eq!(g.dims[..3], [0, 4, 4]);
    }

    #[test]
    fn cyclic_shift_needs_n_steps() {
        let n = 7;
        let a = SparseOperator::from_triplets(n, (0..n).map(|i| ((i + 1) % n, i, 1.0)).collect()).unwrap();
        let r = BlockVector::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let g = block_grade_bruteforce(&a, &r, &AlgebraSpec::parallel(1).unwrap(), 20).unwrap();
        assert_eq!(g.nu, n);
        assert_eq!(g.xi, n + 1);
    }

    #[test]
    fn bsa_detects_asymmetry() {
        let sym = poisson2d(3);
        let id = Preconditioner::identity(9);
        let alg = AlgebraSpec::block(2).unwrap();
        assert!(check_bsa(&sym, &id, &alg, 5, 1).unwrap().residual <= 1e-12);
        let asym = SparseOperator::from_dense(2, &[2.0, 1.0, 0.0, 2.0]).unwrap();
        assert!(check_bsa(&asym, &Preconditioner::identity(2), &alg, 5, 1).unwrap().residual > 1e-6);
        let ssor = Preconditioner::build(PreconditionerKind::Ssor { omega: 1.2, sweeps: 2 }, &sym).unwrap();
        assert!(check_bsa(&sym, &ssor, &alg, 5, 1).unwrap().residual <= 1e-10);
    }

    #[test]
    fn solution_lies_in_grade_space() {
        let a = poisson2d(3);
        let b = generate_rhs(9, 2, 5);
        let x0 = BlockVector::zeros(9, 2);
        let d = solution_distance_at_grade(&a, &b, &x0, &AlgebraSpec::block(2).unwrap(), 20).unwrap();
        assert!(d < 1e-8, "distance {d}");
    }
}
