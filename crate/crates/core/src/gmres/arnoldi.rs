//! Block Arnoldi process with pluggable orthogonalization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::givens::{back_substitute, block_givens_update, BlockRotation};
use crate::blocklinalg::{apply_right, BlockVector, Operator, Preconditioner};
use crate::comms::{CommError, FutureHandle, GramRequest, Machine, ReductionTree};
use crate::salgebra::{block_inner_product, AlgebraError, AlgebraSpec, GroupGram, SElement};

/// Orthogonalization of a new block vector against the Arnoldi basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoStrategy {
    /// One blocking reduction per basis vector.
    Modified,
    /// All projections in one fused reduction, repeated the given number of
    /// times (1 or 2).
    Classical(usize),
    /// Modified Gram-Schmidt with each projection started `r` basis vectors
    /// ahead, keeping up to `r + 1` reductions in flight.
    Pipelined(usize),
    /// Local modified Gram-Schmidt followed by one reduction and one
    /// back-propagation over a tree of coefficient bases.
    Localized,
}

impl Default for OrthoStrategy {
    fn default() -> Self {
        Self::Classical(2)
    }
}

impl OrthoStrategy {
    /// Default look-ahead of [`OrthoStrategy::Pipelined`].
    pub const DEFAULT_LOOKAHEAD: usize = 3;

    pub fn label(&self) -> String {
        match self {
            Self::Modified => "modified".into(),
            Self::Classical(it) => format!("classical:{it}"),
            Self::Pipelined(r) => format!("pipelined:{r}"),
            Self::Localized => "localized".into(),
        }
    }

    /// Parses `modified`, `classical[:it]`, `pipelined[:r]` or `localized`.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().to_ascii_lowercase();
        let (name, arg) = match t.split_once(':') {
            Some((n, a)) => (n.to_string(), Some(a.parse::<usize>().ok()?)),
            None => (t.clone(), None),
        };
        match (name.as_str(), arg) {
            ("modified" | "mgs", None) => Some(Self::Modified),
            ("classical" | "cgs", None) => Some(Self::Classical(2)),
            ("classical" | "cgs", Some(it @ (1 | 2))) => Some(Self::Classical(it)),
            ("pipelined", None) => Some(Self::Pipelined(Self::DEFAULT_LOOKAHEAD)),
            ("pipelined", Some(r)) if r >= 1 => Some(Self::Pipelined(r)),
            ("localized" | "tree", None) => Some(Self::Localized),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), CommError> {
        match self {
            Self::Classical(it) if !(1..=2).contains(it) => Err(CommError::Mismatch(format!("classical needs 1 or 2 iterations, got {it}"))),
            Self::Pipelined(0) => Err(CommError::Mismatch("pipelined look-ahead must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// Basis, Hessenberg matrix and its triangulation for one restart cycle.
#[derive(Clone, Debug)]
pub struct ArnoldiBasis {
    alg: AlgebraSpec,
    vectors: Vec<BlockVector>,
    hessenberg: Vec<Vec<SElement>>,
    triangular: Vec<Vec<SElement>>,
    rotations: Vec<BlockRotation>,
    rhs: Vec<SElement>,
    rank_deficient_steps: usize,
}

impl ArnoldiBasis {
    fn with_capacity(alg: AlgebraSpec, capacity: usize) -> Self {
        Self {
            alg,
            vectors: Vec::with_capacity(capacity + 1),
            hessenberg: Vec::with_capacity(capacity),
            triangular: Vec::with_capacity(capacity),
            rotations: Vec::with_capacity(capacity),
            rhs: Vec::with_capacity(capacity + 1),
            rank_deficient_steps: 0,
        }
    }

    fn clear(&mut self) {
        self.vectors.clear();
        self.hessenberg.clear();
        self.triangular.clear();
        self.rotations.clear();
        self.rhs.clear();
    }

    pub fn algebra(&self) -> AlgebraSpec {
        self.alg
    }

    /// Number of completed Arnoldi steps.
    pub fn steps(&self) -> usize {
        self.hessenberg.len()
    }

    /// `V⁰ … Vᵏ⁺¹`.
    pub fn vectors(&self) -> &[BlockVector] {
        &self.vectors
    }

    /// Column `j` of the block Hessenberg matrix before triangulation:
    /// `η_{0,j} … η_{j,j}, η_{j+1,j}`.
    pub fn hessenberg_column(&self, j: usize) -> &[SElement] {
        &self.hessenberg[j]
    }

    /// Column `j` of the triangulated factor, `R_{0,j} … R_{j,j}`.
    pub fn triangular_column(&self, j: usize) -> &[SElement] {
        &self.triangular[j]
    }

    pub fn rotations(&self) -> &[BlockRotation] {
        &self.rotations
    }

    /// Transformed right-hand side `σ⁰ … σᵏ⁺¹`.
    pub fn rhs(&self) -> &[SElement] {
        &self.rhs
    }

    /// `σᵏ⁺¹`, whose Frobenius norm equals the residual norm.
    pub fn residual_coefficient(&self) -> &SElement {
        self.rhs.last().expect("basis has been started")
    }

    /// Steps whose new basis vector contained directions injected by the
    /// normalizer for a rank-deficient remainder.
    pub fn rank_deficient_steps(&self) -> usize {
        self.rank_deficient_steps
    }

    /// Least-squares coefficients `y⁰ … yᵏ` of the current iterate update.
    pub fn solve_coefficients(&self) -> Result<Vec<SElement>, (usize, AlgebraError)> {
        back_substitute(&self.triangular, &self.rhs[..self.triangular.len()])
    }

    /// Coefficients of the residual on `V⁰ … Vᵏ⁺¹`, obtained by undoing the
    /// rotations on `(0, …, 0, σᵏ⁺¹)`.
    pub fn residual_coordinates(&self) -> Vec<SElement> {
        let k = self.rotations.len();
        let mut c = vec![SElement::zeros(self.alg); k];
        c.push(self.residual_coefficient().clone());
        for (j, rot) in self.rotations.iter().enumerate().rev() {
            let (a, b) = rot.apply_forward(&c[j], &c[j + 1]);
            c[j] = a;
            c[j + 1] = b;
        }
        c
    }

    /// The residual block vector `Σ Vʲ cⱼ` assembled outside the
    /// instrumented machine.
    pub fn residual_vector(&self) -> BlockVector {
        combine(&self.vectors, &self.residual_coordinates())
    }
}

/// `Σ Vʲ cⱼ` without instrumentation.
pub(crate) fn combine(vectors: &[BlockVector], coeffs: &[SElement]) -> BlockVector {
    let mut out = BlockVector::zeros(vectors[0].n(), vectors[0].s());
    for (v, c) in vectors.iter().zip(coeffs) {
        let t = apply_right(v, c);
        for (o, x) in out.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *o += x;
        }
    }
    out
}

/// Diagonal entries below this multiple of `ε·‖column‖` mark a remainder
/// that the normalizer had to complete with artificial directions.
const RANK_DEFICIENCY_FACTOR: f64 = 1e3;

/// Block Arnoldi process over an instrumented machine.
pub struct ArnoldiProcess {
    strategy: OrthoStrategy,
    capacity: usize,
    basis: ArnoldiBasis,
    tree: Option<ReductionTree>,
}

impl ArnoldiProcess {
    /// A process for at most `capacity` steps per cycle.
    pub fn new(machine: &Machine, alg: AlgebraSpec, strategy: OrthoStrategy, capacity: usize) -> Result<Self, CommError> {
        strategy.validate()?;
        if capacity == 0 {
            return Err(CommError::Mismatch("Arnoldi capacity must be positive".into()));
        }
        let tree = match strategy {
            OrthoStrategy::Localized => Some(ReductionTree::new(machine.world(), alg, capacity + 1)?),
            _ => None,
        };
        Ok(Self { strategy, capacity, basis: ArnoldiBasis::with_capacity(alg, capacity), tree })
    }

    pub fn strategy(&self) -> OrthoStrategy {
        self.strategy
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn basis(&self) -> &ArnoldiBasis {
        &self.basis
    }

    /// Starts a cycle: `V⁰ σ⁰ = r0`. Returns `σ⁰`.
    pub fn start(&mut self, machine: &mut Machine, r0: &BlockVector) -> Result<SElement, CommError> {
        self.basis.clear();
        let alg = self.basis.alg;
        let (v0, sigma) = match &mut self.tree {
            Some(tree) => {
                tree.reset();
                let (v, rho) = tree.push(machine, r0)?;
                (v, rho.into_iter().next().expect("first push yields one coefficient"))
            }
            None => {
                let mut v = r0.clone();
                let sigma = machine.normalize(&mut v, &alg)?;
                (v, sigma)
            }
        };
        self.basis.vectors.push(v0);
        self.basis.rhs.push(sigma.clone());
        Ok(sigma)
    }

    /// Orthonormalizes `w` against the basis and appends the result without
    /// touching the Hessenberg matrix. Returns `η_{0} … η_{k}, γ`.
    pub fn extend(&mut self, machine: &mut Machine, w: &BlockVector) -> Result<Vec<SElement>, CommError> {
        if self.basis.vectors.is_empty() {
            return Err(CommError::Mismatch("Arnoldi process has not been started".into()));
        }
        if self.basis.vectors.len() > self.capacity {
            return Err(CommError::Mismatch(format!("Arnoldi basis is full at {} vectors", self.capacity + 1)));
        }
        let alg = self.basis.alg;
        let (v, coeffs) = match (&mut self.tree, self.strategy) {
            (Some(tree), _) => tree.push(machine, w)?,
            (None, strategy) => {
                let mut w = w.clone();
                let mut coeffs = match strategy {
                    OrthoStrategy::Modified => modified(machine, &self.basis.vectors, &mut w, &alg)?,
                    OrthoStrategy::Classical(it) => classical(machine, &self.basis.vectors, &mut w, &alg, it)?,
                    OrthoStrategy::Pipelined(r) => pipelined(machine, &self.basis.vectors, &mut w, &alg, r)?,
                    OrthoStrategy::Localized => unreachable!("localized strategy always owns a tree"),
                };
                coeffs.push(machine.normalize(&mut w, &alg)?);
                (w, coeffs)
            }
        };
        if coeffs.iter().any(|c| !c.is_finite()) || !v.is_finite() {
            return Err(CommError::NonFinite("the Arnoldi basis".into()));
        }
        let scale = coeffs.iter().map(|c| c.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        let gamma = coeffs.last().expect("coefficients end with the normalizer");
        if gamma.diagonal().iter().any(|d| d.abs() <= RANK_DEFICIENCY_FACTOR * f64::EPSILON * scale) {
            self.basis.rank_deficient_steps += 1;
        }
        self.basis.vectors.push(v);
        Ok(coeffs)
    }

    /// One Arnoldi step on `M⁻¹A`: orthonormalizes `M⁻¹A Vᵏ`, stores the
    /// Hessenberg column and triangulates it.
    pub fn step(&mut self, machine: &mut Machine, a: &dyn Operator, m: &Preconditioner) -> Result<(), CommError> {
        let last = self.basis.vectors.last().ok_or_else(|| CommError::Mismatch("Arnoldi process has not been started".into()))?;
        let mut av = BlockVector::zeros(last.n(), last.s());
        machine.bop(a, last, &mut av)?;
        let mut w = BlockVector::zeros(last.n(), last.s());
        machine.precond(m, &av, &mut w)?;
        let column = self.extend(machine, &w)?;
        self.basis.hessenberg.push(column.clone());
        let mut column = column;
        block_givens_update(&mut column, &mut self.basis.rotations, &mut self.basis.rhs);
        self.basis.triangular.push(column);
        Ok(())
    }
}

fn element(gram: &GroupGram, alg: &AlgebraSpec) -> SElement {
    gram.to_element(alg)
}

fn modified(machine: &mut Machine, basis: &[BlockVector], w: &mut BlockVector, alg: &AlgebraSpec) -> Result<Vec<SElement>, CommError> {
    let mut coeffs = Vec::with_capacity(basis.len() + 1);
    for v in basis {
        let h = element(&machine.grams(&[GramRequest::for_algebra(v, w, alg)])?[0], alg);
        machine.baxpy(w, v, &h.scale(-1.0))?;
        coeffs.push(h);
    }
    Ok(coeffs)
}

fn classical(machine: &mut Machine, basis: &[BlockVector], w: &mut BlockVector, alg: &AlgebraSpec, iterations: usize) -> Result<Vec<SElement>, CommError> {
    let mut coeffs = vec![SElement::zeros(*alg); basis.len()];
    for _ in 0..iterations {
        let reqs: Vec<GramRequest<'_>> = basis.iter().map(|v| GramRequest::for_algebra(v, w, alg)).collect();
        let grams = machine.grams(&reqs)?;
        for ((v, g), acc) in basis.iter().zip(&grams).zip(coeffs.iter_mut()) {
            let h = element(g, alg);
            machine.baxpy(w, v, &h.scale(-1.0))?;
            *acc = &*acc + &h;
        }
    }
    Ok(coeffs)
}

/// Projection `j` is started once the projections up to `j − r − 1` have been
/// subtracted, so `r = 0` is modified and `r ≥ k` classical Gram-Schmidt.
fn pipelined(machine: &mut Machine, basis: &[BlockVector], w: &mut BlockVector, alg: &AlgebraSpec, r: usize) -> Result<Vec<SElement>, CommError> {
    let len = basis.len();
    let lookahead = r.clamp(1, (len - 1).max(1));
    let mut queue: VecDeque<FutureHandle<Vec<GroupGram>>> = VecDeque::with_capacity(lookahead + 1);
    for v in basis.iter().take(lookahead + 1) {
        queue.push_back(machine.start_grams(&[GramRequest::for_algebra(v, w, alg)])?);
    }
    let mut coeffs = Vec::with_capacity(len + 1);
    for j in 0..len {
        let handle = queue.pop_front().expect("projection was started");
        let h = element(&machine.wait(handle)?[0], alg);
        machine.baxpy(w, &basis[j], &h.scale(-1.0))?;
        coeffs.push(h);
        if let Some(v) = basis.get(j + lookahead + 1) {
            queue.push_back(machine.start_grams(&[GramRequest::for_algebra(v, w, alg)])?);
        }
    }
    Ok(coeffs)
}

/// Largest `‖⟨Vⁱ, Vʲ⟩ − δᵢⱼ I‖_F` over a basis (computed without
/// instrumentation).
pub fn orthogonality_loss(vectors: &[BlockVector], alg: &AlgebraSpec) -> Result<f64, AlgebraError> {
    let mut worst: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let g = block_inner_product(a, b, alg)?;
            let d = if i == j { g.distance_to_identity() } else { g.frobenius_norm() };
            worst = worst.max(d);
        }
    }
    Ok(worst)
}
