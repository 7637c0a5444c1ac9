//! Localized orthogonalization tree.
//!
//! Every rank keeps a basis of its own rows that is orthonormal under the
//! local inner product. A new block vector is orthogonalized locally, and only
//! the small coefficient vectors travel up a binary tree over ranks. Each
//! interior node orthogonalizes the concatenated coefficient vectors of its
//! children against its own coefficient basis. The root's coefficients are the
//! new Hessenberg column; the new global basis vector is recovered by pushing
//! the root's unit coefficient vector back down the tree.

use rayon::prelude::*;

use super::{CommError, CommWorld, Machine};
use crate::blocklinalg::{BlockVector, KernelCounters};
use crate::salgebra::{block_inner_product, coefficient_qr, normalize, AlgebraSpec, SElement};

enum Node {
    Leaf(usize),
    Inner {
        children: Vec<Node>,
        /// `basis[i][c]`: coefficients of basis entry `i` on child `c`.
        basis: Vec<Vec<Vec<SElement>>>,
    },
}

impl Node {
    fn build(lo: usize, hi: usize, root: bool) -> Self {
        if hi - lo == 1 {
            return if root { Node::Inner { children: vec![Node::Leaf(lo)], basis: Vec::new() } } else { Node::Leaf(lo) };
        }
        let mid = (lo + hi) / 2;
        Node::Inner { children: vec![Node::build(lo, mid, false), Node::build(mid, hi, false)], basis: Vec::new() }
    }

    fn clear(&mut self) {
        if let Node::Inner { children, basis } = self {
            basis.clear();
            children.iter_mut().for_each(Node::clear);
        }
    }

    /// Up-sweep; `leaf_coeffs` are consumed. Returns this node's coefficients
    /// of the new vector on its (grown) basis.
    fn reduce(&mut self, leaf_coeffs: &mut [Option<Vec<SElement>>]) -> Vec<SElement> {
        let (children, basis) = match self {
            Node::Leaf(rank) => return leaf_coeffs[*rank].take().expect("each leaf reduces once"),
            Node::Inner { children, basis } => (children, basis),
        };
        let mut parts: Vec<Vec<SElement>> = children.iter_mut().map(|c| c.reduce(leaf_coeffs)).collect();
        let alg = parts[0][0].algebra();
        let mut rho = Vec::with_capacity(basis.len() + 1);
        for entry in basis.iter() {
            let mut r = SElement::zeros(alg);
            for (c, part) in parts.iter().enumerate() {
                for (b, z) in entry[c].iter().zip(part) {
                    r = &r + &b.transpose().multiply(z);
                }
            }
            for (c, part) in parts.iter_mut().enumerate() {
                for (b, z) in entry[c].iter().zip(part.iter_mut()) {
                    *z = &*z - &b.multiply(&r);
                }
            }
            rho.push(r);
        }
        let flat: Vec<SElement> = parts.iter().flatten().cloned().collect();
        let (q, last) = coefficient_qr(&flat);
        let mut split = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for part in &parts {
            split.push(q[offset..offset + part.len()].to_vec());
            offset += part.len();
        }
        basis.push(split);
        rho.push(last);
        rho
    }

    /// Down-sweep of the coefficient vector `coeffs` on this node's basis.
    fn backprop(&self, coeffs: &[SElement], out: &mut [Option<Vec<SElement>>]) {
        match self {
            Node::Leaf(rank) => out[*rank] = Some(coeffs.to_vec()),
            Node::Inner { children, basis } => {
                for (c, child) in children.iter().enumerate() {
                    let len = basis.last().map_or(0, |e| e[c].len());
                    let alg = coeffs[0].algebra();
                    let mut child_coeffs = vec![SElement::zeros(alg); len];
                    for (entry, weight) in basis.iter().zip(coeffs) {
                        for (acc, b) in child_coeffs.iter_mut().zip(&entry[c]) {
                            *acc = &*acc + &b.multiply(weight);
                        }
                    }
                    child.backprop(&child_coeffs, out);
                }
            }
        }
    }
}

/// Localized block Arnoldi orthogonalization over the ranks of a world.
pub struct ReductionTree {
    alg: AlgebraSpec,
    capacity: usize,
    local_bases: Vec<Vec<BlockVector>>,
    root: Node,
    len: usize,
}

impl ReductionTree {
    /// A tree holding at most `capacity` basis vectors. Every rank must own
    /// enough rows for `capacity` locally orthonormal blocks.
    pub fn new(world: &CommWorld, alg: AlgebraSpec, capacity: usize) -> Result<Self, CommError> {
        let per_row = if alg.is_replicated() { alg.q() } else { 1 };
        let needed = capacity * alg.p();
        for rank in 0..world.ranks() {
            let rows = world.rows(rank).len();
            if rows * per_row < needed {
                return Err(CommError::LocalRows { rank, rows, needed: needed.div_ceil(per_row) });
            }
        }
        Ok(Self { alg, capacity, local_bases: vec![Vec::new(); world.ranks()], root: Node::build(0, world.ranks(), true), len: 0 })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Drops all basis vectors (restart).
    pub fn reset(&mut self) {
        self.local_bases.iter_mut().for_each(Vec::clear);
        self.root.clear();
        self.len = 0;
    }

    /// Orthonormalizes `w` against the current basis and appends the result.
    /// Returns the new global basis vector and the coefficients `ρ₀..ρ_k`
    /// with `w = Σ V^i ρ_i`. Costs one tree reduction and one
    /// back-propagation with broadcast.
    pub fn push(&mut self, machine: &mut Machine, w: &BlockVector) -> Result<(BlockVector, Vec<SElement>), CommError> {
        if self.len == self.capacity {
            return Err(CommError::TreeState(format!("basis is full at {} vectors", self.capacity)));
        }
        let alg = self.alg;
        if w.s() != alg.s() || w.n() != machine.world().n() {
            return Err(CommError::Mismatch(format!("{}x{} block vector for {alg}", w.n(), w.s())));
        }
        let partition = machine.world().partition().to_vec();
        let local: Vec<(BlockVector, Vec<SElement>)> = self
            .local_bases
            .par_iter()
            .zip(partition.par_iter())
            .map(|(basis, rows)| {
                let mut part = w.slice_rows(rows.clone());
                let mut taus = Vec::with_capacity(basis.len() + 1);
                let mut scratch = KernelCounters::default();
                for b in basis {
                    let tau = block_inner_product(b, &part, &alg)?;
                    crate::blocklinalg::baxpy(&mut part, b, &tau.scale(-1.0), &mut scratch)?;
                    taus.push(tau);
                }
                let (q, last) = normalize(&part, &alg)?;
                taus.push(last);
                Ok((q, taus))
            })
            .collect::<Result<_, CommError>>()?;

        let k = self.len;
        let (n, s, p) = (w.n(), alg.s(), alg.p());
        for _ in 0..=k {
            machine.kernels_mut().record_bdot(n, s, p);
            machine.kernels_mut().record_baxpy(n, s, p);
        }
        machine.charge_rows((2 * k + 2) as u64 * 2 * (p * s) as u64, (5 * k + 5) as u64 * 8 * s as u64);

        let mut coeffs: Vec<Option<Vec<SElement>>> = Vec::with_capacity(local.len());
        for (rank, (q, taus)) in local.into_iter().enumerate() {
            self.local_bases[rank].push(q);
            coeffs.push(Some(taus));
        }
        let rho = self.root.reduce(&mut coeffs);
        machine.world_mut().tree_reduction();

        let mut unit = vec![SElement::zeros(alg); k + 1];
        unit[k] = SElement::identity(alg);
        let mut down: Vec<Option<Vec<SElement>>> = vec![None; self.local_bases.len()];
        self.root.backprop(&unit, &mut down);
        let mut v = BlockVector::zeros(n, s);
        for (rank, zeta) in down.into_iter().enumerate() {
            let zeta = zeta.ok_or_else(|| CommError::TreeState(format!("rank {rank} received no coefficients")))?;
            let basis = &self.local_bases[rank];
            let mut part = BlockVector::zeros(basis[0].n(), s);
            let mut scratch = KernelCounters::default();
            for (b, z) in basis.iter().zip(&zeta) {
                crate::blocklinalg::baxpy(&mut part, b, z, &mut scratch)?;
            }
            v.write_rows(partition[rank].start, &part);
        }
        for _ in 0..=k {
            machine.kernels_mut().record_baxpy(n, s, p);
        }
        machine.charge_rows((k + 1) as u64 * 2 * (p * s) as u64, (3 * k + 3) as u64 * 8 * s as u64);
        machine.world_mut().backprop_and_broadcast();
        self.len += 1;
        Ok((v, rho))
    }
}

/// Reconstructs `Σ V^i ρ_i`, used by tests to check the tree's coefficients.
#[cfg(test)]
fn combine(basis: &[BlockVector], rho: &[SElement]) -> BlockVector {
    let mut out = BlockVector::zeros(basis[0].n(), basis[0].s());
    for (v, r) in basis.iter().zip(rho) {
        let t = crate::blocklinalg::apply_right(v, r);
        for (o, x) in out.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *o += x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::generate_rhs;
    use crate::comms::WorldConfig;

    fn run(ranks: usize, alg: AlgebraSpec) {
        let n = 96;
        let mut machine = Machine::new(WorldConfig::with_ranks(ranks), n).unwrap();
        let mut tree = ReductionTree::new(machine.world(), alg, 4).unwrap();
        let mut basis = Vec::new();
        for seed in 0..4 {
            let w = generate_rhs(n, alg.s(), seed);
            let (v, rho) = tree.push(&mut machine, &w).unwrap();
            basis.push(v);
            assert_eq!(rho.len(), basis.len());
            assert!(combine(&basis, &rho).sub_norm(&w) < 1e-12 * w.frobenius_norm(), "P={ranks} {alg}");
        }
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let g = block_inner_product(a, b, &alg).unwrap();
                let expected = if i == j { SElement::identity(alg) } else { SElement::zeros(alg) };
                assert!((&g - &expected).frobenius_norm() < 1e-12, "P={ranks} {alg} ({i},{j})");
            }
        }
        let c = machine.world().counters();
        assert_eq!((c.tree_reductions, c.backprops, c.broadcasts, c.reductions_started), (4, 4, 4, 0));
        assert!(tree.push(&mut machine, &basis[0]).is_err());
    }

    #[test]
    fn orthonormal_basis_and_exact_coefficients() {
        for ranks in [1, 2, 3, 4] {
            run(ranks, AlgebraSpec::block(2).unwrap());
            run(ranks, AlgebraSpec::block_parallel(4, 2).unwrap());
            run(ranks, AlgebraSpec::block_global(4, 2).unwrap());
        }
    }

    #[test]
    fn rejects_small_local_blocks() {
        let world = CommWorld::new(WorldConfig::with_ranks(8), 40).unwrap();
        assert!(matches!(ReductionTree::new(&world, AlgebraSpec::block(2).unwrap(), 4), Err(CommError::LocalRows { .. })));
    }
}
