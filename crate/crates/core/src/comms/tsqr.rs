//! Tall-skinny QR over the rank partition: local Householder factorizations,
//! a pairwise tree of `[R_a; R_b]` factorizations, and propagation of the
//! tree's orthogonal factors back to the leaves.

use super::{CommError, CommWorld};
use crate::blocklinalg::BlockVector;
use crate::salgebra::dense::DenseMatrix;
use crate::salgebra::normalize::{local_group_qr, write_group_q};
use crate::salgebra::{AlgebraSpec, SElement};

/// Returns the root `R` and, per leaf, the `p × p` factor that maps its local
/// `Q` to its part of the global `Q`.
fn reduce_tree(rs: &[DenseMatrix]) -> (DenseMatrix, Vec<DenseMatrix>) {
    if rs.len() == 1 {
        return (rs[0].clone(), vec![DenseMatrix::identity(rs[0].cols())]);
    }
    let mid = rs.len() / 2;
    let (ra, ma) = reduce_tree(&rs[..mid]);
    let (rb, mb) = reduce_tree(&rs[mid..]);
    let p = ra.cols();
    let f = ra.vstack(&rb).householder_qr();
    let top = f.q.row_block(0, p);
    let bottom = f.q.row_block(p, 2 * p);
    let mut multipliers: Vec<DenseMatrix> = ma.iter().map(|m| m.matmul(&top)).collect();
    multipliers.extend(mb.iter().map(|m| m.matmul(&bottom)));
    (f.r, multipliers)
}

/// Computes `X = Q·σ` over the partition of `world` without touching the
/// clock or counters. Returns `(Q, σ)`.
pub fn tsqr_factor(world: &CommWorld, x: &BlockVector, alg: &AlgebraSpec) -> Result<(BlockVector, SElement), CommError> {
    if x.s() != alg.s() || x.n() != world.n() {
        return Err(CommError::Mismatch(format!("{}x{} block vector for {alg} on {} rows", x.n(), x.s(), world.n())));
    }
    let p = alg.p();
    let per_rank_rows = |r: usize| world.rows(r).len() * if alg.is_replicated() { alg.q() } else { 1 };
    if let Some(rank) = (0..world.ranks()).find(|&r| per_rank_rows(r) < p) {
        return Err(CommError::LocalRows { rank, rows: world.rows(rank).len(), needed: p });
    }
    let local: Vec<_> = (0..world.ranks()).map(|r| local_group_qr(x, world.rows(r), alg)).collect::<Result<_, _>>()?;
    let distinct = local[0].len();
    let mut q = x.clone();
    let mut r_blocks = Vec::with_capacity(distinct);
    let mut per_rank_q: Vec<Vec<DenseMatrix>> = vec![Vec::with_capacity(distinct); world.ranks()];
    for g in 0..distinct {
        let rs: Vec<DenseMatrix> = local.iter().map(|f| f[g].r.clone()).collect();
        let (root, multipliers) = reduce_tree(&rs);
        for (rank, m) in multipliers.iter().enumerate() {
            per_rank_q[rank].push(local[rank][g].q.matmul(m));
        }
        r_blocks.push(root);
    }
    let (q_scale, r_scale) = if alg.is_replicated() {
        let sq = (alg.q() as f64).sqrt();
        (sq, 1.0 / sq)
    } else {
        (1.0, 1.0)
    };
    for (rank, qs) in per_rank_q.iter().enumerate() {
        write_group_q(&mut q, world.rows(rank), alg, qs, q_scale);
    }
    let r_blocks: Vec<DenseMatrix> = r_blocks.iter().map(|r| DenseMatrix::from_fn(p, p, |i, j| r[(i, j)] * r_scale)).collect();
    Ok((q, SElement::from_group_blocks(*alg, &r_blocks)))
}

/// Local Householder work per rank, in flops.
pub(crate) fn tsqr_local_flops(world: &CommWorld, alg: &AlgebraSpec) -> Vec<u64> {
    let p = alg.p() as u64;
    (0..world.ranks()).map(|r| 4 * world.rows(r).len() as u64 * p * alg.s() as u64).collect()
}

/// Blocking TSQR: overwrites `x` with `Q` and returns `σ`. Costs one
/// reduction on the virtual clock.
pub fn tsqr(world: &mut CommWorld, x: &mut BlockVector, alg: &AlgebraSpec) -> Result<SElement, CommError> {
    let (q, sigma) = tsqr_factor(world, x, alg)?;
    let cost = world.config().cost;
    let local: Vec<f64> = tsqr_local_flops(world, alg).iter().map(|&f| cost.time_us(f, 8 * f / alg.p() as u64)).collect();
    world.advance(&local);
    let latency = world.reduction_latency();
    let handle = world.start_collective((), latency);
    world.wait_get(handle)?;
    world.count_tsqr();
    *x = q;
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::{apply_right, generate_rhs};
    use crate::comms::WorldConfig;
    use crate::salgebra::{block_inner_product, normalize};

    #[test]
    fn matches_single_rank_normalizer() {
        let x = generate_rhs(64, 4, 11);
        for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::block_parallel(4, 2).unwrap(), AlgebraSpec::block_global(4, 2).unwrap()] {
            let (q1, s1) = normalize(&x, &alg).unwrap();
            for ranks in [1, 2, 4, 3] {
                let world = CommWorld::new(WorldConfig::with_ranks(ranks), 64).unwrap();
                let (q, s) = tsqr_factor(&world, &x, &alg).unwrap();
                assert!((&s - &s1).frobenius_norm() < 1e-12 * s1.frobenius_norm(), "{alg} P={ranks}");
                assert!(block_inner_product(&q, &q, &alg).unwrap().distance_to_identity() < 1e-12);
                assert!(apply_right(&q, &s).sub_norm(&x) < 1e-12 * x.frobenius_norm());
                if ranks == 1 {
                    assert_eq!(q, q1);
                }
            }
        }
    }

    #[test]
    fn too_few_local_rows() {
        let world = CommWorld::new(WorldConfig::with_ranks(8), 20).unwrap();
        let x = generate_rhs(20, 4, 1);
        assert!(matches!(tsqr_factor(&world, &x, &AlgebraSpec::block(4).unwrap()), Err(CommError::LocalRows { .. })));
    }
}
