use rayon::prelude::*;

use super::{tsqr, CommError, CommWorld, FutureHandle, WorldConfig};
use crate::blocklinalg::{self, BlockVector, KernelCounters, Operator, Preconditioner};
use crate::salgebra::{AlgebraSpec, GramLayout, GroupGram, SElement, LEAF_SEGMENTS};

/// One block inner product of a fused reduction: the group Gram of `x` and
/// `y` with `width`-column groups.
#[derive(Clone, Copy, Debug)]
pub struct GramRequest<'a> {
    pub x: &'a BlockVector,
    pub y: &'a BlockVector,
    pub width: usize,
}

impl<'a> GramRequest<'a> {
    pub fn new(x: &'a BlockVector, y: &'a BlockVector, width: usize) -> Self {
        Self { x, y, width }
    }

    /// Groups of `alg`.
    pub fn for_algebra(x: &'a BlockVector, y: &'a BlockVector, alg: &AlgebraSpec) -> Self {
        Self { x, y, width: alg.p() }
    }
}

/// Kernel execution on a simulated world: every kernel runs on the global
/// data, is counted once in [`KernelCounters`] and charges each rank's clock
/// for its share of the rows.
#[derive(Clone, Debug)]
pub struct Machine {
    world: CommWorld,
    kernels: KernelCounters,
}

const WORD: u64 = 8;

impl Machine {
    pub fn new(config: WorldConfig, n: usize) -> Result<Self, CommError> {
        Ok(Self { world: CommWorld::new(config, n)?, kernels: KernelCounters::default() })
    }

    /// One rank, no latency and no compute cost.
    pub fn serial(n: usize) -> Self {
        let config = WorldConfig { cost: super::CostModel::free(), ..WorldConfig::default() };
        Self::new(config, n).expect("one rank is always valid")
    }

    pub fn world(&self) -> &CommWorld {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut CommWorld {
        &mut self.world
    }

    pub fn kernels(&self) -> KernelCounters {
        self.kernels
    }

    pub(crate) fn kernels_mut(&mut self) -> &mut KernelCounters {
        &mut self.kernels
    }

    /// Charges every rank `rows · (flops, bytes)` per owned row.
    pub(crate) fn charge_rows(&mut self, flops_per_row: u64, bytes_per_row: u64) {
        self.charge(|nr| (nr as u64 * flops_per_row, nr as u64 * bytes_per_row));
    }

    pub fn time(&self) -> f64 {
        self.world.time()
    }

    /// Charges every rank `cost(rows owned)` as `(flops, bytes)`.
    fn charge(&mut self, cost: impl Fn(usize) -> (u64, u64)) {
        let model = self.world.config().cost;
        let times: Vec<f64> = (0..self.world.ranks())
            .map(|r| {
                let (f, b) = cost(self.world.rows(r).len());
                model.time_us(f, b)
            })
            .collect();
        self.world.advance(&times);
    }

    /// Charges explicit per-rank flop counts of coefficient arithmetic.
    pub fn charge_flops(&mut self, per_rank: &[u64]) {
        let model = self.world.config().cost;
        let times: Vec<f64> = per_rank.iter().map(|&f| model.time_us(f, 0)).collect();
        self.world.advance(&times);
    }

    fn charge_vector_kernel(&mut self, s: usize, p: usize, words_per_entry: u64) {
        let (s, p) = (s as u64, p as u64);
        self.charge(|nr| {
            let nr = nr as u64;
            (2 * nr * p * s, WORD * words_per_entry * nr * s)
        });
    }

    /// `y ← A·x`.
    pub fn bop(&mut self, a: &dyn Operator, x: &BlockVector, y: &mut BlockVector) -> Result<(), CommError> {
        blocklinalg::bop_into(a, x, y, &mut self.kernels)?;
        let s = x.s() as u64;
        let model = self.world.config().cost;
        let times: Vec<f64> = (0..self.world.ranks())
            .map(|r| {
                let rows = self.world.rows(r);
                let z = a.nnz_in_rows(rows.clone()) as u64;
                let nr = rows.len() as u64;
                model.time_us(2 * s * z, WORD * (2 * z + 2 * s * nr))
            })
            .collect();
        self.world.advance(&times);
        Ok(())
    }

    /// `y ← M⁻¹ x`; the cost is split across ranks by row share.
    pub fn precond(&mut self, m: &Preconditioner, x: &BlockVector, y: &mut BlockVector) -> Result<(), CommError> {
        let before = self.kernels;
        m.apply_into(x, y, &mut self.kernels)?;
        let flops = self.kernels.flops - before.flops;
        let bytes = (self.kernels.bytes_loaded + self.kernels.bytes_stored) - (before.bytes_loaded + before.bytes_stored);
        let n = x.n().max(1) as u64;
        self.charge(|nr| (flops * nr as u64 / n, bytes * nr as u64 / n));
        Ok(())
    }

    /// `y ← y + x·c`.
    pub fn baxpy(&mut self, y: &mut BlockVector, x: &BlockVector, c: &SElement) -> Result<(), CommError> {
        blocklinalg::baxpy(y, x, c, &mut self.kernels)?;
        self.charge_vector_kernel(x.s(), c.algebra().p(), 3);
        Ok(())
    }

    /// `y ← x + y·c`.
    pub fn xpby(&mut self, y: &mut BlockVector, x: &BlockVector, c: &SElement) -> Result<(), CommError> {
        blocklinalg::xpby(y, x, c, &mut self.kernels)?;
        self.charge_vector_kernel(x.s(), c.algebra().p(), 3);
        Ok(())
    }

    /// `y ← y·c`.
    pub fn scale_right(&mut self, y: &mut BlockVector, c: &SElement) -> Result<(), CommError> {
        blocklinalg::scale_right(y, c, &mut self.kernels)?;
        self.charge_vector_kernel(y.s(), c.algebra().p(), 3);
        Ok(())
    }

    /// `y ← y + α·x`.
    pub fn axpy(&mut self, y: &mut BlockVector, alpha: f64, x: &BlockVector) -> Result<(), CommError> {
        blocklinalg::axpy_scalar(y, alpha, x, &mut self.kernels)?;
        self.charge_vector_kernel(x.s(), 1, 3);
        Ok(())
    }

    /// `y ← x + α·y`.
    pub fn xpay(&mut self, y: &mut BlockVector, x: &BlockVector, alpha: f64) -> Result<(), CommError> {
        blocklinalg::xpby_scalar(y, x, alpha, &mut self.kernels)?;
        self.charge_vector_kernel(x.s(), 1, 3);
        Ok(())
    }

    fn partial(world: &CommWorld, rank: usize, req: &GramRequest<'_>) -> GroupGram {
        let layout = GramLayout::new(req.x.s(), req.width);
        if world.leaf_aligned() {
            GroupGram::over_leaves(req.x, req.y, layout, world.leaves(rank))
        } else {
            GroupGram::over_rows(req.x, req.y, layout, world.rows(rank), (LEAF_SEGMENTS / world.ranks()).max(1))
        }
    }

    /// Starts one fused reduction carrying all requested Grams.
    pub fn start_grams(&mut self, reqs: &[GramRequest<'_>]) -> Result<FutureHandle<Vec<GroupGram>>, CommError> {
        for r in reqs {
            if r.x.n() != self.world.n() || r.y.n() != self.world.n() || r.x.s() != r.y.s() || r.width == 0 || r.x.s() % r.width != 0 {
                return Err(CommError::Mismatch(format!("Gram request {}x{} / {}x{} width {}", r.x.n(), r.x.s(), r.y.n(), r.y.s(), r.width)));
            }
        }
        let world = &self.world;
        let contributions: Vec<Vec<GroupGram>> = (0..world.ranks())
            .into_par_iter()
            .map(|rank| reqs.iter().map(|req| Self::partial(world, rank, req)).collect())
            .collect();
        for r in reqs {
            self.kernels.record_bdot(r.x.n(), r.x.s(), r.width);
            let (s, p) = (r.x.s() as u64, r.width as u64);
            self.charge(|nr| {
                let nr = nr as u64;
                (2 * nr * p * s, WORD * 2 * nr * s)
            });
        }
        self.world.iallreduce(contributions)
    }

    pub fn wait<T>(&mut self, handle: FutureHandle<T>) -> Result<T, CommError> {
        self.world.wait_get(handle)
    }

    /// Blocking fused reduction.
    pub fn grams(&mut self, reqs: &[GramRequest<'_>]) -> Result<Vec<GroupGram>, CommError> {
        let h = self.start_grams(reqs)?;
        self.wait(h)
    }

    /// Grams computed outside the instrumented machine (no counters, no
    /// clock), for reporting only.
    pub fn observe_grams(&self, reqs: &[GramRequest<'_>]) -> Vec<GroupGram> {
        reqs.iter().map(|r| GroupGram::full(r.x, r.y, GramLayout::new(r.x.s(), r.width))).collect()
    }

    /// Blocking distributed normalization (TSQR): `x ← Q`, returns `σ`.
    pub fn normalize(&mut self, x: &mut BlockVector, alg: &AlgebraSpec) -> Result<SElement, CommError> {
        let sigma = tsqr::tsqr(&mut self.world, x, alg)?;
        self.kernels.record_bdot(x.n(), x.s(), alg.p());
        self.kernels.record_baxpy(x.n(), x.s(), alg.p());
        Ok(sigma)
    }

    /// Non-blocking normalization: the future carries `(Q, σ)`.
    pub fn inormalize(&mut self, x: &BlockVector, alg: &AlgebraSpec) -> Result<FutureHandle<(BlockVector, SElement)>, CommError> {
        let result = tsqr::tsqr_factor(&self.world, x, alg)?;
        let cost = self.world.config().cost;
        let local: Vec<f64> = tsqr::tsqr_local_flops(&self.world, alg).iter().map(|&f| cost.time_us(f, 8 * f / alg.p() as u64)).collect();
        self.world.advance(&local);
        self.kernels.record_bdot(x.n(), x.s(), alg.p());
        self.kernels.record_baxpy(x.n(), x.s(), alg.p());
        let latency = self.world.reduction_latency();
        let handle = self.world.start_collective(result, latency);
        self.world.count_tsqr();
        Ok(handle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklinalg::generate_rhs;

    #[test]
    fn aligned_partitions_reproduce_single_rank_bits() {
        let n = 1000;
        let x = generate_rhs(n, 4, 1);
        let y = generate_rhs(n, 4, 2);
        let reference = Machine::serial(n).grams(&[GramRequest::new(&x, &y, 2)]).unwrap();
        for ranks in [2, 4, 8, 16] {
            let mut m = Machine::new(WorldConfig::with_ranks(ranks), n).unwrap();
            assert_eq!(m.grams(&[GramRequest::new(&x, &y, 2)]).unwrap(), reference, "P = {ranks}");
        }
        let mut odd = Machine::new(WorldConfig::with_ranks(3), n).unwrap();
        let g = odd.grams(&[GramRequest::new(&x, &y, 2)]).unwrap();
        for (a, b) in g[0].as_slice().iter().zip(reference[0].as_slice()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn fused_reduction_is_one_sync() {
        let n = 64;
        let x = generate_rhs(n, 2, 1);
        let mut m = Machine::new(WorldConfig::with_ranks(4), n).unwrap();
        m.grams(&[GramRequest::new(&x, &x, 1), GramRequest::new(&x, &x, 2)]).unwrap();
        assert_eq!(m.world().counters().reductions_waited, 1);
        assert_eq!(m.kernels().bdot_calls, 2);
    }
}
