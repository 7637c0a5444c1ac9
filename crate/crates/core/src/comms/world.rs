use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{CommError, WorldConfig};
use crate::salgebra::{GroupGram, SElement, LEAF_SEGMENTS};

/// Collective operation statistics; all counts are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommCounters {
    pub reductions_started: u64,
    pub reductions_waited: u64,
    /// Collective operations of any kind.
    pub messages: u64,
    /// Waited reductions that had registered work between start and wait.
    pub overlapped_reductions: u64,
    pub tsqr: u64,
    pub tree_reductions: u64,
    pub backprops: u64,
    pub broadcasts: u64,
    /// Largest number of simultaneously pending reductions.
    pub max_in_flight: u64,
}

impl CommCounters {
    /// Field-wise `self − earlier`; `max_in_flight` is kept from `self`.
    pub fn since(&self, earlier: &CommCounters) -> CommCounters {
        CommCounters {
            reductions_started: self.reductions_started - earlier.reductions_started,
            reductions_waited: self.reductions_waited - earlier.reductions_waited,
            messages: self.messages - earlier.messages,
            overlapped_reductions: self.overlapped_reductions - earlier.overlapped_reductions,
            tsqr: self.tsqr - earlier.tsqr,
            tree_reductions: self.tree_reductions - earlier.tree_reductions,
            backprops: self.backprops - earlier.backprops,
            broadcasts: self.broadcasts - earlier.broadcasts,
            max_in_flight: self.max_in_flight,
        }
    }
}

/// Payloads that can be summed across ranks.
pub trait Reducible: Clone {
    fn compatible(&self, other: &Self) -> bool;
    fn combine(&mut self, other: &Self);
}

impl Reducible for f64 {
    fn compatible(&self, _: &Self) -> bool {
        true
    }
    fn combine(&mut self, other: &Self) {
        *self += other;
    }
}

impl Reducible for GroupGram {
    fn compatible(&self, other: &Self) -> bool {
        self.layout() == other.layout()
    }
    fn combine(&mut self, other: &Self) {
        self.accumulate(other);
    }
}

impl Reducible for SElement {
    fn compatible(&self, other: &Self) -> bool {
        self.algebra() == other.algebra()
    }
    fn combine(&mut self, other: &Self) {
        *self = &*self + other;
    }
}

impl<T: Reducible> Reducible for Vec<T> {
    fn compatible(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.compatible(b))
    }
    fn combine(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.combine(b);
        }
    }
}

/// Lifecycle of a future.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FutureState {
    Pending,
    Ready,
    Consumed,
}

/// Result of a non-blocking collective. The payload becomes readable after
/// [`CommWorld::wait`] and can be taken exactly once.
#[derive(Debug)]
pub struct FutureHandle<T> {
    id: u64,
    state: FutureState,
    payload: Option<T>,
    start_time: f64,
    completion_time: f64,
}

impl<T> FutureHandle<T> {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn state(&self) -> FutureState {
        self.state
    }

    /// Latest start time over all ranks, in µs.
    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn completion_time(&self) -> f64 {
        self.completion_time
    }

    pub fn get(&mut self) -> Result<T, CommError> {
        match self.state {
            FutureState::Pending => Err(CommError::NotReady(self.id)),
            FutureState::Consumed => Err(CommError::Consumed(self.id)),
            FutureState::Ready => {
                self.state = FutureState::Consumed;
                Ok(self.payload.take().expect("ready futures hold a payload"))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    completion: f64,
    duration: f64,
    overlapped: bool,
}

/// Lockstep simulation of `P` ranks: a row partition, one virtual clock per
/// rank and the collectives issued so far.
#[derive(Clone, Debug)]
pub struct CommWorld {
    config: WorldConfig,
    n: usize,
    partition: Vec<Range<usize>>,
    clocks: Vec<f64>,
    counters: CommCounters,
    next_id: u64,
    pending: BTreeMap<u64, Pending>,
}

impl CommWorld {
    /// Partitions `n` rows: rank `r` owns `⌊rn/P⌋..⌊(r+1)n/P⌋`.
    pub fn new(config: WorldConfig, n: usize) -> Result<Self, CommError> {
        let p = config.ranks;
        if p == 0 {
            return Err(CommError::Config("at least one rank is required".into()));
        }
        let bound = |r: usize| ((r as u128 * n as u128) / p as u128) as usize;
        let partition = (0..p).map(|r| bound(r)..bound(r + 1)).collect();
        Ok(Self { config, n, partition, clocks: vec![0.0; p], counters: CommCounters::default(), next_id: 0, pending: BTreeMap::new() })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn ranks(&self) -> usize {
        self.config.ranks
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self, rank: usize) -> Range<usize> {
        self.partition[rank].clone()
    }

    pub fn partition(&self) -> &[Range<usize>] {
        &self.partition
    }

    /// True when every rank owns a whole subtree of the inner-product
    /// reduction tree, which makes reductions bit-identical to one rank.
    pub fn leaf_aligned(&self) -> bool {
        LEAF_SEGMENTS % self.ranks() == 0
    }

    /// Leaf segments owned by `rank` when [`Self::leaf_aligned`].
    pub fn leaves(&self, rank: usize) -> Range<usize> {
        let per = LEAF_SEGMENTS / self.ranks();
        rank * per..(rank + 1) * per
    }

    pub fn clock(&self, rank: usize) -> f64 {
        self.clocks[rank]
    }

    /// Latest clock over all ranks.
    pub fn time(&self) -> f64 {
        self.clocks.iter().copied().fold(0.0, f64::max)
    }

    pub fn counters(&self) -> CommCounters {
        self.counters
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    /// `t_red(P)` of the configured latency model.
    pub fn reduction_latency(&self) -> f64 {
        self.config.latency.t_red(self.ranks())
    }

    /// Advances each rank's clock by its share of local work. Pending
    /// reductions become overlapped when any work is registered.
    pub fn advance(&mut self, per_rank_us: &[f64]) {
        assert_eq!(per_rank_us.len(), self.ranks(), "one duration per rank");
        let mut any = false;
        for (c, d) in self.clocks.iter_mut().zip(per_rank_us) {
            if *d > 0.0 {
                *c += d;
                any = true;
            }
        }
        if any {
            for p in self.pending.values_mut() {
                p.overlapped = true;
            }
        }
    }

    /// Advances all ranks by the same duration.
    pub fn advance_all(&mut self, us: f64) {
        let v = vec![us; self.ranks()];
        self.advance(&v);
    }

    /// Pairwise sum over ranks in rank order.
    pub fn tree_sum<T: Reducible>(parts: &[T]) -> T {
        fn go<T: Reducible>(parts: &[T]) -> T {
            if parts.len() == 1 {
                return parts[0].clone();
            }
            let mid = parts.len() / 2;
            let mut a = go(&parts[..mid]);
            a.combine(&go(&parts[mid..]));
            a
        }
        go(parts)
    }

    fn register<T>(&mut self, payload: T, duration: f64) -> FutureHandle<T> {
        let start = self.time_of_latest_start();
        let completion = start + duration;
        let id = self.next_id;
        self.next_id += 1;
        self.pending.insert(id, Pending { completion, duration, overlapped: false });
        self.counters.max_in_flight = self.counters.max_in_flight.max(self.pending.len() as u64);
        FutureHandle { id, state: FutureState::Pending, payload: Some(payload), start_time: start, completion_time: completion }
    }

    fn time_of_latest_start(&self) -> f64 {
        self.time()
    }

    /// Starts an allreduce over one contribution per rank.
    pub fn iallreduce<T: Reducible>(&mut self, contributions: Vec<T>) -> Result<FutureHandle<T>, CommError> {
        if contributions.len() != self.ranks() {
            return Err(CommError::Deadlock { expected: self.ranks(), got: contributions.len() });
        }
        if contributions.iter().any(|c| !c.compatible(&contributions[0])) {
            return Err(CommError::Mismatch("contributions differ in shape or algebra".into()));
        }
        let sum = Self::tree_sum(&contributions);
        self.counters.reductions_started += 1;
        self.counters.messages += 1;
        let latency = self.reduction_latency();
        Ok(self.register(sum, latency))
    }

    /// Starts a collective whose result `payload` was computed by the caller
    /// (for example a TSQR), costing `duration` µs of latency.
    pub fn start_collective<T>(&mut self, payload: T, duration: f64) -> FutureHandle<T> {
        self.counters.reductions_started += 1;
        self.counters.messages += 1;
        self.register(payload, duration)
    }

    /// Blocks every rank until the collective completes.
    ///
    /// A reduction with registered work since its start only charges the
    /// non-overlapped fraction `(1 − f)` of its latency after the wait.
    pub fn wait<T>(&mut self, handle: &mut FutureHandle<T>) -> Result<(), CommError> {
        match handle.state {
            FutureState::Ready => return Ok(()),
            FutureState::Consumed => return Err(CommError::Consumed(handle.id)),
            FutureState::Pending => {}
        }
        let p = self.pending.remove(&handle.id).ok_or(CommError::UnknownFuture(handle.id))?;
        let residual = if p.overlapped { (1.0 - self.config.overlap.fraction()) * p.duration } else { 0.0 };
        for c in &mut self.clocks {
            *c = (*c + residual).max(p.completion);
        }
        self.counters.reductions_waited += 1;
        if p.overlapped {
            self.counters.overlapped_reductions += 1;
        }
        handle.state = FutureState::Ready;
        Ok(())
    }

    /// [`Self::wait`] followed by [`FutureHandle::get`].
    pub fn wait_get<T>(&mut self, mut handle: FutureHandle<T>) -> Result<T, CommError> {
        self.wait(&mut handle)?;
        handle.get()
    }

    /// Blocking up-sweep of the localized reduction tree.
    pub(crate) fn tree_reduction(&mut self) {
        self.counters.tree_reductions += 1;
        self.counters.messages += 1;
        self.blocking(0.5 * self.reduction_latency());
    }

    /// Back-propagation down the tree with the concurrent broadcast of the
    /// root factor.
    pub(crate) fn backprop_and_broadcast(&mut self) {
        self.counters.backprops += 1;
        self.counters.broadcasts += 1;
        self.counters.messages += 2;
        self.blocking(0.5 * self.reduction_latency());
    }

    pub(crate) fn count_tsqr(&mut self) {
        self.counters.tsqr += 1;
    }

    fn blocking(&mut self, duration: f64) {
        let t = self.time() + duration;
        for c in &mut self.clocks {
            *c = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{LatencyModel, OverlapPolicy};

    fn world(ranks: usize) -> CommWorld {
        CommWorld::new(WorldConfig { ranks, ..WorldConfig::default() }, 100).unwrap()
    }

    #[test]
    fn partition_tiles_rows() {
        let w = world(3);
        assert_eq!(w.partition(), &[0..33, 33..66, 66..100]);
    }

    #[test]
    fn single_rank_is_free_and_exact() {
        let mut w = world(1);
        let h = w.iallreduce(vec![2.5]).unwrap();
        assert_eq!(w.wait_get(h).unwrap(), 2.5);
        assert_eq!(w.time(), 0.0);
    }

    #[test]
    fn latency_and_overlap() {
        let mut w = world(16);
        let h = w.iallreduce(vec![1.0; 16]).unwrap();
        assert_eq!(h.completion_time() - h.start_time(), 8.0);
        assert_eq!(w.wait_get(h).unwrap(), 16.0);
        assert_eq!(w.time(), 8.0);
        let h = w.iallreduce(vec![1.0; 16]).unwrap();
        w.advance_all(3.0);
        w.wait_get(h).unwrap();
        assert_eq!(w.time(), 16.0);
        assert_eq!(w.counters().overlapped_reductions, 1);
        let mut none = CommWorld::new(WorldConfig { ranks: 16, overlap: OverlapPolicy::None, latency: LatencyModel::default(), ..WorldConfig::default() }, 10).unwrap();
        let h = none.iallreduce(vec![0.0; 16]).unwrap();
        none.advance_all(3.0);
        none.wait_get(h).unwrap();
        assert_eq!(none.time(), 11.0);
    }

    #[test]
    fn futures_are_consumed_once() {
        let mut w = world(2);
        let mut h = w.iallreduce(vec![1.0, 2.0]).unwrap();
        assert_eq!(h.get(), Err(CommError::NotReady(0)));
        w.wait(&mut h).unwrap();
        assert_eq!(h.get(), Ok(3.0));
        assert_eq!(h.get(), Err(CommError::Consumed(0)));
    }

    #[test]
    fn missing_contribution_is_a_deadlock() {
        let mut w = world(4);
        assert_eq!(w.iallreduce(vec![1.0; 3]).unwrap_err(), CommError::Deadlock { expected: 4, got: 3 });
        assert!(w.iallreduce(vec![vec![1.0], vec![1.0], vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
