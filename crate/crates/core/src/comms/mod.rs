//! Simulated SPMD machine: row partition, non-blocking collectives with a
//! virtual clock, TSQR, the localized reduction tree and the overlap
//! benchmark.
//!
//! Ranks execute in lockstep inside one process. Every collective receives
//! one contribution per rank, so a missing participant surfaces as an error
//! instead of a hang.

mod machine;
mod overlap;
mod tree;
mod tsqr;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocklinalg::LinalgError;
use crate::salgebra::AlgebraError;

pub use machine::{GramRequest, Machine};
pub use overlap::{overlap_benchmark, OverlapReport};
pub use tree::ReductionTree;
pub use tsqr::{tsqr, tsqr_factor};
pub use world::{CommCounters, CommWorld, FutureHandle, FutureState, Reducible};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("deadlock: {got} of {expected} ranks joined the collective")]
    Deadlock { expected: usize, got: usize },
    #[error("collective contributions disagree: {0}")]
    Mismatch(String),
    #[error("future {0} is not ready")]
    NotReady(u64),
    #[error("future {0} was already consumed")]
    Consumed(u64),
    #[error("future {0} is unknown to this world")]
    UnknownFuture(u64),
    #[error("rank {rank} owns {rows} rows, needs at least {needed}")]
    LocalRows { rank: usize, rows: usize, needed: usize },
    #[error("reduction tree out of step: {0}")]
    TreeState(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Latency of one global reduction as a function of the rank count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    /// `per_level_us · log₂(P)`.
    Logarithmic { per_level_us: f64 },
    /// Fixed latency for `P > 1`.
    Constant { us: f64 },
    Zero,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::Logarithmic { per_level_us: 2.0 }
    }
}

impl LatencyModel {
    /// `t_red(P)` in µs; always zero for a single rank.
    pub fn t_red(&self, ranks: usize) -> f64 {
        if ranks <= 1 {
            return 0.0;
        }
        match *self {
            Self::Logarithmic { per_level_us } => per_level_us * (ranks as f64).log2(),
            Self::Constant { us } => us,
            Self::Zero => 0.0,
        }
    }

    /// `log`, `log:<µs per level>`, `const:<µs>` or `zero`.
    pub fn parse(text: &str) -> Result<Self, CommError> {
        let t = text.trim().to_ascii_lowercase();
        let bad = || CommError::Config(format!("latency model `{text}`"));
        let mut parts = t.splitn(2, ':');
        match (parts.next().unwrap_or(""), parts.next()) {
            ("log" | "logarithmic", None) => Ok(Self::default()),
            ("log" | "logarithmic", Some(v)) => Ok(Self::Logarithmic { per_level_us: v.parse().map_err(|_| bad())? }),
            ("const" | "constant", Some(v)) => Ok(Self::Constant { us: v.parse().map_err(|_| bad())? }),
            ("zero", None) => Ok(Self::Zero),
            _ => Err(bad()),
        }
    }
}

/// Fraction of a reduction's latency hidden behind work registered between
/// its start and its wait.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverlapPolicy {
    #[default]
    Full,
    None,
    Partial { fraction: f64 },
}

impl OverlapPolicy {
    pub fn fraction(&self) -> f64 {
        match *self {
            Self::Full => 1.0,
            Self::None => 0.0,
            Self::Partial { fraction } => fraction.clamp(0.0, 1.0),
        }
    }

    /// `full`, `none` or a fraction in `[0, 1]`.
    pub fn parse(text: &str) -> Result<Self, CommError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "none" => Ok(Self::None),
            other => match other.parse::<f64>() {
                Ok(f) if (0.0..=1.0).contains(&f) => Ok(Self::Partial { fraction: f }),
                _ => Err(CommError::Config(format!("overlap policy `{text}`"))),
            },
        }
    }
}

/// Per-rank compute model: `t = max(flops / peak, bytes / bandwidth)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub peak_gflops: f64,
    pub bandwidth_gbs: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { peak_gflops: 76.8, bandwidth_gbs: 13.34 }
    }
}

impl CostModel {
    /// Model that charges no time for local work.
    pub fn free() -> Self {
        Self { peak_gflops: f64::INFINITY, bandwidth_gbs: f64::INFINITY }
    }

    /// Duration in µs.
    pub fn time_us(&self, flops: u64, bytes: u64) -> f64 {
        let compute = flops as f64 / (self.peak_gflops * 1e3);
        let memory = bytes as f64 / (self.bandwidth_gbs * 1e3);
        compute.max(memory)
    }
}

/// Shape of the simulated machine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub ranks: usize,
    pub latency: LatencyModel,
    pub overlap: OverlapPolicy,
    pub cost: CostModel,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { ranks: 1, latency: LatencyModel::default(), overlap: OverlapPolicy::default(), cost: CostModel::default() }
    }
}

impl WorldConfig {
    pub fn with_ranks(ranks: usize) -> Self {
        Self { ranks, ..Self::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logarithmic_latency() {
        let m = LatencyModel::default();
        assert_eq!(m.t_red(1), 0.0);
        assert_eq!(m.t_red(16), 8.0);
        assert!((m.t_red(380_000) - 37.07).abs() < 0.01);
    }

    #[test]
    fn parsing() {
        assert_eq!(LatencyModel::parse("const:3").unwrap().t_red(4), 3.0);
        assert_eq!(LatencyModel::parse("zero").unwrap().t_red(64), 0.0);
        assert!(LatencyModel::parse("cubic").is_err());
        assert_eq!(OverlapPolicy::parse("0.99").unwrap().fraction(), 0.99);
        assert!(OverlapPolicy::parse("1.5").is_err());
    }

    #[test]
    fn cost_model_takes_the_slower_resource() {
        let c = CostModel::default();
        assert!((c.time_us(76_800, 0) - 1.0).abs() < 1e-12);
        assert!((c.time_us(0, 13_340) - 1.0).abs() < 1e-12);
        assert_eq!(CostModel::free().time_us(1 << 40, 1 << 40), 0.0);
    }
}
