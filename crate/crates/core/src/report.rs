//! Solver reports, their CSV/JSON encodings, and solver errors.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::blocklinalg::{KernelCounters, LinalgError};
use crate::comms::{CommCounters, CommError};
use crate::salgebra::AlgebraError;

/// Version of the CSV column layout, written in the header comment.
pub const CSV_FORMAT_VERSION: u32 = 1;

/// Residual norm used by the break criterion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Frobenius,
    #[default]
    MaxColumn,
}

impl NormKind {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "frobenius" | "fro" | "f" => Some(Self::Frobenius),
            "max" | "maxcol" | "max_column" | "inf" => Some(Self::MaxColumn),
            _ => None,
        }
    }
}

/// Break test shared by all solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct StopCriterion {
    pub norm: NormKind,
    pub tolerance: f64,
    reference: Vec<f64>,
}

impl StopCriterion {
    /// `relative`: compare against the initial column norms (columnwise for
    /// [`NormKind::MaxColumn`], in Frobenius norm otherwise).
    pub fn new(norm: NormKind, tolerance: f64, relative: bool, initial_columns: &[f64]) -> Self {
        let reference = if relative {
            match norm {
                NormKind::MaxColumn => initial_columns.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect(),
                NormKind::Frobenius => {
                    let f = frobenius(initial_columns);
                    vec![if f > 0.0 { f } else { 1.0 }]
                }
            }
        } else {
            vec![1.0; initial_columns.len().max(1)]
        };
        Self { norm, tolerance, reference }
    }

    /// Scaled residual measure compared against the tolerance.
    pub fn measure(&self, columns: &[f64]) -> f64 {
        match self.norm {
            NormKind::MaxColumn => columns.iter().zip(self.reference.iter().cycle()).map(|(c, r)| c / r).fold(0.0, f64::max),
            NormKind::Frobenius => frobenius(columns) / self.reference[0],
        }
    }

    pub fn satisfied(&self, columns: &[f64]) -> bool {
        self.measure(columns) <= self.tolerance
    }
}

pub fn frobenius(columns: &[f64]) -> f64 {
    columns.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// State after one iteration (record 0 is the initial state).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub column_norms: Vec<f64>,
    pub frobenius: f64,
    pub reorthonormalized: bool,
    pub virtual_time_us: f64,
    pub comm: CommCounters,
    pub kernels: KernelCounters,
}

impl IterationRecord {
    pub fn max_column(&self) -> f64 {
        self.column_norms.iter().copied().fold(0.0, f64::max)
    }
}

/// History and summary of one solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverReport {
    pub solver: String,
    pub algebra: String,
    pub ranks: usize,
    pub converged: bool,
    pub restarts: usize,
    pub allocated_block_vectors: usize,
    pub records: Vec<IterationRecord>,
    /// Events worth auditing, such as rank-deficient basis completions.
    pub notes: Vec<String>,
    /// Host time of the solve; excluded from the CSV encoding.
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportSummary {
    pub solver: String,
    pub algebra: String,
    pub ranks: usize,
    pub converged: bool,
    pub iterations: usize,
    pub reorthonormalizations: usize,
    pub restarts: usize,
    pub convergence_rate: f64,
    pub final_frobenius: f64,
    pub final_max_column: f64,
    pub virtual_time_us: f64,
    pub wall_time_s: f64,
    pub allocated_block_vectors: usize,
    pub notes: Vec<String>,
    pub flops: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub comm: CommCounters,
}

impl SolverReport {
    pub fn new(solver: impl Into<String>, algebra: impl Into<String>, ranks: usize) -> Self {
        Self {
            solver: solver.into(),
            algebra: algebra.into(),
            ranks,
            converged: false,
            restarts: 0,
            allocated_block_vectors: 0,
            records: Vec::new(),
            notes: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn push(&mut self, column_norms: Vec<f64>, reorthonormalized: bool, virtual_time_us: f64, comm: CommCounters, kernels: KernelCounters) {
        let iteration = self.records.len();
        let frobenius = frobenius(&column_norms);
        self.records.push(IterationRecord { iteration, column_norms, frobenius, reorthonormalized, virtual_time_us, comm, kernels });
    }

    /// Iterations performed (records minus the initial state).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn reorthonormalizations(&self) -> usize {
        self.records.iter().filter(|r| r.reorthonormalized).count()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Frobenius residual history.
    pub fn frobenius_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.frobenius).collect()
    }

    /// Average residual reduction per iteration, `(‖R_k‖/‖R_0‖)^{1/k}`.
    pub fn convergence_rate(&self) -> f64 {
        let k = self.iterations();
        match (self.records.first(), self.records.last()) {
            (Some(first), Some(last)) if k > 0 && first.frobenius > 0.0 => (last.frobenius / first.frobenius).powf(1.0 / k as f64),
            _ => 0.0,
        }
    }

    /// Counter increments of iteration `k ≥ 1`.
    pub fn comm_delta(&self, k: usize) -> CommCounters {
        self.records[k].comm.since(&self.records[k - 1].comm)
    }

    pub fn summary(&self) -> ReportSummary {
        let last = self.records.last();
        ReportSummary {
            solver: self.solver.clone(),
            algebra: self.algebra.clone(),
            ranks: self.ranks,
            converged: self.converged,
            iterations: self.iterations(),
            reorthonormalizations: self.reorthonormalizations(),
            restarts: self.restarts,
            convergence_rate: self.convergence_rate(),
            final_frobenius: last.map_or(0.0, |r| r.frobenius),
            final_max_column: last.map_or(0.0, |r| r.max_column()),
            virtual_time_us: last.map_or(0.0, |r| r.virtual_time_us),
            wall_time_s: self.wall_time_s,
            allocated_block_vectors: self.allocated_block_vectors,
            notes: self.notes.clone(),
            flops: last.map_or(0, |r| r.kernels.flops),
            bytes_loaded: last.map_or(0, |r| r.kernels.bytes_loaded),
            bytes_stored: last.map_or(0, |r| r.kernels.bytes_stored),
            comm: last.map(|r| r.comm).unwrap_or_default(),
        }
    }

    /// Iteration log; deterministic for a fixed configuration.
    pub fn to_csv(&self) -> String {
        let s = self.records.first().map_or(0, |r| r.column_norms.len());
        let mut out = String::new();
        let _ = writeln!(out, "# bkrylov-report v{CSV_FORMAT_VERSION} solver={} algebra={} ranks={}", self.solver, self.algebra, self.ranks);
        out.push_str("iteration,frobenius,max_column,reorthonormalized,virtual_time_us,reductions_started,reductions_waited,overlapped_reductions,tsqr,tree_reductions,backprops,broadcasts,messages,flops,bytes_loaded,bytes_stored");
        for j in 0..s {
            let _ = write!(out, ",col{j}");
        }
        out.push('\n');
        for r in &self.records {
            let c = &r.comm;
            let k = &r.kernels;
            let _ = write!(
                out,
                "{},{:e},{:e},{},{:e},{},{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.frobenius,
                r.max_column(),
                u8::from(r.reorthonormalized),
                r.virtual_time_us,
                c.reductions_started,
                c.reductions_waited,
                c.overlapped_reductions,
                c.tsqr,
                c.tree_reductions,
                c.backprops,
                c.broadcasts,
                c.messages,
                k.flops,
                k.bytes_loaded,
                k.bytes_stored
            );
            for v in &r.column_norms {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }

    /// Summary as pretty JSON (includes wall time).
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

/// Solution and history of a finished solve (converged or not).
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub x: crate::blocklinalg::BlockVector,
    pub report: SolverReport,
}

/// Solver failure, carrying the history up to the failure.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("breakdown at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String, report: Box<SolverReport> },
    #[error("non-finite values at iteration {iteration}")]
    NonFinite { iteration: usize, report: Box<SolverReport> },
    #[error("stagnation at iteration {iteration}: {reason}")]
    Stagnation { iteration: usize, reason: String, report: Box<SolverReport> },
    #[error("invalid solver input: {0}")]
    Input(String),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

impl SolverError {
    /// Partial report of a numerical failure.
    pub fn report(&self) -> Option<&SolverReport> {
        match self {
            Self::Breakdown { report, .. } | Self::NonFinite { report, .. } | Self::Stagnation { report, .. } => Some(report),
            _ => None,
        }
    }

    /// Whether the failure is numerical (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        self.report().is_some()
    }
}
