//! Executes one configured solve and writes its reports.

use std::path::Path;
use std::time::Instant;

use bkrylov::blocklinalg::{generate_rhs, load_matrixmarket};
use bkrylov::{bbicgstab_solve, bcg_solve, bgmres_solve, Preconditioner, SolverError, SolverReport, SparseOperator};
use serde::Serialize;

use crate::config::{MatrixSource, ResolvedRun, RunConfig, SolverChoice};
use crate::error::{CliError, EXIT_NOT_CONVERGED, EXIT_NUMERICAL};

/// Header tag of the JSON summary layout.
pub const SUMMARY_FORMAT: &str = "bkrylov-summary v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Breakdown,
    Stagnation,
    NonFinite,
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::NotConverged => "not_converged",
            Self::Breakdown => "breakdown",
            Self::Stagnation => "stagnation",
            Self::NonFinite => "non_finite",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Converged => 0,
            Self::NotConverged => EXIT_NOT_CONVERGED,
            _ => EXIT_NUMERICAL,
        }
    }
}

/// Outcome of a solve that got past configuration and input loading.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: RunConfig,
    pub eta: Option<f64>,
    pub status: RunStatus,
    /// Message of a numerical failure.
    pub error: Option<String>,
    pub report: SolverReport,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    format: &'static str,
    config: &'a RunConfig,
    effective_eta: Option<f64>,
    status: RunStatus,
    error: Option<&'a str>,
    summary: bkrylov::ReportSummary,
}

impl RunResult {
    /// JSON summary with the configuration echoed back. Includes wall time.
    pub fn summary_json(&self) -> String {
        let doc = SummaryDocument {
            format: SUMMARY_FORMAT,
            config: &self.config,
            effective_eta: self.eta,
            status: self.status,
            error: self.error.as_deref(),
            summary: self.report.summary(),
        };
        serde_json::to_string_pretty(&doc).expect("summary serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), CliError> {
        write_file(&dir.join(format!("{stem}.csv")), &self.report.to_csv())?;
        write_file(&dir.join(format!("{stem}.json")), &self.summary_json())
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Output(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn load_operator(source: &MatrixSource) -> Result<SparseOperator, CliError> {
    match source {
        MatrixSource::File(path) => {
            if !path.exists() {
                return Err(CliError::Input(format!("matrix file not found: {}", path.display())));
            }
            load_matrixmarket(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        MatrixSource::Generated(g) => Ok(g.build()),
    }
}

/// Runs the solver of a resolved configuration on a loaded operator.
pub fn solve_with(a: &SparseOperator, run: &ResolvedRun) -> Result<Result<bkrylov::SolveOutcome, SolverError>, CliError> {
    let pre = Preconditioner::build(run.precond, a).map_err(|e| CliError::Input(format!("preconditioner: {e}")))?;
    let b = generate_rhs(a.n(), run.algebra.s(), run.seed);
    let out = match &run.solver {
        SolverChoice::Cg(c) => bcg_solve(a, &pre, &b, None, &run.algebra, c, run.world),
        SolverChoice::Gmres(c) => bgmres_solve(a, &pre, &b, None, &run.algebra, c, run.world),
        SolverChoice::Bicgstab(c) => bbicgstab_solve(a, &pre, &b, None, &run.algebra, c, run.world),
    };
    Ok(out)
}

/// Resolves, loads and solves. Configuration and input problems are errors;
/// numerical failures are reported through [`RunResult::status`].
pub fn execute(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let run = cfg.resolve()?;
    let a = load_operator(&run.source)?;
    log::info!("solving n = {} with {} on {} rank(s)", a.n(), cfg.solver, cfg.ranks);
    let started = Instant::now();
    let outcome = solve_with(&a, &run)?;
    let (status, error, mut report) = match outcome {
        Ok(out) => {
            let status = if out.report.converged { RunStatus::Converged } else { RunStatus::NotConverged };
            (status, None, out.report)
        }
        Err(e) => {
            let status = match &e {
                SolverError::Breakdown { .. } => RunStatus::Breakdown,
                SolverError::Stagnation { .. } => RunStatus::Stagnation,
                SolverError::NonFinite { .. } => RunStatus::NonFinite,
                _ => return Err(CliError::config(&e)),
            };
            let report = e.report().cloned().expect("numerical errors carry a report");
            (status, Some(e.to_string()), report)
        }
    };
    report.wall_time_s = started.elapsed().as_secs_f64();
    log::info!("{}: {} iterations", status.label(), report.iterations());
    Ok(RunResult { config: cfg.clone(), eta: run.solver.eta(), status, error, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(solver: &str) -> RunConfig {
        RunConfig { generator: "poisson2d:12".into(), s: 4, solver: solver.into(), ..RunConfig::default() }
    }

    #[test]
    fn each_family_converges_on_a_small_problem() {
        for solver in ["cg:classic", "gmres:modified", "bicgstab:adaptive"] {
            let r = execute(&cfg(solver)).unwrap();
            assert_eq!(r.status, RunStatus::Converged, "{solver}");
            assert_eq!(r.report.records.len(), r.report.iterations() + 1);
        }
    }

    #[test]
    fn iteration_limit_is_not_converged() {
        let r = execute(&RunConfig { max_iter: 2, ..cfg("cg:classic") }).unwrap();
        assert_eq!(r.status, RunStatus::NotConverged);
        assert_eq!(r.status.exit_code(), EXIT_NOT_CONVERGED);
    }

    #[test]
    fn missing_matrix_is_an_input_error_naming_the_path() {
        let e = execute(&RunConfig { matrix: Some("/nonexistent/a.mtx".into()), ..cfg("cg") }).unwrap_err();
        assert!(matches!(&e, CliError::Input(m) if m.contains("/nonexistent/a.mtx")), "{e}");
    }

    #[test]
    fn summary_echoes_configuration() {
        let r = execute(&cfg("cg:gropp")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
        assert_eq!(v["config"]["solver"], "cg:gropp");
        assert_eq!(v["status"], "converged");
        assert_eq!(v["summary"]["iterations"], r.report.iterations());
    }
}
