//! Bookkeeping shared by the solver drivers: the instrumented machine, the
//! report, break tests and error construction.

use std::time::Instant;

use crate::blocklinalg::{BlockVector, Operator, Preconditioner};
use crate::comms::{GramRequest, Machine, WorldConfig};
use crate::report::{NormKind, SolverError, SolverReport, StopCriterion};
use crate::salgebra::{kappa_diag_scaled, AlgebraSpec, GroupGram, SElement};

/// `1/√ε_mach` of `f64`, the scale of the re-orthonormalization trigger.
pub(crate) fn reortho_threshold() -> f64 {
    1.0 / f64::EPSILON.sqrt()
}

/// Adaptive re-orthonormalization test on a symmetric coefficient.
/// `η = 0` never fires and `η = ∞` always fires.
pub(crate) fn reortho_fires(eta: f64, coefficient: &SElement) -> Result<bool, crate::salgebra::AlgebraError> {
    if eta <= 0.0 {
        return Ok(false);
    }
    if eta.is_infinite() {
        return Ok(true);
    }
    let kappa = kappa_diag_scaled(coefficient)?;
    Ok(eta * kappa > reortho_threshold())
}

pub(crate) struct Session<'a> {
    pub a: &'a dyn Operator,
    pub m: &'a Preconditioner,
    pub alg: AlgebraSpec,
    pub machine: Machine,
    pub report: SolverReport,
    pub stop: StopCriterion,
    started: Instant,
    allocated: usize,
}

impl<'a> Session<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        a: &'a dyn Operator,
        m: &'a Preconditioner,
        b: &BlockVector,
        x0: Option<&BlockVector>,
        alg: &AlgebraSpec,
        world: WorldConfig,
    ) -> Result<Self, SolverError> {
        let n = a.dim();
        if b.n() != n || m.n() != n || b.s() != alg.s() {
            return Err(SolverError::Input(format!(
                "operator of dimension {n}, preconditioner of dimension {}, right-hand side {}x{} for {alg}",
                m.n(),
                b.n(),
                b.s()
            )));
        }
        if let Some(x) = x0 {
            if x.n() != n || x.s() != b.s() {
                return Err(SolverError::Input(format!("initial guess {}x{} does not match {}x{}", x.n(), x.s(), n, b.s())));
            }
        }
        if !b.is_finite() {
            return Err(SolverError::Input("right-hand side has non-finite entries".into()));
        }
        let machine = Machine::new(world, n)?;
        let report = SolverReport::new(name, alg.label(), world.ranks);
        Ok(Self {
            a,
            m,
            alg: *alg,
            machine,
            report,
            stop: StopCriterion::new(NormKind::Frobenius, 0.0, false, &[]),
            started: Instant::now(),
            allocated: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn s(&self) -> usize {
        self.alg.s()
    }

    /// A fresh `n × s` block vector counted toward the solver's storage.
    pub fn vector(&mut self) -> BlockVector {
        self.allocated += 1;
        BlockVector::zeros(self.n(), self.s())
    }

    /// Counts block vectors held outside [`Self::vector`], such as a basis.
    pub fn count_vectors(&mut self, count: usize) {
        self.allocated += count;
    }

    /// `X⁰` (or zero) counted as storage.
    pub fn solution(&mut self, x0: Option<&BlockVector>) -> BlockVector {
        self.allocated += 1;
        x0.cloned().unwrap_or_else(|| BlockVector::zeros(self.n(), self.s()))
    }

    /// Writes `B − A·X` into `r`.
    pub fn residual_into(&mut self, b: &BlockVector, x: &BlockVector, r: &mut BlockVector) -> Result<(), SolverError> {
        self.machine.bop(self.a, x, r)?;
        self.machine.xpay(r, b, -1.0)?;
        Ok(())
    }

    /// Records the initial state from a blocking column-norm reduction and
    /// installs the break test. Returns whether it is already satisfied.
    pub fn start(&mut self, r: &BlockVector, norm: NormKind, tolerance: f64, relative: bool) -> Result<bool, SolverError> {
        let g = self.machine.grams(&[GramRequest::new(r, r, 1)])?;
        let norms: Vec<f64> = (0..self.s()).map(|j| g[0].entry(j, 0, 0).max(0.0).sqrt()).collect();
        if norms.iter().any(|v| !v.is_finite()) {
            return Err(self.nonfinite(0));
        }
        self.stop = StopCriterion::new(norm, tolerance, relative, &norms);
        let done = self.stop.satisfied(&norms);
        self.record(norms, false);
        Ok(done)
    }

    pub fn record(&mut self, column_norms: Vec<f64>, reorthonormalized: bool) {
        let comm = self.machine.world().counters();
        let kernels = self.machine.kernels();
        let time = self.machine.time();
        self.report.push(column_norms, reorthonormalized, time, comm, kernels);
    }

    /// Records an iteration; returns `Ok(true)` when the break test holds.
    pub fn record_and_test(&mut self, iteration: usize, column_norms: Vec<f64>, reortho: bool) -> Result<bool, SolverError> {
        if column_norms.iter().any(|v| !v.is_finite()) {
            self.record(column_norms, reortho);
            return Err(self.nonfinite(iteration));
        }
        let done = self.stop.satisfied(&column_norms);
        self.record(column_norms, reortho);
        Ok(done)
    }

    /// Column norms of `R̄·σ` from the group Gram `⟨R̄, R̄⟩`.
    pub fn norms_from_gram(gram: &GroupGram, sigma: &SElement) -> Vec<f64> {
        gram.column_sq_norms_after(sigma).into_iter().map(f64::sqrt).collect()
    }

    /// Column norms of `R̄·σ` for a freshly normalized `R̄`. Exact from `σ`
    /// unless the algebra is replicated, where an uncounted observer supplies
    /// them.
    pub fn norms_after_normalization(&self, r_bar: &BlockVector, sigma: &SElement) -> Vec<f64> {
        if self.alg.is_replicated() {
            let g = self.machine.observe_grams(&[GramRequest::new(r_bar, r_bar, self.alg.p())]);
            Self::norms_from_gram(&g[0], sigma)
        } else {
            sigma.column_norms()
        }
    }

    pub fn invert(&self, c: &SElement, iteration: usize, what: &str) -> Result<SElement, SolverError> {
        c.inverse().map_err(|e| self.breakdown(iteration, format!("{what} is singular ({e})")))
    }

    pub fn invert_equilibrated(&self, c: &SElement, iteration: usize, what: &str) -> Result<SElement, SolverError> {
        c.inverse_equilibrated().map_err(|e| self.breakdown(iteration, format!("{what} is singular ({e})")))
    }

    pub fn reortho_due(&self, eta: f64, c: &SElement, iteration: usize, what: &str) -> Result<bool, SolverError> {
        if !c.is_finite() {
            return Err(self.nonfinite(iteration));
        }
        reortho_fires(eta, c).map_err(|e| self.breakdown(iteration, format!("{what} lost definiteness ({e})")))
    }

    pub fn breakdown(&self, iteration: usize, reason: String) -> SolverError {
        SolverError::Breakdown { iteration, reason, report: Box::new(self.snapshot()) }
    }

    pub fn nonfinite(&self, iteration: usize) -> SolverError {
        SolverError::NonFinite { iteration, report: Box::new(self.snapshot()) }
    }

    pub fn stagnation(&self, iteration: usize, reason: String) -> SolverError {
        SolverError::Stagnation { iteration, reason, report: Box::new(self.snapshot()) }
    }

    fn snapshot(&self) -> SolverReport {
        let mut r = self.report.clone();
        r.allocated_block_vectors = self.allocated;
        r.wall_time_s = self.started.elapsed().as_secs_f64();
        r
    }

    pub fn finish(mut self, converged: bool) -> SolverReport {
        self.report.converged = converged;
        self.snapshot()
    }
}
