//! Invariant self-test, run twice to prove that outputs are reproducible.

use std::fmt::Write as _;

use bkrylov::blocklinalg::{convection_diffusion, generate_rhs, poisson2d};
use bkrylov::comms::{overlap_benchmark, tsqr_factor, CommWorld};
use bkrylov::salgebra::{algebra_variants, block_inner_product, check_algebra_properties};
use bkrylov::{
    bbicgstab_solve, bcg_solve, bgmres_solve, AlgebraSpec, BicgstabConfig, BicgstabVariant, BlockVector, CgConfig, CgVariant, GmresConfig,
    OrthoStrategy, Preconditioner, PreconditionerKind, SolveOutcome, SolverError, WorldConfig,
};

use crate::error::CliError;

/// Tolerance of the TSQR orthonormality and reconstruction checks.
pub const TSQR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Randomized trials per algebra variant.
    pub trials: usize,
    /// Column count of the algebra property runs.
    pub s: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 1, trials: 1000, s: 8 }
    }
}

/// One section of the suite: its text output and verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: &'static str,
    pub passed: bool,
    pub output: String,
}

fn algebra_section(opts: &SuiteOptions) -> Section {
    let mut out = String::from("algebra,trials,symmetry,normality,linearity,reconstruction,orthonormality,indefinite,pattern_breaks,diagonal_mismatches\n");
    let mut passed = true;
    for (i, alg) in algebra_variants(opts.s).iter().enumerate() {
        let r = check_algebra_properties(alg, opts.trials, opts.seed.wrapping_add(i as u64));
        passed &= r.passed();
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            r.algebra, r.trials, r.symmetry, r.normality, r.linearity, r.reconstruction, r.orthonormality, r.indefinite, r.pattern_breaks, r.diagonal_mismatches
        );
    }
    Section { name: "algebra", passed, output: out }
}

fn solver_section(name: &'static str, runs: Vec<(String, Result<SolveOutcome, SolverError>)>) -> Section {
    let mut out = String::new();
    let mut passed = true;
    for (label, result) in runs {
        let _ = writeln!(out, "## {label}");
        match result {
            Ok(o) => {
                passed &= o.report.converged;
                out.push_str(&o.report.to_csv());
            }
            Err(e) => {
                passed = false;
                let _ = writeln!(out, "error: {e}");
            }
        }
    }
    Section { name, passed, output: out }
}

fn cg_section(opts: &SuiteOptions) -> Section {
    let a = poisson2d(16);
    let pre = Preconditioner::build(PreconditionerKind::Jacobi, &a).expect("nonzero diagonal");
    let b = generate_rhs(a.n(), 4, opts.seed);
    let alg = AlgebraSpec::block(4).expect("valid");
    let runs = CgVariant::ALL
        .iter()
        .map(|&variant| {
            let cfg = CgConfig { variant, eta: 0.0, ..CgConfig::default() };
            (variant.label().to_string(), bcg_solve(&a, &pre, &b, None, &alg, &cfg, WorldConfig::with_ranks(4)))
        })
        .collect();
    solver_section("cg", runs)
}

fn gmres_section(opts: &SuiteOptions) -> Section {
    let a = convection_diffusion(16, 20.0, 10.0);
    let pre = Preconditioner::build(PreconditionerKind::Jacobi, &a).expect("nonzero diagonal");
    let b = generate_rhs(a.n(), 4, opts.seed.wrapping_add(1));
    let alg = AlgebraSpec::block_parallel(4, 2).expect("valid");
    let runs = [OrthoStrategy::Modified, OrthoStrategy::Classical(2), OrthoStrategy::Pipelined(2), OrthoStrategy::Localized]
        .iter()
        .map(|&strategy| {
            let cfg = GmresConfig { strategy, restart: 30, ..GmresConfig::default() };
            (strategy.label(), bgmres_solve(&a, &pre, &b, None, &alg, &cfg, WorldConfig::with_ranks(4)))
        })
        .collect();
    solver_section("gmres", runs)
}

fn bicgstab_section(opts: &SuiteOptions) -> Section {
    let a = convection_diffusion(16, 20.0, 10.0);
    let pre = Preconditioner::build(PreconditionerKind::Jacobi, &a).expect("nonzero diagonal");
    let b = generate_rhs(a.n(), 4, opts.seed.wrapping_add(2));
    let alg = AlgebraSpec::block(4).expect("valid");
    let runs = BicgstabVariant::ALL
        .iter()
        .map(|&variant| {
            let cfg = BicgstabConfig { variant, ..BicgstabConfig::default() };
            (variant.label().to_string(), bbicgstab_solve(&a, &pre, &b, None, &alg, &cfg, WorldConfig::with_ranks(4)))
        })
        .collect();
    solver_section("bicgstab", runs)
}

fn tsqr_section(opts: &SuiteOptions) -> Section {
    let mut out = String::from("ranks,input,orthonormality,reconstruction\n");
    let mut passed = true;
    let alg = AlgebraSpec::block(8).expect("valid");
    let random = generate_rhs(256, 8, opts.seed.wrapping_add(3));
    let deficient = BlockVector::from_fn(256, 8, |i, j| random.get(i, j % 3) * (1.0 + j as f64));
    for ranks in [1, 2, 4, 8] {
        let world = CommWorld::new(WorldConfig::with_ranks(ranks), 256).expect("256 rows cover 8 ranks");
        for (label, x) in [("random", &random), ("rank_deficient", &deficient)] {
            match tsqr_factor(&world, x, &alg) {
                Ok((q, sigma)) => {
                    let ortho = block_inner_product(&q, &q, &alg).expect("shapes match").distance_to_identity();
                    let recon = bkrylov::blocklinalg::apply_right(&q, &sigma).sub_norm(x) / x.frobenius_norm();
                    passed &= ortho <= TSQR_TOL && recon <= TSQR_TOL;
                    let _ = writeln!(out, "{ranks},{label},{ortho:e},{recon:e}");
                }
                Err(e) => {
                    passed = false;
                    let _ = writeln!(out, "{ranks},{label},error: {e}");
                }
            }
        }
    }
    Section { name: "tsqr", passed, output: out }
}

fn overlap_section() -> Section {
    let mut out = String::from("t_base,t_work,t_iter,t_ovhd,t_avail\n");
    let mut passed = true;
    match overlap_benchmark(WorldConfig::with_ranks(16)) {
        Ok(rows) => {
            for r in rows {
                passed &= r.t_ovhd == r.t_iter - r.t_work && r.t_avail == r.t_base - r.t_ovhd;
                let _ = writeln!(out, "{:e},{:e},{:e},{:e},{:e}", r.t_base, r.t_work, r.t_iter, r.t_ovhd, r.t_avail);
            }
        }
        Err(e) => {
            passed = false;
            let _ = writeln!(out, "error: {e}");
        }
    }
    Section { name: "overlap", passed, output: out }
}

/// Runs every section once.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<Section>, CliError> {
    if opts.s == 0 || opts.trials == 0 {
        return Err(CliError::Config("check needs s >= 1 and trials >= 1".into()));
    }
    Ok(vec![algebra_section(opts), cg_section(opts), gmres_section(opts), bicgstab_section(opts), tsqr_section(opts), overlap_section()])
}

/// Two runs of the suite with the same options.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub sections: Vec<Section>,
    /// Per section: whether the second run reproduced the first byte for byte.
    pub identical: Vec<bool>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| s.passed) && self.identical.iter().all(|&i| i)
    }

    /// One `PASS`/`FAIL` line per section and one for determinism.
    pub fn lines(&self) -> Vec<String> {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut lines: Vec<String> = self.sections.iter().map(|s| format!("{} {}", mark(s.passed), s.name)).collect();
        let differing: Vec<&str> = self.sections.iter().zip(&self.identical).filter(|(_, &same)| !same).map(|(s, _)| s.name).collect();
        if differing.is_empty() {
            lines.push(format!("{} determinism (2 runs, byte-identical)", mark(true)));
        } else {
            lines.push(format!("{} determinism (differs: {})", mark(false), differing.join(", ")));
        }
        lines
    }
}

pub fn check(opts: &SuiteOptions) -> Result<CheckOutcome, CliError> {
    let first = run_suite(opts)?;
    let second = run_suite(opts)?;
    let identical = first.iter().zip(&second).map(|(a, b)| a.output.as_bytes() == b.output.as_bytes()).collect();
    Ok(CheckOutcome { sections: first, identical })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_suite_passes_and_reproduces() {
        let out = check(&SuiteOptions { seed: 5, trials: 20, s: 4 }).unwrap();
        assert!(out.passed(), "{:?}", out.lines());
        assert_eq!(out.lines().len(), out.sections.len() + 1);
    }

    #[test]
    fn differing_outputs_fail_determinism() {
        let mut out = check(&SuiteOptions { seed: 5, trials: 5, s: 2 }).unwrap();
        out.identical[0] = false;
        assert!(!out.passed());
        assert!(out.lines().last().unwrap().starts_with("FAIL determinism"));
    }
}
