//! Block BiCGStab with adaptive residual re-orthonormalization, and a
//! pipelined variant whose two fused reductions per iteration overlap the
//! two preconditioner applications.
//!
//! The operator is only ever applied forward; the shadow residual replaces
//! the transposed system.
//!
//! Hatted quantities are carried in transformed form: the true residual is
//! `R̂·σ`. A re-orthonormalization normalizes the intermediate residual
//! `Ŝ`, folds its normalizer into `σ` and applies the preconditioner to the
//! normalized `Ŝ` directly.

use serde::{Deserialize, Serialize};

use crate::blocklinalg::{generate_rhs, BlockVector, Operator, Preconditioner};
use crate::comms::{CommCounters, GramRequest, WorldConfig};
use crate::report::{NormKind, SolveOutcome, SolverError};
use crate::salgebra::{AlgebraSpec, GroupGram, SElement};
use crate::session::Session;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicgstabVariant {
    /// Three blocking reductions per iteration.
    Adaptive,
    /// Two fused reductions per iteration, each overlapped with a
    /// preconditioner application. The residual norm of iteration `k` is
    /// read from the first reduction of iteration `k + 1`.
    Pipelined,
}

impl BicgstabVariant {
    pub const ALL: [BicgstabVariant; 2] = [Self::Adaptive, Self::Pipelined];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Adaptive => "adaptive",
            Self::Pipelined => "pipelined",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "adaptive" | "classic" | "bicgstab" => Some(Self::Adaptive),
            "pipelined" | "pipe" => Some(Self::Pipelined),
            _ => None,
        }
    }
}

/// Choice of the shadow residual `M⁻ᵀR̃⁰`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowChoice {
    /// `P̂⁰ = M⁻¹R̂⁰`.
    #[default]
    PreconditionedInitialResidual,
    /// A seeded random block vector.
    SeededRandom { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicgstabConfig {
    pub variant: BicgstabVariant,
    /// Re-orthonormalization parameter; `0` disables it, `∞` forces it every
    /// iteration.
    pub eta: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub norm: NormKind,
    pub max_iter: usize,
    pub shadow: ShadowChoice,
}

impl Default for BicgstabConfig {
    fn default() -> Self {
        Self {
            variant: BicgstabVariant::Adaptive,
            eta: 100.0,
            tolerance: 1e-8,
            relative: true,
            norm: NormKind::MaxColumn,
            max_iter: 1000,
            shadow: ShadowChoice::default(),
        }
    }
}

/// Solves `A X = B` for nonsingular `A` and `M`.
///
/// Running out of iterations is not an error: the outcome's report has
/// `converged == false`.
pub fn bbicgstab_solve(
    a: &dyn Operator,
    m: &Preconditioner,
    b: &BlockVector,
    x0: Option<&BlockVector>,
    alg: &AlgebraSpec,
    cfg: &BicgstabConfig,
    world: WorldConfig,
) -> Result<SolveOutcome, SolverError> {
    if cfg.eta.is_nan() || cfg.eta < 0.0 {
        return Err(SolverError::Input(format!("eta must be nonnegative, got {}", cfg.eta)));
    }
    let name = format!("bicgstab:{}", cfg.variant.label());
    let mut ses = Session::new(&name, a, m, b, x0, alg, world)?;
    let (x, converged) = run(&mut ses, b, x0, cfg)?;
    Ok(SolveOutcome { x, report: ses.finish(converged) })
}

/// Minimizer of `‖Ŝ − ωÛ‖_F` from `⟨Û, Ŝ⟩_F` and `⟨Û, Û⟩_F`; zero when
/// `Û = 0`.
pub fn stabilization_weight(us: f64, uu: f64) -> f64 {
    if uu == 0.0 {
        0.0
    } else {
        us / uu
    }
}

fn stalled(ses: &Session<'_>, iteration: usize) -> SolverError {
    ses.stagnation(iteration, "the stabilization direction A T vanished with the residual above tolerance".into())
}

fn run(ses: &mut Session<'_>, b: &BlockVector, x0: Option<&BlockVector>, cfg: &BicgstabConfig) -> Result<(BlockVector, bool), SolverError> {
    let pipelined = cfg.variant == BicgstabVariant::Pipelined;
    let (a, m, alg) = (ses.a, ses.m, ses.alg);
    let (p_width, n, s) = (alg.p(), ses.n(), ses.s());
    let mut x = ses.solution(x0);
    let mut r = ses.vector();
    ses.residual_into(b, &x, &mut r)?;
    if ses.start(&r, cfg.norm, cfg.tolerance, cfg.relative)? {
        return Ok((x, true));
    }
    let mut sigma = if cfg.eta > 0.0 { ses.machine.normalize(&mut r, &alg)? } else { SElement::identity(alg) };
    let mut p = ses.vector();
    ses.machine.precond(m, &r, &mut p)?;
    let shadow = match cfg.shadow {
        ShadowChoice::PreconditionedInitialResidual => p.clone(),
        ShadowChoice::SeededRandom { seed } => generate_rhs(n, s, seed),
    };
    ses.count_vectors(1);
    let mut v = ses.vector();
    v.copy_from(&p);
    let mut q = ses.vector();
    let mut z = ses.vector();
    let mut sv = ses.vector();
    let mut t = ses.vector();
    let mut u = ses.vector();
    let mut w = if pipelined { ses.vector() } else { BlockVector::zeros(0, s) };

    let mut gram_rr: Option<GroupGram> = if pipelined {
        None
    } else {
        let g = ses.machine.grams(&[GramRequest::for_algebra(&shadow, &r, &alg), GramRequest::new(&r, &r, p_width)])?;
        ses.invert_equilibrated(&g[0].to_element(&alg), 0, "shadow residual product")?;
        Some(g[1].clone())
    };
    let mut last_reortho = false;
    let mut half_step_exact = false;

    for k in 0..=cfg.max_iter {
        if !pipelined && k == cfg.max_iter {
            break;
        }
        ses.machine.bop(a, &p, &mut q)?;
        let (shadow_q, shadow_r) = if pipelined {
            let reqs = [GramRequest::for_algebra(&shadow, &q, &alg), GramRequest::for_algebra(&shadow, &r, &alg), GramRequest::new(&r, &r, p_width)];
            let h = ses.machine.start_grams(&reqs)?;
            ses.machine.precond(m, &q, &mut z)?;
            let g = ses.machine.wait(h)?;
            if k > 0 {
                let norms = Session::norms_from_gram(&g[2], &sigma);
                if ses.record_and_test(k, norms, last_reortho)? {
                    return Ok((x, true));
                }
                if half_step_exact {
                    return Err(stalled(ses, k));
                }
                if k == cfg.max_iter {
                    break;
                }
            }
            gram_rr = Some(g[2].clone());
            (g[0].to_element(&alg), g[1].to_element(&alg))
        } else {
            let g = ses.machine.grams(&[GramRequest::for_algebra(&shadow, &q, &alg), GramRequest::for_algebra(&shadow, &r, &alg)])?;
            ses.machine.precond(m, &q, &mut z)?;
            (g[0].to_element(&alg), g[1].to_element(&alg))
        };
        let rr = gram_rr.as_ref().expect("residual Gram is available").to_element(&alg);
        let reortho = ses.reortho_due(cfg.eta, &rr, k, "residual Gram")?;
        let shadow_q_inv = ses.invert_equilibrated(&shadow_q, k, "shadow product with A P")?;
        let lambda = shadow_q_inv.multiply(&shadow_r);

        sv.copy_from(&r);
        ses.machine.baxpy(&mut sv, &q, &lambda.scale(-1.0))?;
        ses.machine.baxpy(&mut x, &p, &lambda.multiply(&sigma))?;
        let sigma_next = if reortho {
            let gamma = ses.machine.normalize(&mut sv, &alg)?;
            ses.machine.precond(m, &sv, &mut t)?;
            gamma.multiply(&sigma)
        } else {
            t.copy_from(&v);
            ses.machine.baxpy(&mut t, &z, &lambda.scale(-1.0))?;
            sigma.clone()
        };
        ses.machine.bop(a, &t, &mut u)?;

        let reqs = [GramRequest::new(&u, &sv, 1), GramRequest::new(&u, &u, 1), GramRequest::for_algebra(&shadow, &u, &alg)];
        let g = if pipelined {
            let h = ses.machine.start_grams(&reqs)?;
            ses.machine.precond(m, &u, &mut w)?;
            ses.machine.wait(h)?
        } else {
            ses.machine.grams(&reqs)?
        };
        let (us, uu) = (g[0].trace(), g[1].trace());
        if !(us.is_finite() && uu.is_finite()) {
            return Err(ses.nonfinite(k + 1));
        }
        // `Û = 0` means `Ŝ = 0`: the half step already solved the system and
        // the next recorded residual must pass the break test.
        half_step_exact = uu == 0.0;
        let omega = stabilization_weight(us, uu);
        let beta = shadow_q_inv.multiply(&g[2].to_element(&alg)).scale(-1.0);

        ses.machine.baxpy(&mut x, &t, &sigma_next.scale(omega))?;
        r.copy_from(&sv);
        ses.machine.axpy(&mut r, -omega, &u)?;
        sigma = sigma_next;
        if pipelined {
            v.copy_from(&t);
            ses.machine.axpy(&mut v, -omega, &w)?;
            last_reortho = reortho;
        } else {
            let g = ses.machine.grams(&[GramRequest::new(&r, &r, p_width)])?;
            let norms = Session::norms_from_gram(&g[0], &sigma);
            if ses.record_and_test(k + 1, norms, reortho)? {
                return Ok((x, true));
            }
            if half_step_exact {
                return Err(stalled(ses, k + 1));
            }
            gram_rr = Some(g[0].clone());
            ses.machine.precond(m, &r, &mut v)?;
        }
        ses.machine.axpy(&mut p, -omega, &z)?;
        ses.machine.xpby(&mut p, &v, &beta)?;
    }
    Ok((x, false))
}

/// Per-iteration communication counters of a short instrumented solve on a
/// fixed nonsymmetric problem (convection-diffusion on a 24 × 24 grid, four
/// right-hand sides, block algebra, Jacobi). The first two iterations are
/// skipped so every entry covers one steady-state iteration.
pub fn sync_count_audit(variant: BicgstabVariant, ranks: usize) -> Result<Vec<CommCounters>, SolverError> {
    let a = crate::blocklinalg::convection_diffusion(24, 20.0, 10.0);
    let m = Preconditioner::build(crate::blocklinalg::PreconditionerKind::Jacobi, &a)?;
    let b = generate_rhs(a.n(), 4, 1);
    let alg = AlgebraSpec::block(4)?;
    let cfg = BicgstabConfig { variant, eta: 0.0, tolerance: 1e-300, max_iter: 12, ..BicgstabConfig::default() };
    let out = bbicgstab_solve(&a, &m, &b, None, &alg, &cfg, WorldConfig::with_ranks(ranks))?;
    Ok((3..=out.report.iterations()).map(|k| out.report.comm_delta(k)).collect())
}

#[cfg(test)]
mod tests;
