use super::{CgConfig, CgSnapshot, CgVariant};
use crate::blocklinalg::BlockVector;
use crate::comms::GramRequest;
use crate::report::SolverError;
use crate::salgebra::SElement;
use crate::session::Session;

type Observer<'o> = &'o mut dyn FnMut(&CgSnapshot<'_>);

/// Residual, break test and optional initial normalization shared by all
/// variants. Returns `None` when the initial guess already satisfies the
/// break test.
fn initialize(ses: &mut Session<'_>, b: &BlockVector, x0: Option<&BlockVector>, cfg: &CgConfig) -> Result<(BlockVector, BlockVector, SElement, bool), SolverError> {
    let x = ses.solution(x0);
    let mut r = ses.vector();
    ses.residual_into(b, &x, &mut r)?;
    let done = ses.start(&r, cfg.norm, cfg.tolerance, cfg.relative)?;
    let alg = ses.alg;
    let sigma = if cfg.eta > 0.0 && !done { ses.machine.normalize(&mut r, &alg)? } else { SElement::identity(alg) };
    Ok((x, r, sigma, done))
}

/// `λ = α⁻¹ρ` and the re-orthonormalization decision on `α`.
fn step_coefficients(ses: &Session<'_>, cfg: &CgConfig, alpha: &SElement, rho: &SElement, iteration: usize) -> Result<(SElement, bool), SolverError> {
    let reortho = ses.reortho_due(cfg.eta, alpha, iteration, "alpha")?;
    let lambda = ses.invert(alpha, iteration, "alpha")?.multiply(rho);
    Ok((lambda, reortho))
}

/// `β = ρ⁻¹ γᵀ ρ'`.
fn direction_coefficient(ses: &Session<'_>, rho: &SElement, gamma: &SElement, rho_next: &SElement, iteration: usize) -> Result<SElement, SolverError> {
    Ok(ses.invert(rho, iteration, "rho")?.multiply(&gamma.transpose()).multiply(rho_next))
}

/// Normalizes `r` in place if requested. Returns `γ`, the updated `σ` and,
/// when normalized, the column norms of the residual.
fn maybe_normalize(ses: &mut Session<'_>, r: &mut BlockVector, sigma: &SElement, reortho: bool) -> Result<(SElement, SElement, Option<Vec<f64>>), SolverError> {
    let alg = ses.alg;
    if !reortho {
        return Ok((SElement::identity(alg), sigma.clone(), None));
    }
    let gamma = ses.machine.normalize(r, &alg)?;
    let sigma = gamma.multiply(sigma);
    let norms = ses.norms_after_normalization(r, &sigma);
    Ok((gamma, sigma, Some(norms)))
}

/// Classic and two-reduction variants. Four block vectors: `X, R̄, P` and
/// one buffer shared by `Q` and `Z`.
pub(super) fn classic(ses: &mut Session<'_>, b: &BlockVector, x0: Option<&BlockVector>, cfg: &CgConfig, obs: Observer<'_>) -> Result<(BlockVector, bool), SolverError> {
    let fused = cfg.variant == CgVariant::TwoReduction;
    let (a, m, alg) = (ses.a, ses.m, ses.alg);
    let (mut x, mut r, mut sigma, done) = initialize(ses, b, x0, cfg)?;
    let mut p = ses.vector();
    let mut qz = ses.vector();
    if done {
        return Ok((x, true));
    }
    ses.machine.precond(m, &r, &mut p)?;
    let mut rho = ses.machine.grams(&[GramRequest::for_algebra(&p, &r, &alg)])?[0].to_element(&alg);

    for k in 1..=cfg.max_iter {
        ses.machine.bop(a, &p, &mut qz)?;
        let alpha = ses.machine.grams(&[GramRequest::for_algebra(&p, &qz, &alg)])?[0].to_element(&alg);
        let (lambda, reortho) = step_coefficients(ses, cfg, &alpha, &rho, k)?;
        let step = lambda.multiply(&sigma);
        if !fused {
            ses.machine.baxpy(&mut x, &p, &step)?;
        }
        ses.machine.baxpy(&mut r, &qz, &lambda.scale(-1.0))?;
        let (gamma, sigma_next, normalized) = maybe_normalize(ses, &mut r, &sigma, reortho)?;
        sigma = sigma_next;

        let (norms, rho_next) = if fused {
            ses.machine.baxpy(&mut x, &p, &step)?;
            ses.machine.precond(m, &r, &mut qz)?;
            let mut reqs = vec![GramRequest::for_algebra(&qz, &r, &alg)];
            if normalized.is_none() {
                reqs.push(GramRequest::for_algebra(&r, &r, &alg));
            }
            let g = ses.machine.grams(&reqs)?;
            let norms = normalized.unwrap_or_else(|| Session::norms_from_gram(&g[1], &sigma));
            (norms, Some(g[0].to_element(&alg)))
        } else {
            let norms = match normalized {
                Some(n) => n,
                None => {
                    let g = ses.machine.grams(&[GramRequest::for_algebra(&r, &r, &alg)])?;
                    Session::norms_from_gram(&g[0], &sigma)
                }
            };
            (norms, None)
        };
        obs(&CgSnapshot { iteration: k, x: &x, direction: &p, r_bar: &r, sigma: &sigma });
        if ses.record_and_test(k, norms, reortho)? {
            return Ok((x, true));
        }
        let rho_next = match rho_next {
            Some(v) => v,
            None => {
                ses.machine.precond(m, &r, &mut qz)?;
                ses.machine.grams(&[GramRequest::for_algebra(&qz, &r, &alg)])?[0].to_element(&alg)
            }
        };
        let beta = direction_coefficient(ses, &rho, &gamma, &rho_next, k)?;
        ses.machine.xpby(&mut p, &qz, &beta)?;
        rho = rho_next;
    }
    Ok((x, false))
}

/// Gropp's variant: the `α` reduction overlaps `V = M⁻¹Q` and the fused
/// `(ρ, residual norm)` reduction overlaps `U = AZ`. `V` and `U` share one
/// buffer.
pub(super) fn gropp(ses: &mut Session<'_>, b: &BlockVector, x0: Option<&BlockVector>, cfg: &CgConfig, obs: Observer<'_>) -> Result<(BlockVector, bool), SolverError> {
    let (a, m, alg) = (ses.a, ses.m, ses.alg);
    let (mut x, mut r, mut sigma, done) = initialize(ses, b, x0, cfg)?;
    let mut p = ses.vector();
    let mut q = ses.vector();
    let mut z = ses.vector();
    let mut vu = ses.vector();
    if done {
        return Ok((x, true));
    }
    ses.machine.precond(m, &r, &mut p)?;
    ses.machine.bop(a, &p, &mut q)?;
    z.copy_from(&p);
    let mut rho = ses.machine.grams(&[GramRequest::for_algebra(&p, &r, &alg)])?[0].to_element(&alg);

    for k in 1..=cfg.max_iter {
        let h = ses.machine.start_grams(&[GramRequest::for_algebra(&p, &q, &alg)])?;
        ses.machine.precond(m, &q, &mut vu)?;
        let alpha = ses.machine.wait(h)?[0].to_element(&alg);
        let (lambda, reortho) = step_coefficients(ses, cfg, &alpha, &rho, k)?;
        let minus_lambda = lambda.scale(-1.0);
        ses.machine.baxpy(&mut r, &q, &minus_lambda)?;
        let sigma_prev = sigma.clone();
        let (gamma, sigma_next, normalized) = maybe_normalize(ses, &mut r, &sigma, reortho)?;
        sigma = sigma_next;
        if normalized.is_some() {
            ses.machine.precond(m, &r, &mut z)?;
        } else {
            ses.machine.baxpy(&mut z, &vu, &minus_lambda)?;
        }
        ses.machine.baxpy(&mut x, &p, &lambda.multiply(&sigma_prev))?;

        let mut reqs = vec![GramRequest::for_algebra(&z, &r, &alg)];
        if normalized.is_none() {
            reqs.push(GramRequest::for_algebra(&r, &r, &alg));
        }
        let h = ses.machine.start_grams(&reqs)?;
        ses.machine.bop(a, &z, &mut vu)?;
        let g = ses.machine.wait(h)?;
        let norms = normalized.unwrap_or_else(|| Session::norms_from_gram(&g[1], &sigma));
        obs(&CgSnapshot { iteration: k, x: &x, direction: &p, r_bar: &r, sigma: &sigma });
        if ses.record_and_test(k, norms, reortho)? {
            return Ok((x, true));
        }
        let rho_next = g[0].to_element(&alg);
        let beta = direction_coefficient(ses, &rho, &gamma, &rho_next, k)?;
        ses.machine.xpby(&mut p, &z, &beta)?;
        ses.machine.xpby(&mut q, &vu, &beta)?;
        rho = rho_next;
    }
    Ok((x, false))
}

/// One fused reduction per iteration with `α` obtained by recursion:
/// one-reduction, partially pipelined and Ghysels' variants.
pub(super) fn single_reduction(
    ses: &mut Session<'_>,
    b: &BlockVector,
    x0: Option<&BlockVector>,
    cfg: &CgConfig,
    obs: Observer<'_>,
) -> Result<(BlockVector, bool), SolverError> {
    let pipelined = matches!(cfg.variant, CgVariant::PartiallyPipelined | CgVariant::Ghysels);
    let ghysels = cfg.variant == CgVariant::Ghysels;
    let (a, m, alg) = (ses.a, ses.m, ses.alg);
    let (mut x, mut r, mut sigma, done) = initialize(ses, b, x0, cfg)?;
    let mut p = ses.vector();
    let mut q = ses.vector();
    let mut z = ses.vector();
    let mut u = ses.vector();
    // V = M⁻¹Q, W = M⁻¹U, S = AV, T = AW.
    let mut v = pipelined.then(|| ses.vector());
    let mut w = pipelined.then(|| ses.vector());
    let mut sv = ghysels.then(|| ses.vector());
    let mut t = ghysels.then(|| ses.vector());
    if done {
        return Ok((x, true));
    }
    ses.machine.precond(m, &r, &mut p)?;
    z.copy_from(&p);
    ses.machine.bop(a, &p, &mut q)?;
    if ghysels {
        u.copy_from(&q);
    }
    if let Some(v) = v.as_mut() {
        ses.machine.precond(m, &q, v)?;
    }
    if let (Some(sv), Some(v)) = (sv.as_mut(), v.as_ref()) {
        ses.machine.bop(a, v, sv)?;
    }
    let g = ses.machine.grams(&[GramRequest::for_algebra(&p, &r, &alg), GramRequest::for_algebra(&p, &q, &alg)])?;
    let mut rho = g[0].to_element(&alg);
    let mut alpha = g[1].to_element(&alg);

    for k in 1..=cfg.max_iter {
        let (lambda, reortho) = step_coefficients(ses, cfg, &alpha, &rho, k)?;
        let minus_lambda = lambda.scale(-1.0);
        ses.machine.baxpy(&mut r, &q, &minus_lambda)?;
        let sigma_prev = sigma.clone();
        let (gamma, sigma_next, normalized) = maybe_normalize(ses, &mut r, &sigma, reortho)?;
        sigma = sigma_next;
        if pipelined {
            if normalized.is_some() {
                ses.machine.precond(m, &r, &mut z)?;
                if ghysels {
                    ses.machine.bop(a, &z, &mut u)?;
                }
            } else {
                ses.machine.baxpy(&mut z, v.as_ref().expect("pipelined"), &minus_lambda)?;
                if let Some(sv) = sv.as_ref() {
                    ses.machine.baxpy(&mut u, sv, &minus_lambda)?;
                }
            }
        }
        ses.machine.baxpy(&mut x, &p, &lambda.multiply(&sigma_prev))?;
        if !pipelined {
            ses.machine.precond(m, &r, &mut z)?;
        }
        if !ghysels {
            ses.machine.bop(a, &z, &mut u)?;
        }

        let mut reqs = vec![GramRequest::for_algebra(&z, &r, &alg), GramRequest::for_algebra(&z, &u, &alg)];
        if normalized.is_none() {
            reqs.push(GramRequest::for_algebra(&r, &r, &alg));
        }
        let h = ses.machine.start_grams(&reqs)?;
        if let Some(w) = w.as_mut() {
            ses.machine.precond(m, &u, w)?;
        }
        if let (Some(t), Some(w)) = (t.as_mut(), w.as_ref()) {
            ses.machine.bop(a, w, t)?;
        }
        let g = ses.machine.wait(h)?;
        let norms = normalized.unwrap_or_else(|| Session::norms_from_gram(&g[2], &sigma));
        obs(&CgSnapshot { iteration: k, x: &x, direction: &p, r_bar: &r, sigma: &sigma });
        if ses.record_and_test(k, norms, reortho)? {
            return Ok((x, true));
        }
        let rho_next = g[0].to_element(&alg);
        let delta = g[1].to_element(&alg);
        let beta = direction_coefficient(ses, &rho, &gamma, &rho_next, k)?;
        ses.machine.xpby(&mut p, &z, &beta)?;
        ses.machine.xpby(&mut q, &u, &beta)?;
        if let (Some(v), Some(w)) = (v.as_mut(), w.as_ref()) {
            ses.machine.xpby(v, w, &beta)?;
        }
        if let (Some(sv), Some(t)) = (sv.as_mut(), t.as_ref()) {
            ses.machine.xpby(sv, t, &beta)?;
        }
        alpha = &delta - &beta.transpose().multiply(&alpha).multiply(&beta);
        rho = rho_next;
    }
    Ok((x, false))
}
