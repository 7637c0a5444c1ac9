use super::*;
use crate::blocklinalg::{generate_rhs, poisson2d, PreconditionerKind, SparseOperator};
use crate::salgebra::block_inner_product;

fn cfg(variant: CgVariant, eta: f64) -> CgConfig {
    CgConfig { variant, eta, tolerance: 1e-10, ..CgConfig::default() }
}

fn jacobi(a: &SparseOperator) -> Preconditioner {
    Preconditioner::build(PreconditionerKind::Jacobi, a).unwrap()
}

#[test]
fn identity_operator_converges_in_one_iteration() {
    let a = SparseOperator::identity(30);
    let b = generate_rhs(30, 4, 3);
    for variant in CgVariant::ALL {
        for alg in [AlgebraSpec::parallel(4).unwrap(), AlgebraSpec::block(4).unwrap(), AlgebraSpec::global(4).unwrap()] {
            let out = bcg_solve(&a, &Preconditioner::identity(30), &b, None, &alg, &cfg(variant, 1e4), WorldConfig::default()).unwrap();
            assert!(out.report.converged);
            assert_eq!(out.report.iterations(), 1, "{variant:?} {alg}");
            assert!(out.x.sub_norm(&b) < 1e-12 * b.frobenius_norm());
        }
    }
}

#[test]
fn two_by_two_spd_system() {
    let a = SparseOperator::from_dense(2, &[4.0, 1.0, 1.0, 3.0]).unwrap();
    let b = BlockVector::from_row_major(2, 1, vec![1.0, 2.0]).unwrap();
    let exact = [1.0 / 11.0, 7.0 / 11.0];
    for variant in CgVariant::ALL {
        let out = bcg_solve(&a, &Preconditioner::identity(2), &b, None, &AlgebraSpec::parallel(1).unwrap(), &cfg(variant, 0.0), WorldConfig::default()).unwrap();
        assert!(out.report.iterations() <= 2);
        for (i, e) in exact.iter().enumerate() {
            assert!((out.x.get(i, 0) - e).abs() < 1e-12, "{variant:?}");
        }
    }
}

#[test]
fn structural_counts_per_iteration() {
    let a = poisson2d(12);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 5);
    let alg = AlgebraSpec::block_parallel(4, 2).unwrap();
    for variant in CgVariant::ALL {
        let c = CgConfig { max_iter: 8, tolerance: 1e-14, ..cfg(variant, 0.0) };
        let world = WorldConfig::with_ranks(4);
        let out = bcg_solve(&a, &m, &b, None, &alg, &c, world).unwrap();
        let profile = variant.profile();
        assert_eq!(out.report.allocated_block_vectors, profile.block_vectors, "{variant:?}");
        for k in 2..=out.report.iterations() {
            let d = out.report.comm_delta(k);
            assert_eq!(d.reductions_waited as usize, profile.synchronizations, "{variant:?} iteration {k}");
            let overlapped = if profile.overlapped { d.reductions_waited } else { 0 };
            assert_eq!(d.overlapped_reductions, overlapped, "{variant:?}");
            let baxpys = out.report.records[k].kernels.baxpy_calls - out.report.records[k - 1].kernels.baxpy_calls;
            assert_eq!(baxpys as usize, profile.baxpys, "{variant:?}");
        }
    }
}

#[test]
fn variants_agree_and_solve() {
    let a = poisson2d(10);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 7);
    let alg = AlgebraSpec::block(4).unwrap();
    // Unstabilized block CG loses rank of alpha near 1e-10; stop before that.
    let c = |variant| CgConfig { tolerance: 1e-8, ..cfg(variant, 0.0) };
    let reference = bcg_solve(&a, &m, &b, None, &alg, &c(CgVariant::Classic), WorldConfig::default()).unwrap();
    let ref_hist = reference.report.frobenius_history();
    for variant in CgVariant::ALL {
        let out = bcg_solve(&a, &m, &b, None, &alg, &c(variant), WorldConfig::default()).unwrap();
        assert!(out.report.converged, "{variant:?}");
        let hist = out.report.frobenius_history();
        for (x, y) in hist.iter().zip(&ref_hist).take(10) {
            assert!((x - y).abs() <= 1e-8 * y, "{variant:?}: {x} vs {y}");
        }
        let mut ax = BlockVector::zeros(a.n(), 4);
        a.apply_into(&out.x, &mut ax);
        assert!(ax.sub_norm(&b) < 1e-7 * b.frobenius_norm(), "{variant:?}");
    }
}

#[test]
fn reorthonormalization_every_iteration_keeps_solution_exact() {
    let a = poisson2d(10);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 9);
    for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::block_global(4, 2).unwrap(), AlgebraSpec::parallel(4).unwrap()] {
        for variant in CgVariant::ALL {
            let out = bcg_solve(&a, &m, &b, None, &alg, &cfg(variant, f64::INFINITY), WorldConfig::default()).unwrap();
            assert!(out.report.converged, "{variant:?} {alg}");
            assert_eq!(out.report.reorthonormalizations(), out.report.iterations());
            let mut ax = BlockVector::zeros(a.n(), 4);
            a.apply_into(&out.x, &mut ax);
            let true_norm = ax.sub_norm(&b);
            let reported = out.report.last().unwrap().frobenius;
            assert!(true_norm < 1e-8 * b.frobenius_norm(), "{variant:?} {alg}");
            assert!((true_norm - reported).abs() < 1e-6 * b.frobenius_norm());
        }
    }
}

#[test]
fn rank_deficient_rhs_breaks_down_without_stabilization() {
    let a = poisson2d(8);
    let col = generate_rhs(a.n(), 1, 2).column(0);
    let b = BlockVector::from_columns(&[col.clone(), col]).unwrap();
    let alg = AlgebraSpec::block(2).unwrap();
    let m = Preconditioner::identity(a.n());
    let err = bcg_solve(&a, &m, &b, None, &alg, &cfg(CgVariant::Classic, 0.0), WorldConfig::default()).unwrap_err();
    assert!(matches!(err, SolverError::Breakdown { iteration: 1, .. }), "{err}");
    let ok = bcg_solve(&a, &m, &b, None, &alg, &cfg(CgVariant::Classic, 1e4), WorldConfig::default()).unwrap();
    assert!(ok.report.converged);
}

#[test]
fn galerkin_and_conjugacy() {
    let a = poisson2d(9);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 3, 4);
    let alg = AlgebraSpec::block(3).unwrap();
    let mut directions: Vec<BlockVector> = Vec::new();
    let mut worst: f64 = 0.0;
    let c = CgConfig { max_iter: 15, tolerance: 1e-14, ..cfg(CgVariant::Classic, 0.0) };
    bcg_solve_observed(&a, &m, &b, None, &alg, &c, WorldConfig::default(), &mut |snap| {
        directions.push(snap.direction.clone());
        let r = snap.residual();
        for p in &directions {
            let g = block_inner_product(&r, p, &alg).unwrap();
            worst = worst.max(g.frobenius_norm() / (r.frobenius_norm() * p.frobenius_norm()));
        }
    })
    .unwrap();
    assert!(worst < 1e-8, "{worst}");
    let mut ap = BlockVector::zeros(a.n(), 3);
    for (i, p) in directions.iter().enumerate().take(6) {
        a.apply_into(p, &mut ap);
        for other in directions.iter().take(i) {
            let g = block_inner_product(other, &ap, &alg).unwrap();
            assert!(g.frobenius_norm() < 1e-8 * other.frobenius_norm() * ap.frobenius_norm());
        }
    }
}

#[test]
fn rejects_mismatched_inputs() {
    let a = poisson2d(4);
    let b = generate_rhs(16, 3, 1);
    let m = Preconditioner::identity(16);
    assert!(matches!(
        bcg_solve(&a, &m, &b, None, &AlgebraSpec::parallel(2).unwrap(), &CgConfig::default(), WorldConfig::default()),
        Err(SolverError::Input(_))
    ));
    let bad = CgConfig { eta: -1.0, ..CgConfig::default() };
    assert!(bcg_solve(&a, &m, &b, None, &AlgebraSpec::parallel(3).unwrap(), &bad, WorldConfig::default()).is_err());
}
