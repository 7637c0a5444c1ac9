use super::*;
use crate::blocklinalg::{convection_diffusion, PreconditionerKind, SparseOperator};
use crate::comms::Machine;
use crate::salgebra::dense::DenseMatrix;

fn cfg(variant: BicgstabVariant, eta: f64) -> BicgstabConfig {
    BicgstabConfig { variant, eta, tolerance: 1e-10, ..BicgstabConfig::default() }
}

fn true_residual(a: &SparseOperator, b: &BlockVector, x: &BlockVector) -> BlockVector {
    let mut ax = BlockVector::zeros(a.n(), b.s());
    a.apply_into(x, &mut ax);
    b.difference(&ax)
}

fn jacobi(a: &SparseOperator) -> Preconditioner {
    Preconditioner::build(PreconditionerKind::Jacobi, a).unwrap()
}

#[test]
fn identity_operator_converges_in_one_iteration() {
    let a = SparseOperator::identity(30);
    let b = generate_rhs(30, 4, 2);
    for variant in BicgstabVariant::ALL {
        for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::parallel(4).unwrap(), AlgebraSpec::global(4).unwrap()] {
            for eta in [0.0, 100.0] {
                let out = bbicgstab_solve(&a, &Preconditioner::identity(30), &b, None, &alg, &cfg(variant, eta), WorldConfig::default()).unwrap();
                assert!(out.report.converged, "{variant:?} {alg} eta={eta}");
                assert_eq!(out.report.iterations(), 1, "{variant:?} {alg}");
                assert!(out.x.sub_norm(&b) < 1e-13 * b.frobenius_norm());
            }
        }
    }
}

#[test]
fn three_point_stencil_matches_dense_solve() {
    // 1D upwinded convection-diffusion stencil `(-1 - c, 2, -1 + c)` on three nodes.
    let c = 0.4;
    let dense = [2.0, -1.0 + c, 0.0, -1.0 - c, 2.0, -1.0 + c, 0.0, -1.0 - c, 2.0];
    let a = SparseOperator::from_dense(3, &dense).unwrap();
    let b = BlockVector::from_row_major(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
    let inv = DenseMatrix::from_row_major(3, 3, dense.to_vec()).inverse(1e-14).unwrap();
    let exact = inv.matmul(&DenseMatrix::from_row_major(3, 1, vec![1.0, -2.0, 0.5]));
    let alg = AlgebraSpec::parallel(1).unwrap();
    for variant in BicgstabVariant::ALL {
        for eta in [0.0, 100.0] {
            let c = BicgstabConfig { tolerance: 1e-14, max_iter: 6, ..cfg(variant, eta) };
            let out = bbicgstab_solve(&a, &Preconditioner::identity(3), &b, None, &alg, &c, WorldConfig::default()).unwrap();
            let err = (0..3).map(|i| (out.x.get(i, 0) - exact.as_slice()[i]).powi(2)).sum::<f64>().sqrt();
            assert!(out.report.iterations() <= 6);
            assert!(err < 1e-10, "{variant:?} eta={eta}: error {err} after {} iterations", out.report.iterations());
        }
    }
}

#[test]
fn reported_residual_matches_explicit_residual() {
    let a = convection_diffusion(12, 20.0, -10.0);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 3);
    for variant in BicgstabVariant::ALL {
        for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::block_parallel(4, 2).unwrap(), AlgebraSpec::block_global(4, 2).unwrap()] {
            for eta in [0.0, 100.0, f64::INFINITY] {
                let c = BicgstabConfig { tolerance: 1e-8, ..cfg(variant, eta) };
                let out = bbicgstab_solve(&a, &m, &b, None, &alg, &c, WorldConfig::default()).unwrap();
                assert!(out.report.converged, "{variant:?} {alg} eta={eta}");
                let explicit = true_residual(&a, &b, &out.x).frobenius_norm();
                let reported = out.report.last().unwrap().frobenius;
                // The recurrence drifts from the true residual by rounding
                // proportional to the largest residual seen along the way.
                let peak = out.report.frobenius_history().into_iter().fold(0.0, f64::max);
                assert!((explicit - reported).abs() <= 1e-6 * explicit + 1e-10 * peak, "{variant:?} {alg} eta={eta}: {explicit} vs {reported}");
                if eta.is_infinite() {
                    assert_eq!(out.report.reorthonormalizations(), out.report.iterations());
                }
            }
        }
    }
}

#[test]
fn stabilization_weight_minimizes_the_residual() {
    let mut machine = Machine::serial(50);
    let s_vec = generate_rhs(50, 3, 11);
    let u_vec = generate_rhs(50, 3, 12);
    let g = machine.grams(&[GramRequest::new(&u_vec, &s_vec, 1), GramRequest::new(&u_vec, &u_vec, 1)]).unwrap();
    let omega = stabilization_weight(g[0].trace(), g[1].trace());
    let mut norm = |w: f64| {
        let mut r = s_vec.clone();
        machine.axpy(&mut r, -w, &u_vec).unwrap();
        r.frobenius_norm()
    };
    let best = norm(omega);
    assert!(norm(omega + 1e-3) > best && norm(omega - 1e-3) > best);
    assert_eq!(stabilization_weight(1.0, 0.0), 0.0);
}

#[test]
fn reorthonormalized_run_tracks_untransformed_reference() {
    let a = convection_diffusion(10, 8.0, 3.0);
    let m = jacobi(&a);
    let run = |b: &BlockVector, eta: f64| {
        let alg = AlgebraSpec::block(b.s()).unwrap();
        bbicgstab_solve(&a, &m, b, None, &alg, &cfg(BicgstabVariant::Adaptive, eta), WorldConfig::default()).unwrap()
    };
    // With one column the normalizer is a scalar and the transformed
    // stabilization weight equals the untransformed one.
    let single = generate_rhs(a.n(), 1, 4);
    let (reference, always) = (run(&single, 0.0), run(&single, f64::INFINITY));
    let (h0, h1) = (reference.report.frobenius_history(), always.report.frobenius_history());
    assert_eq!(h0.len(), h1.len());
    for (k, (r0, r1)) in h0.iter().zip(&h1).enumerate() {
        assert!((r0 - r1).abs() <= 1e-6 * r0, "iteration {k}: {r0} vs {r1}");
    }
    assert!(reference.x.sub_norm(&always.x) < 1e-9 * reference.x.frobenius_norm());
    // With several columns the weights differ, but both runs reach the same solution.
    let block = generate_rhs(a.n(), 3, 4);
    let (reference, always) = (run(&block, 0.0), run(&block, f64::INFINITY));
    assert!(reference.report.converged && always.report.converged);
    assert!(reference.x.sub_norm(&always.x) < 1e-8 * reference.x.frobenius_norm());
    let (i0, i1) = (reference.report.iterations() as f64, always.report.iterations() as f64);
    assert!((i0 - i1).abs() <= 0.2 * i0, "{i0} vs {i1} iterations");
}

#[test]
fn pipelined_matches_adaptive_on_one_rank() {
    let a = convection_diffusion(16, 30.0, 10.0);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 6);
    for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::block_parallel(4, 2).unwrap()] {
        for eta in [0.0, 100.0] {
            let run = |v| bbicgstab_solve(&a, &m, &b, None, &alg, &cfg(v, eta), WorldConfig::default()).unwrap();
            let (adaptive, pipelined) = (run(BicgstabVariant::Adaptive), run(BicgstabVariant::Pipelined));
            let (ha, hp) = (adaptive.report.frobenius_history(), pipelined.report.frobenius_history());
            assert_eq!(ha.len(), hp.len(), "{alg} eta={eta}");
            for (x, y) in ha.iter().zip(&hp) {
                assert!((x - y).abs() <= 1e-8 * x, "{alg} eta={eta}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn pipelined_overlaps_both_reduction_groups() {
    let adaptive = sync_count_audit(BicgstabVariant::Adaptive, 16).unwrap();
    let pipelined = sync_count_audit(BicgstabVariant::Pipelined, 16).unwrap();
    assert!(!adaptive.is_empty() && !pipelined.is_empty());
    for c in &adaptive {
        assert!(c.reductions_waited >= 3, "{c:?}");
        assert_eq!(c.overlapped_reductions, 0, "{c:?}");
    }
    for c in &pipelined {
        assert_eq!(c.reductions_waited, 2, "{c:?}");
        assert_eq!(c.overlapped_reductions, 2, "{c:?}");
    }
}

#[test]
fn pipelined_iterations_are_cheaper_on_many_ranks() {
    let a = convection_diffusion(24, 20.0, 10.0);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 4, 1);
    let alg = AlgebraSpec::block(4).unwrap();
    let world = WorldConfig::with_ranks(16);
    let per_iteration = |v| {
        let c = BicgstabConfig { tolerance: 1e-300, max_iter: 12, ..cfg(v, 0.0) };
        let r = bbicgstab_solve(&a, &m, &b, None, &alg, &c, world).unwrap().report;
        let t = |k: usize| r.records[k].virtual_time_us;
        (t(r.iterations()) - t(2)) / (r.iterations() - 2) as f64
    };
    let (ta, tp) = (per_iteration(BicgstabVariant::Adaptive), per_iteration(BicgstabVariant::Pipelined));
    assert!(tp < ta, "pipelined {tp} us vs adaptive {ta} us per iteration");
    let t_red = world.latency.t_red(16);
    assert!(ta - tp > t_red, "saving {} below one reduction latency {t_red}", ta - tp);
}

#[test]
fn singular_shadow_product_is_a_breakdown() {
    let a = SparseOperator::from_dense(2, &[0.0, 1.0, -1.0, 0.0]).unwrap();
    let b = BlockVector::from_row_major(2, 1, vec![1.0, 0.0]).unwrap();
    let alg = AlgebraSpec::parallel(1).unwrap();
    for variant in BicgstabVariant::ALL {
        let err = bbicgstab_solve(&a, &Preconditioner::identity(2), &b, None, &alg, &cfg(variant, 0.0), WorldConfig::default()).unwrap_err();
        match err {
            SolverError::Breakdown { iteration, .. } => assert_eq!(iteration, 0, "{variant:?}"),
            other => panic!("{variant:?}: {other}"),
        }
    }
}

#[test]
fn seeded_random_shadow_converges() {
    let a = convection_diffusion(10, 5.0, 5.0);
    let m = jacobi(&a);
    let b = generate_rhs(a.n(), 2, 9);
    let alg = AlgebraSpec::block(2).unwrap();
    let c = BicgstabConfig { shadow: ShadowChoice::SeededRandom { seed: 17 }, ..cfg(BicgstabVariant::Pipelined, 100.0) };
    let out = bbicgstab_solve(&a, &m, &b, None, &alg, &c, WorldConfig::default()).unwrap();
    assert!(out.report.converged);
    assert!(true_residual(&a, &b, &out.x).frobenius_norm() < 1e-9 * b.frobenius_norm());
}

#[test]
fn storage_counts_block_vectors() {
    let a = convection_diffusion(6, 1.0, 1.0);
    let b = generate_rhs(a.n(), 2, 1);
    let alg = AlgebraSpec::block(2).unwrap();
    for (variant, expected) in [(BicgstabVariant::Adaptive, 10), (BicgstabVariant::Pipelined, 11)] {
        let out = bbicgstab_solve(&a, &jacobi(&a), &b, None, &alg, &cfg(variant, 100.0), WorldConfig::default()).unwrap();
        assert_eq!(out.report.allocated_block_vectors, expected);
    }
}

#[test]
fn negative_eta_is_rejected() {
    let a = SparseOperator::identity(4);
    let b = generate_rhs(4, 1, 1);
    let alg = AlgebraSpec::parallel(1).unwrap();
    let c = cfg(BicgstabVariant::Adaptive, -1.0);
    assert!(matches!(bbicgstab_solve(&a, &Preconditioner::identity(4), &b, None, &alg, &c, WorldConfig::default()), Err(SolverError::Input(_))));
}

#[test]
fn variant_labels_round_trip() {
    for v in BicgstabVariant::ALL {
        assert_eq!(BicgstabVariant::parse(v.label()), Some(v));
    }
    assert_eq!(BicgstabVariant::parse("nope"), None);
}
