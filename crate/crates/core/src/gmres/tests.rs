use super::*;
use crate::blocklinalg::{convection_diffusion, generate_rhs, PreconditionerKind, SparseOperator};
use crate::comms::Machine;
use crate::salgebra::SElement;

const STRATEGIES: [OrthoStrategy; 5] =
    [OrthoStrategy::Modified, OrthoStrategy::Classical(1), OrthoStrategy::Classical(2), OrthoStrategy::Pipelined(3), OrthoStrategy::Localized];

fn cfg(strategy: OrthoStrategy) -> GmresConfig {
    GmresConfig { strategy, tolerance: 1e-10, ..GmresConfig::default() }
}

fn preconditioned_residual(a: &SparseOperator, m: &Preconditioner, b: &BlockVector, x: &BlockVector) -> BlockVector {
    let mut ax = BlockVector::zeros(a.n(), b.s());
    a.apply_into(x, &mut ax);
    let r = b.difference(&ax);
    m.apply(&r, &mut Default::default()).unwrap()
}

#[test]
fn identity_operator_converges_in_one_step() {
    let a = SparseOperator::identity(40);
    let b = generate_rhs(40, 4, 1);
    for strategy in STRATEGIES {
        for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::parallel(4).unwrap(), AlgebraSpec::global(4).unwrap()] {
            let c = GmresConfig { restart: 5, ..cfg(strategy) };
            let out = bgmres_solve(&a, &Preconditioner::identity(40), &b, None, &alg, &c, WorldConfig::default()).unwrap();
            assert!(out.report.converged, "{strategy:?} {alg}");
            assert_eq!(out.report.iterations(), 1);
            assert!(out.x.sub_norm(&b) < 1e-13 * b.frobenius_norm());
        }
    }
}

#[test]
fn rotation_matrix_solved_in_two_steps() {
    let a = SparseOperator::from_dense(2, &[0.0, 1.0, -1.0, 0.0]).unwrap();
    let b = BlockVector::from_row_major(2, 1, vec![1.0, 0.0]).unwrap();
    let alg = AlgebraSpec::parallel(1).unwrap();
    for strategy in &STRATEGIES[..4] {
        let c = GmresConfig { restart: 2, ..cfg(*strategy) };
        let out = bgmres_solve(&a, &Preconditioner::identity(2), &b, None, &alg, &c, WorldConfig::default()).unwrap();
        assert!(out.report.converged);
        assert_eq!(out.report.iterations(), 2);
        assert!(out.x.get(0, 0).abs() < 1e-14 && (out.x.get(1, 0) - 1.0).abs() < 1e-14, "{strategy:?}");
    }
    let c = GmresConfig { restart: 2, ..cfg(OrthoStrategy::Localized) };
    let err = bgmres_solve(&a, &Preconditioner::identity(2), &b, None, &alg, &c, WorldConfig::default()).unwrap_err();
    assert!(matches!(err, SolverError::Input(_)), "{err}");
}

#[test]
fn residual_is_monotone_and_matches_explicit_residual() {
    let a = convection_diffusion(10, 20.0, -10.0);
    let m = Preconditioner::build(PreconditionerKind::Jacobi, &a).unwrap();
    let b = generate_rhs(a.n(), 4, 3);
    for alg in [AlgebraSpec::block(4).unwrap(), AlgebraSpec::block_parallel(4, 2).unwrap(), AlgebraSpec::block_global(4, 2).unwrap()] {
        for k in [1, 3, 7, 12, 20] {
            let c = GmresConfig { restart: 6, max_iter: k, tolerance: 1e-14, ..cfg(OrthoStrategy::Modified) };
            let out = bgmres_solve(&a, &m, &b, None, &alg, &c, WorldConfig::default()).unwrap();
            let explicit = preconditioned_residual(&a, &m, &b, &out.x).frobenius_norm();
            let reported = out.report.last().unwrap().frobenius;
            assert!((explicit - reported).abs() <= 1e-8 * explicit.max(1e-300), "{alg} k={k}: {explicit} vs {reported}");
            let h = out.report.frobenius_history();
            for w in h.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{alg}: {} > {}", w[1], w[0]);
            }
        }
    }
}

#[test]
fn strategies_agree_on_residual_histories() {
    let a = convection_diffusion(12, 10.0, 5.0);
    let m = Preconditioner::build(PreconditionerKind::Jacobi, &a).unwrap();
    let b = generate_rhs(a.n(), 4, 5);
    let alg = AlgebraSpec::block_parallel(4, 2).unwrap();
    let world = WorldConfig::with_ranks(2);
    let c = |s| GmresConfig { restart: 20, ..cfg(s) };
    let reference = bgmres_solve(&a, &m, &b, None, &alg, &c(OrthoStrategy::Modified), world).unwrap();
    assert!(reference.report.converged);
    let ref_hist = reference.report.frobenius_history();
    for strategy in STRATEGIES {
        let out = bgmres_solve(&a, &m, &b, None, &alg, &c(strategy), world).unwrap();
        assert!(out.report.converged, "{strategy:?}");
        assert_eq!(out.report.iterations(), reference.report.iterations(), "{strategy:?}");
        for (x, y) in out.report.frobenius_history().iter().zip(&ref_hist) {
            assert!((x - y).abs() <= 1e-6 * y, "{strategy:?}: {x} vs {y}");
        }
    }
}

fn random_operator(n: usize, seed: u64) -> SparseOperator {
    let vals = generate_rhs(n * n, 1, seed);
    let dense: Vec<f64> = (0..n * n).map(|i| vals.get(i, 0) + if i % (n + 1) == 0 { 3.0 } else { 0.0 }).collect();
    SparseOperator::from_dense(n, &dense).unwrap()
}

#[test]
fn arnoldi_relation_and_orthogonality() {
    let n = 200;
    let a = random_operator(n, 17);
    let m = Preconditioner::identity(n);
    let alg = AlgebraSpec::block(4).unwrap();
    for strategy in STRATEGIES {
        let mut machine = Machine::new(WorldConfig::with_ranks(2), n).unwrap();
        let mut process = ArnoldiProcess::new(&machine, alg, strategy, 8).unwrap();
        process.start(&mut machine, &generate_rhs(n, 4, 2)).unwrap();
        for _ in 0..8 {
            process.step(&mut machine, &a, &m).unwrap();
        }
        let basis = process.basis();
        let v = basis.vectors();
        for k in 0..8 {
            let mut av = BlockVector::zeros(n, 4);
            a.apply_into(&v[k], &mut av);
            let vh = arnoldi::combine(&v[..k + 2], basis.hessenberg_column(k));
            assert!(av.sub_norm(&vh) <= 1e-10 * av.frobenius_norm(), "{strategy:?} column {k}");
        }
        let loss = orthogonality_loss(v, &alg).unwrap();
        if matches!(strategy, OrthoStrategy::Modified | OrthoStrategy::Localized | OrthoStrategy::Classical(2)) {
            assert!(loss <= 1e-12, "{strategy:?}: {loss}");
        }
        for j in 0..8 {
            let r = basis.triangular_column(j);
            for (i, e) in r.iter().enumerate() {
                assert!(e.is_finite(), "{i}");
            }
        }
    }
}

#[test]
fn pipelined_with_full_lookahead_matches_classical_bitwise() {
    let n = 120;
    let a = random_operator(n, 3);
    let m = Preconditioner::identity(n);
    let alg = AlgebraSpec::block_parallel(4, 2).unwrap();
    let run = |strategy| {
        let mut machine = Machine::new(WorldConfig::with_ranks(4), n).unwrap();
        let mut process = ArnoldiProcess::new(&machine, alg, strategy, 6).unwrap();
        process.start(&mut machine, &generate_rhs(n, 4, 9)).unwrap();
        for _ in 0..6 {
            process.step(&mut machine, &a, &m).unwrap();
        }
        (0..6).map(|j| process.basis().hessenberg_column(j).to_vec()).collect::<Vec<Vec<SElement>>>()
    };
    assert_eq!(run(OrthoStrategy::Pipelined(50)), run(OrthoStrategy::Classical(1)));
}

#[test]
fn message_accounting_per_step() {
    let n = 256;
    let a = random_operator(n, 5);
    let m = Preconditioner::identity(n);
    let alg = AlgebraSpec::block(2).unwrap();
    for strategy in [OrthoStrategy::Modified, OrthoStrategy::Classical(1), OrthoStrategy::Classical(2), OrthoStrategy::Pipelined(2), OrthoStrategy::Localized] {
        let mut machine = Machine::new(WorldConfig::with_ranks(8), n).unwrap();
        let mut process = ArnoldiProcess::new(&machine, alg, strategy, 7).unwrap();
        process.start(&mut machine, &generate_rhs(n, 2, 1)).unwrap();
        for k in 0..7 {
            let before = machine.world().counters();
            process.step(&mut machine, &a, &m).unwrap();
            let d = machine.world().counters().since(&before);
            let basis_len = k + 1;
            match strategy {
                OrthoStrategy::Modified => assert_eq!((d.reductions_waited, d.tsqr), (basis_len as u64 + 1, 1)),
                OrthoStrategy::Classical(it) => assert_eq!((d.reductions_waited, d.tsqr), (it as u64 + 1, 1)),
                OrthoStrategy::Pipelined(r) => {
                    assert_eq!((d.reductions_waited, d.tsqr), (basis_len as u64 + 1, 1));
                    assert!(d.max_in_flight as usize <= r + 1);
                    if basis_len > 1 {
                        assert!(d.overlapped_reductions > 0);
                    }
                }
                OrthoStrategy::Localized => {
                    assert_eq!((d.reductions_waited, d.tree_reductions, d.backprops, d.tsqr), (0, 1, 1, 0));
                }
            }
        }
        if let OrthoStrategy::Pipelined(r) = strategy {
            assert_eq!(machine.world().counters().max_in_flight as usize, r + 1);
        }
    }
}

#[test]
fn classical_single_pass_loses_orthogonality_on_graded_blocks() {
    let (n, s, count) = (256, 2, 10);
    let blocks = graded_power_blocks(n, s, count, 1e3, 7);
    let alg = AlgebraSpec::block(s).unwrap();
    let loss = |strategy| {
        let mut machine = Machine::new(WorldConfig::with_ranks(4), n).unwrap();
        let mut process = ArnoldiProcess::new(&machine, alg, strategy, count - 1).unwrap();
        process.start(&mut machine, &blocks[0]).unwrap();
        for w in &blocks[1..] {
            process.extend(&mut machine, w).unwrap();
        }
        orthogonality_loss(process.basis().vectors(), &alg).unwrap()
    };
    let cgs1 = loss(OrthoStrategy::Classical(1));
    for strategy in [OrthoStrategy::Modified, OrthoStrategy::Classical(2), OrthoStrategy::Localized] {
        let other = loss(strategy);
        assert!(cgs1 >= 1e3 * other, "{strategy:?}: {other} vs classical(1) {cgs1}");
    }
}

#[test]
fn larger_groups_do_not_need_more_iterations() {
    let a = convection_diffusion(16, 30.0, 10.0);
    let m = Preconditioner::build(PreconditionerKind::Jacobi, &a).unwrap();
    let b = generate_rhs(a.n(), 8, 11);
    let mut previous = usize::MAX;
    for p in [1, 2, 4, 8] {
        let alg = AlgebraSpec::block_parallel(8, p).unwrap();
        let out = bgmres_solve(&a, &m, &b, None, &alg, &GmresConfig { tolerance: 1e-8, ..cfg(OrthoStrategy::Classical(2)) }, WorldConfig::default()).unwrap();
        assert!(out.report.converged);
        assert!(out.report.iterations() <= previous, "p={p}: {} > {previous}", out.report.iterations());
        previous = out.report.iterations();
    }
}

#[test]
fn restarts_continue_from_the_current_iterate() {
    let a = convection_diffusion(10, 5.0, 5.0);
    let m = Preconditioner::identity(a.n());
    let b = generate_rhs(a.n(), 2, 4);
    let alg = AlgebraSpec::block(2).unwrap();
    let c = GmresConfig { restart: 5, ..cfg(OrthoStrategy::Classical(2)) };
    let out = bgmres_solve(&a, &m, &b, None, &alg, &c, WorldConfig::default()).unwrap();
    assert!(out.report.converged);
    assert_eq!(out.report.restarts, (out.report.iterations() - 1) / 5);
    assert!(preconditioned_residual(&a, &m, &b, &out.x).frobenius_norm() < 1e-9 * b.frobenius_norm());
}

#[test]
fn strategy_labels_round_trip() {
    for strategy in STRATEGIES {
        assert_eq!(OrthoStrategy::parse(&strategy.label()), Some(strategy));
    }
    assert_eq!(OrthoStrategy::parse("classical"), Some(OrthoStrategy::Classical(2)));
    assert_eq!(OrthoStrategy::parse("pipelined"), Some(OrthoStrategy::Pipelined(3)));
    assert_eq!(OrthoStrategy::parse("classical:3"), None);
    assert_eq!(OrthoStrategy::parse("pipelined:0"), None);
}
