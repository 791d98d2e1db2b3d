mod common;

use lqprox::dense::{dense_value_params, solve_dense};
use lqprox::io::generate::InitKind;
use lqprox::parallel::{
    assemble_consensus, leg_backward, make_partition, LegValue, ParallelSolver, Partition,
    PartitionStrategy,
};
use lqprox::parametric::{ParametricData, ParametricStage};
use lqprox::riccati::{solve_serial, StageKernel};
use lqprox::{kkt_residual, solve_parallel, InitialCondition, LqError};
use nalgebra::{DMatrix, DVector};

#[test]
fn matches_serial_for_several_leg_counts() {
    for (seed, init) in [(1, InitKind::Fixed), (2, InitKind::Constrained { ng: 4 }), (3, InitKind::Constrained { ng: 2 })] {
        for nc in [0, 2] {
            let p = common::problem_with(seed, 64, (4, 3, nc), seed == 3, init);
            let prox = common::random_prox(&p, 1e-2, seed);
            let serial = solve_serial(&p, &prox, StageKernel::BlockSparse).unwrap();
            for j in [1, 2, 4, 8] {
                let par = solve_parallel(&p, &prox, j).unwrap();
                let d = par.rel_diff(&serial);
                assert!(d <= 1e-8, "seed {seed} nc {nc} J {j}: {d:e}");
            }
        }
    }
}

#[test]
fn worked_two_stage_problem_matches_oracle() {
    let p = common::problem(5, 2, 2, 1, 1);
    let prox = common::random_prox(&p, 0.5, 5);
    let par = solve_parallel(&p, &prox, 1).unwrap();
    let dense = solve_dense(&p, &prox).unwrap();
    assert!(par.rel_diff(&dense) <= 1e-10);
}

#[test]
fn unit_length_legs() {
    let p = common::problem_with(9, 12, (3, 2, 1), false, InitKind::Constrained { ng: 3 });
    let prox = common::random_prox(&p, 1e-3, 9);
    let serial = solve_serial(&p, &prox, StageKernel::Dense).unwrap();
    let part = Partition::from_indices(12, (0..12).collect()).unwrap();
    let solver = ParallelSolver::new(part, 3, StageKernel::Dense).unwrap();
    let par = solver.solve(&p, &prox).unwrap();
    assert!(par.rel_diff(&serial) <= 1e-8);
    let r = kkt_residual(&p, Some(&prox), &par).unwrap();
    assert!(r.max() <= 1e-9, "{r:?}");
}

#[test]
fn uneven_partitions_agree() {
    let p = common::problem(13, 30, 3, 2, 1);
    let prox = common::random_prox(&p, 1e-2, 13);
    let serial = solve_serial(&p, &prox, StageKernel::BlockSparse).unwrap();
    for idx in [vec![0, 1], vec![0, 28], vec![0, 3, 4, 20, 29], vec![0, 10, 11, 12]] {
        let part = Partition::from_indices(30, idx.clone()).unwrap();
        let par = ParallelSolver::new(part, 2, StageKernel::BlockSparse).unwrap().solve(&p, &prox).unwrap();
        assert!(par.rel_diff(&serial) <= 1e-8, "{idx:?}");
    }
}

#[test]
fn bitwise_identical_across_worker_counts() {
    let p = common::problem(21, 40, 4, 2, 1);
    let prox = common::random_prox(&p, 1e-2, 21);
    let part = make_partition(40, 4, PartitionStrategy::Equal).unwrap();
    let reference = ParallelSolver::new(part.clone(), 1, StageKernel::BlockSparse)
        .unwrap()
        .solve(&p, &prox)
        .unwrap();
    for w in [2, 3, 8] {
        let sol = ParallelSolver::new(part.clone(), w, StageKernel::BlockSparse)
            .unwrap()
            .solve(&p, &prox)
            .unwrap();
        assert_eq!(sol, reference, "workers = {w}");
    }
}

#[test]
fn first_leg_value_matches_schur_complement() {
    // J = 1, N = 2: leg 0 is the single open stage t* = 0 coupled through λ_1
    let p = common::problem(4, 2, 3, 2, 1);
    let prox = common::random_prox(&p, 0.3, 4);
    let part = make_partition(2, 1, PartitionStrategy::Equal).unwrap();
    let leg = leg_backward(&p, &prox, &part, 0, StageKernel::BlockSparse).unwrap();

    // the same leg as a one-stage parametric problem whose only dynamics are dualized
    let s = &p.stages[0];
    let mut one = p.clone();
    one.stages.truncate(1);
    let mut st = one.stages[0].clone();
    st.A = DMatrix::zeros(3, 3);
    st.B = DMatrix::zeros(3, 2);
    st.f = DVector::zeros(3);
    one.stages[0] = st;
    one.terminal = lqprox::TerminalData::unconstrained(DMatrix::zeros(3, 3), DVector::zeros(3));
    let mut params = ParametricData::new(1, 3);
    params.stages[0] = Some(ParametricStage {
        Phi: s.A.transpose(),
        Psi: s.B.transpose(),
        Gamma: -DMatrix::identity(3, 3) * prox.mu,
        gamma: &s.f + &prox.lam_e[1] * prox.mu,
    });
    let mut oprox = lqprox::ProximalState::zeros(&one, prox.mu).unwrap();
    oprox.nu_e[0] = prox.nu_e[0].clone();
    let dv = dense_value_params(&one, &oprox, &params).unwrap();
    let v = &leg.value;
    assert!((&v.Ptilde - &dv.P).amax() <= 1e-10);
    assert!((&v.ptilde - &dv.p).amax() <= 1e-10);
    assert!((&v.Lambdatilde - &dv.Lambda).amax() <= 1e-10);
    assert!((&v.sigmatilde - &dv.sigma).amax() <= 1e-10);
    assert!((&v.Sigmatilde - &dv.Sigma).amax() <= 1e-10, "{} vs {}", v.Sigmatilde, dv.Sigma);

    let last = leg_backward(&p, &prox, &part, 1, StageKernel::BlockSparse).unwrap();
    assert_eq!(last.value.Lambdatilde.amax(), 0.0);
    assert_eq!(last.value.Sigmatilde.amax(), 0.0);
    assert_eq!(last.value.sigmatilde.amax(), 0.0);
}

fn leg(nx: usize, v: f64) -> LegValue {
    LegValue {
        Ptilde: DMatrix::identity(nx, nx) * v,
        ptilde: DVector::from_element(nx, v),
        Lambdatilde: DMatrix::identity(nx, nx) * (v + 0.5),
        Sigmatilde: DMatrix::identity(nx, nx) * -v,
        sigmatilde: DVector::from_element(nx, -v),
        Etilde: -DMatrix::identity(nx, nx),
    }
}

#[test]
fn consensus_layouts() {
    let legs = [leg(2, 1.0), leg(2, 2.0)];
    let gm = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let g = DVector::from_element(1, 0.25);
    let init = InitialCondition::Constrained { G: gm.clone(), g: g.clone() };
    let c = assemble_consensus(&legs, &init, None, 0.1).unwrap();
    let m = &c.matrix;
    assert_eq!(m.block_sizes(), vec![1, 2, 2, 2]);
    assert_eq!(m.diag[0], DMatrix::from_element(1, 1, -0.1));
    assert_eq!(m.diag[1], legs[0].Ptilde);
    assert_eq!(m.diag[2], legs[0].Sigmatilde);
    assert_eq!(m.diag[3], legs[1].Ptilde);
    assert_eq!(m.sup, vec![gm, legs[0].Lambdatilde.clone(), legs[0].Etilde.clone()]);
    assert_eq!(c.rhs, vec![g, legs[0].ptilde.clone(), legs[0].sigmatilde.clone(), legs[1].ptilde.clone()]);
    let d = m.to_dense();
    assert_eq!(d, d.transpose());

    let x0 = DVector::from_vec(vec![1.0, -2.0]);
    let c = assemble_consensus(&legs, &InitialCondition::Fixed(x0.clone()), None, 0.1).unwrap();
    assert_eq!(c.matrix.block_sizes(), vec![2, 2]);
    assert_eq!(c.matrix.diag, vec![legs[0].Sigmatilde.clone(), legs[1].Ptilde.clone()]);
    assert_eq!(c.matrix.sup, vec![legs[0].Etilde.clone()]);
    assert_eq!(c.rhs[0], &legs[0].sigmatilde + legs[0].Lambdatilde.transpose() * x0);
}

#[test]
fn cyclic_problems_are_rejected() {
    let p = common::problem_with(1, 10, (2, 1, 0), false, InitKind::Cyclic);
    let prox = lqprox::ProximalState::zeros(&p, 1e-3).unwrap();
    assert!(matches!(solve_parallel(&p, &prox, 2), Err(LqError::Unsupported(_))));
}

#[test]
fn consensus_unknowns_are_the_serial_boundary_values() {
    let p = common::problem_with(31, 24, (3, 2, 1), true, InitKind::Constrained { ng: 2 });
    let prox = common::random_prox(&p, 1e-2, 31);
    let part = make_partition(24, 3, PartitionStrategy::Equal).unwrap();
    let legs: Vec<LegValue> = (0..=3)
        .map(|j| leg_backward(&p, &prox, &part, j, StageKernel::BlockSparse).unwrap().value)
        .collect();
    let g0 = lqprox::shift_rhs(&p, &prox).unwrap().g0;
    let c = assemble_consensus(&legs, &p.init, g0.as_ref(), prox.mu).unwrap();
    let rhs: Vec<DVector<f64>> = c.rhs.iter().map(|v| -v).collect();
    let z = c.matrix.factor_udut().unwrap().solve(&rhs).unwrap();

    let stacked = |v: &[DVector<f64>]| {
        DVector::from_iterator(v.iter().map(|b| b.len()).sum(), v.iter().flat_map(|b| b.iter().copied()))
    };
    let m = c.matrix.to_dense();
    let res = &m * stacked(&z) + stacked(&c.rhs);
    assert!(res.amax() <= 1e-10, "{:e}", res.amax());

    // (λ_0, x_0, λ_{i_1}, x_{i_1}, …, x_{i_J})
    let serial = solve_serial(&p, &prox, StageKernel::BlockSparse).unwrap();
    let idx = part.indices();
    let mut want = vec![serial.lam[0].clone(), serial.x[0].clone()];
    for &i in &idx[1..] {
        want.push(serial.lam[i].clone());
        want.push(serial.x[i].clone());
    }
    assert!(lqprox::linalg::rel_diff(&z, &want) <= 1e-8);
}

#[test]
fn boundary_dynamics_hold_like_interior_rows() {
    let p = common::problem_with(8, 40, (4, 2, 1), true, InitKind::Fixed);
    let prox = common::random_prox(&p, 1e-2, 8);
    let sh = lqprox::shift_rhs(&p, &prox).unwrap();
    let part = make_partition(40, 5, PartitionStrategy::Equal).unwrap();
    let sol = ParallelSolver::new(part.clone(), 2, StageKernel::BlockSparse).unwrap().solve(&p, &prox).unwrap();
    let row = |t: usize| {
        let s = &p.stages[t];
        (&s.A * &sol.x[t] + &s.B * &sol.u[t] + &s.E * &sol.x[t + 1] + &sh.f[t] - &sol.lam[t + 1] * prox.mu).amax()
    };
    let interior = (0..40).map(row).fold(0.0, f64::max);
    for &i in &part.indices()[1..] {
        assert!(row(i - 1) <= 1e-10, "boundary {i}: {:e}", row(i - 1));
    }
    assert!(interior <= 1e-10);
}
