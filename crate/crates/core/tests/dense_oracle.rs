mod common;

use lqprox::dense::{assemble, solve_dense, VarKind};
use lqprox::io::generate::InitKind;
use lqprox::problem::shift_rhs;
use lqprox::{kkt_residual, InitialCondition, LqProblem, ProximalState, Solution, StageData, TerminalData};
use nalgebra::{DMatrix, DVector};

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn v1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn scalar_stage(q: f64, r: f64, s: f64, a: f64, b: f64, e: f64, f: f64) -> StageData {
    let mut st = StageData::explicit(m1(q), m1(s), m1(r), m1(a), m1(b));
    st.E = m1(e);
    st.f = v1(f);
    st
}

#[test]
fn smallest_instance_is_three_by_three() {
    let p = LqProblem::new(
        1,
        1,
        vec![scalar_stage(1.0, 1.0, 0.0, 1.0, 1.0, -1.0, 0.0)],
        TerminalData::unconstrained(m1(1.0), v1(0.0)),
        InitialCondition::Fixed(v1(1.0)),
    )
    .unwrap();
    let prox = ProximalState::zeros(&p, 1.0).unwrap();
    let kkt = assemble(&p, &prox).unwrap();
    let kinds: Vec<VarKind> = kkt.layout.entries.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![VarKind::Control, VarKind::CoState, VarKind::State]);
    assert_eq!(
        kkt.matrix,
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, -1.0, -1.0, 0.0, -1.0, 1.0])
    );
    // f̄ + A x0 = 1
    assert_eq!(kkt.rhs, DVector::from_vec(vec![0.0, 1.0, 0.0]));

    // hand solve of [1 1 0; 1 −1 −1; 0 −1 1] z = −[0; 1; 0]
    let sol = solve_dense(&p, &prox).unwrap();
    let expect = [(&sol.u[0], -1.0 / 3.0), (&sol.lam[1], 1.0 / 3.0), (&sol.x[1], 1.0 / 3.0)];
    for (got, want) in expect {
        assert!((got[0] - want).abs() <= 1e-14, "{} vs {want}", got[0]);
    }
    assert_eq!(sol.x[0], v1(1.0));
}

#[test]
fn two_stage_assembly_by_hand() {
    // N = 2, scalar, one path constraint at stage 1, constrained x0
    let s0 = scalar_stage(2.0, 3.0, 0.5, 1.5, 0.7, -1.0, 0.1);
    let mut s1 = scalar_stage(4.0, 5.0, -0.25, 0.9, -0.3, -1.2, -0.2);
    s1 = s1.with_constraints(m1(0.6), m1(-0.8), v1(0.05));
    s1.q = v1(0.3);
    s1.r = v1(-0.4);
    let mut term = TerminalData::unconstrained(m1(6.0), v1(0.2));
    term.C = m1(1.1);
    term.h = v1(-0.15);
    let p = LqProblem::new(
        1,
        1,
        vec![s0, s1],
        term,
        InitialCondition::Constrained { G: m1(-2.0), g: v1(0.5) },
    )
    .unwrap();
    let mu = 0.25;
    let mut prox = ProximalState::zeros(&p, mu).unwrap();
    prox.lam_e = vec![v1(0.4), v1(-1.0), v1(2.0)];
    prox.nu_e = vec![DVector::zeros(0), v1(3.0), v1(-4.0)];
    let kkt = assemble(&p, &prox).unwrap();

    // order: λ0, x0, u0, λ1, x1, u1, ν1, λ2, x2, ν2
    let order = [
        (VarKind::InitMultiplier, 0),
        (VarKind::State, 0),
        (VarKind::Control, 0),
        (VarKind::CoState, 1),
        (VarKind::State, 1),
        (VarKind::Control, 1),
        (VarKind::PathMultiplier, 1),
        (VarKind::CoState, 2),
        (VarKind::State, 2),
        (VarKind::PathMultiplier, 2),
    ];
    let idx: Vec<usize> = order
        .iter()
        .map(|&(k, t)| kkt.layout.find(k, t).unwrap_or_else(|| panic!("{k:?} {t}")).start)
        .collect();
    assert_eq!(idx, (0..10).collect::<Vec<_>>());

    let mut want = DMatrix::zeros(10, 10);
    let mut set = |i: usize, j: usize, v: f64| {
        want[(i, j)] = v;
        want[(j, i)] = v;
    };
    set(0, 0, -mu);
    set(0, 1, -2.0);
    set(1, 1, 2.0);
    set(1, 2, 0.5);
    set(2, 2, 3.0);
    set(1, 3, 1.5);
    set(2, 3, 0.7);
    set(3, 3, -mu);
    set(3, 4, -1.0);
    set(4, 4, 4.0);
    set(4, 5, -0.25);
    set(5, 5, 5.0);
    set(4, 6, 0.6);
    set(5, 6, -0.8);
    set(6, 6, -mu);
    set(4, 7, 0.9);
    set(5, 7, -0.3);
    set(7, 7, -mu);
    set(7, 8, -1.2);
    set(8, 8, 6.0);
    set(8, 9, 1.1);
    set(9, 9, -mu);
    assert_eq!(kkt.matrix, want);

    let s = shift_rhs(&p, &prox).unwrap();
    let rhs = DVector::from_vec(vec![
        s.g0.unwrap()[0],
        0.0,
        0.0,
        s.f[0][0],
        0.3,
        -0.4,
        s.h[1][0],
        s.f[1][0],
        0.2,
        s.h[2][0],
    ]);
    assert_eq!(kkt.rhs, rhs);
    assert_eq!(rhs[0], 0.5 + mu * 0.4);
    assert_eq!(rhs[3], 0.1 + mu * -1.0);
}

#[test]
fn assembled_matrix_is_exactly_symmetric() {
    for seed in 0..5 {
        let p = common::problem_with(seed, 6, (4, 2, 2), true, InitKind::Constrained { ng: 2 });
        let prox = common::random_prox(&p, 1e-3, seed);
        let m = assemble(&p, &prox).unwrap().matrix;
        assert_eq!(&m - m.transpose(), DMatrix::zeros(m.nrows(), m.ncols()));
    }
}

#[test]
fn homogeneous_problem_gives_zero_solution() {
    let mut p = common::problem(3, 5, 3, 2, 1);
    for st in &mut p.stages {
        st.q.fill(0.0);
        st.r.fill(0.0);
        st.f.fill(0.0);
        st.h.fill(0.0);
    }
    p.terminal.q.fill(0.0);
    p.terminal.h.fill(0.0);
    p.init = InitialCondition::Fixed(DVector::zeros(3));
    let prox = ProximalState::zeros(&p, 0.1).unwrap();
    let sol = solve_dense(&p, &prox).unwrap();
    assert_eq!(sol, Solution::zeros(&p));
}

#[test]
fn residual_postcondition_on_random_instances() {
    for seed in 0..20 {
        let init = if seed % 2 == 0 { InitKind::Fixed } else { InitKind::Constrained { ng: 2 } };
        let p = common::problem_with(seed, 1 + (seed as usize * 7) % 30, (4, 3, 2), seed % 3 == 0, init);
        let prox = common::random_prox(&p, [1.0, 1e-2, 1e-4][seed as usize % 3], seed);
        let kkt = assemble(&p, &prox).unwrap();
        let sol = solve_dense(&p, &prox).unwrap();
        let r = kkt_residual(&p, Some(&prox), &sol).unwrap();
        assert!(r.max() <= 1e-9 * (1.0 + kkt.rhs.amax()), "seed {seed}: {r:?}");
    }
}

#[test]
fn matrix_is_block_banded() {
    let (nx, nu, nc) = (3, 2, 2);
    let p = common::problem_with(4, 8, (nx, nu, nc), true, InitKind::Constrained { ng: 3 });
    let prox = ProximalState::zeros(&p, 1e-2).unwrap();
    let m = assemble(&p, &prox).unwrap().matrix;
    let band = 2 * nx + nu + nc;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i.abs_diff(j) > band {
                assert_eq!(m[(i, j)], 0.0, "({i},{j})");
            }
        }
    }
}
