mod common;

use lqprox::dense::solve_dense;
use lqprox::io::generate::InitKind;
use lqprox::problem::raw_rhs;
use lqprox::{
    kkt_residual, shift_rhs, InitialCondition, LqError, LqProblem, ProximalState, Solution,
    StageData, TerminalData,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn v1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn scalar_constrained(g: f64) -> LqProblem {
    let st = StageData::explicit(m1(1.0), m1(0.0), m1(1.0), m1(1.0), m1(1.0));
    LqProblem::new(
        1,
        1,
        vec![st],
        TerminalData::unconstrained(m1(1.0), v1(0.0)),
        InitialCondition::Constrained { G: m1(-1.0), g: v1(g) },
    )
    .unwrap()
}

#[test]
fn shifted_initial_rhs() {
    let p = scalar_constrained(1.0);
    let mut prox = ProximalState::zeros(&p, 2.0).unwrap();
    prox.lam_e[0] = v1(3.0);
    let s = shift_rhs(&p, &prox).unwrap();
    assert_eq!(s.g0, Some(v1(7.0)));
}

#[test]
fn zero_estimates_leave_rhs_unchanged() {
    let p = common::problem_with(3, 6, (3, 2, 2), false, InitKind::Constrained { ng: 2 });
    for mu in [1e-8, 1.0, 37.0] {
        let prox = ProximalState::zeros(&p, mu).unwrap();
        assert_eq!(shift_rhs(&p, &prox).unwrap(), raw_rhs(&p));
    }
}

#[test]
fn shift_matches_direct_recomputation() {
    let p = common::problem_with(8, 7, (3, 2, 2), true, InitKind::Constrained { ng: 3 });
    let prox = common::random_prox(&p, 0.37, 8);
    let s = shift_rhs(&p, &prox).unwrap();
    let InitialCondition::Constrained { g, .. } = &p.init else { unreachable!() };
    for i in 0..g.len() {
        assert_eq!(s.g0.as_ref().unwrap()[i], g[i] + 0.37 * prox.lam_e[0][i]);
    }
    for t in 0..7 {
        for i in 0..3 {
            assert_eq!(s.f[t][i], p.stages[t].f[i] + 0.37 * prox.lam_e[t + 1][i]);
        }
        for i in 0..p.stages[t].nc() {
            assert_eq!(s.h[t][i], p.stages[t].h[i] + 0.37 * prox.nu_e[t][i]);
        }
    }
    for i in 0..p.terminal.nc() {
        assert_eq!(s.h[7][i], p.terminal.h[i] + 0.37 * prox.nu_e[7][i]);
    }
}

#[test]
fn shift_reports_bad_dimensions() {
    let p = common::problem(1, 4, 3, 2, 1);
    let mut prox = ProximalState::zeros(&p, 1.0).unwrap();
    prox.lam_e[2] = DVector::zeros(2);
    let err = shift_rhs(&p, &prox).unwrap_err();
    assert!(matches!(err, LqError::DimensionMismatch { .. }));
    assert!(err.to_string().contains("lam_e[2]"), "{err}");
}

#[test]
fn invalid_mu_is_rejected() {
    let p = common::problem(1, 2, 2, 1, 0);
    for mu in [0.0, -1.0, f64::NAN] {
        assert!(matches!(ProximalState::zeros(&p, mu), Err(LqError::InvalidMu(_))));
    }
}

#[test]
fn oracle_solution_has_tiny_residual() {
    for (seed, init) in [(2, InitKind::Fixed), (4, InitKind::Constrained { ng: 3 }), (6, InitKind::Constrained { ng: 1 })] {
        let p = common::problem_with(seed, 10, (3, 2, 2), seed == 4, init);
        let prox = common::random_prox(&p, 0.1, seed);
        let sol = solve_dense(&p, &prox).unwrap();
        let r = kkt_residual(&p, Some(&prox), &sol).unwrap();
        assert!(r.stationarity <= 1e-10 && r.feasibility <= 1e-10, "{r:?}");
    }
}

#[test]
fn zero_problem_has_zero_residual() {
    let nx = 2;
    let nu = 1;
    let st = StageData::explicit(
        DMatrix::identity(nx, nx),
        DMatrix::zeros(nx, nu),
        DMatrix::identity(nu, nu),
        DMatrix::identity(nx, nx),
        DMatrix::from_element(nx, nu, 1.0),
    )
    .with_constraints(DMatrix::from_element(1, nx, 1.0), m1(1.0), v1(0.0));
    let p = LqProblem::new(
        nx,
        nu,
        vec![st; 3],
        TerminalData::unconstrained(DMatrix::identity(nx, nx), DVector::zeros(nx)),
        InitialCondition::Constrained { G: -DMatrix::identity(nx, nx), g: DVector::zeros(nx) },
    )
    .unwrap();
    let prox = ProximalState::zeros(&p, 0.5).unwrap();
    let sol = Solution::zeros(&p);
    let r = kkt_residual(&p, Some(&prox), &sol).unwrap();
    assert_eq!((r.stationarity, r.feasibility), (0.0, 0.0));
    assert_eq!(kkt_residual(&p, None, &sol).unwrap().max(), 0.0);
}

#[test]
fn control_perturbation_shows_in_stationarity() {
    let p = common::problem(12, 5, 3, 2, 1);
    let prox = common::random_prox(&p, 0.2, 12);
    let mut sol = solve_dense(&p, &prox).unwrap();
    let t = 2;
    let delta = 1e-3;
    sol.u[t][0] += delta;
    let r = kkt_residual(&p, Some(&prox), &sol).unwrap();
    // row 0 of the u_t stationarity block changes by R[0,0]·δ
    let expected = p.stages[t].R[(0, 0)] * delta;
    assert!(r.stationarity >= 0.99 * expected, "{} < {}", r.stationarity, expected);
}

#[test]
fn fixed_mode_checks_initial_state() {
    let p = common::problem(5, 3, 2, 1, 0);
    let prox = ProximalState::zeros(&p, 1.0).unwrap();
    let mut sol = solve_dense(&p, &prox).unwrap();
    assert_eq!(sol.lam[0].amax(), 0.0);
    sol.x[0][1] += 0.25;
    let r = kkt_residual(&p, Some(&prox), &sol).unwrap();
    assert!(r.feasibility >= 0.25);
}

#[test]
fn residual_rejects_wrong_shapes() {
    let p = common::problem(5, 3, 2, 1, 1);
    let mut sol = Solution::zeros(&p);
    sol.u.pop();
    assert!(kkt_residual(&p, None, &sol).is_err());
}

#[test]
fn asymmetric_costs_are_symmetrized_on_load() {
    let mut q = DMatrix::identity(2, 2);
    q[(0, 1)] = 0.2;
    let st = StageData::explicit(
        q,
        DMatrix::zeros(2, 1),
        m1(1.0),
        DMatrix::identity(2, 2),
        DMatrix::from_element(2, 1, 1.0),
    );
    let p = LqProblem::new(
        2,
        1,
        vec![st],
        TerminalData::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2)),
        InitialCondition::Fixed(DVector::zeros(2)),
    )
    .unwrap();
    assert_eq!(p.stages[0].Q[(0, 1)], 0.1);
    assert_eq!(p.stages[0].Q[(1, 0)], 0.1);
}

#[test]
fn problem_validation_names_field() {
    let mut p = common::problem(1, 3, 2, 1, 1);
    p.stages[1].D = DMatrix::zeros(1, 2);
    let err = p.validate().unwrap_err().to_string();
    assert!(err.contains("stages[1]") && err.contains('D'), "{err}");
}

fn scaled(prox: &ProximalState, k: f64) -> ProximalState {
    let mut out = prox.clone();
    out.lam_e.iter_mut().for_each(|v| *v *= k);
    out.nu_e.iter_mut().for_each(|v| *v *= k);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shift_is_affine_in_estimates(seed in 0u64..10_000, n in 1usize..8, mu in 1e-6f64..10.0) {
        let p = common::problem_with(seed, n, (3, 2, 2), false, InitKind::Constrained { ng: 2 });
        let prox = common::random_prox(&p, mu, seed);
        let zero = shift_rhs(&p, &scaled(&prox, 0.0)).unwrap();
        let one = shift_rhs(&p, &prox).unwrap();
        let two = shift_rhs(&p, &scaled(&prox, 2.0)).unwrap();
        let check = |a2: &DVector<f64>, a1: &DVector<f64>, a0: &DVector<f64>| {
            let lhs = a2 - a0;
            let rhs = (a1 - a0) * 2.0;
            (lhs - rhs).amax() <= 1e-12 * (1.0 + a2.amax())
        };
        prop_assert!(check(two.g0.as_ref().unwrap(), one.g0.as_ref().unwrap(), zero.g0.as_ref().unwrap()));
        for t in 0..n {
            prop_assert!(check(&two.f[t], &one.f[t], &zero.f[t]));
        }
        for t in 0..=n {
            prop_assert!(check(&two.h[t], &one.h[t], &zero.h[t]));
        }
    }

    #[test]
    fn residual_is_deterministic(seed in 0u64..10_000, n in 1usize..10) {
        let p = common::problem_with(seed, n, (3, 2, 1), seed % 3 == 0, InitKind::Constrained { ng: 3 });
        let prox = common::random_prox(&p, 0.1, seed);
        let mut sol = solve_dense(&p, &prox).unwrap();
        sol.u[0][0] += 1e-3;
        let copy = sol.clone();
        let a = kkt_residual(&p, Some(&prox), &sol).unwrap();
        let b = kkt_residual(&p, Some(&prox), &copy).unwrap();
        prop_assert_eq!(a.stationarity.to_bits(), b.stationarity.to_bits());
        prop_assert_eq!(a.feasibility.to_bits(), b.feasibility.to_bits());
    }
}
