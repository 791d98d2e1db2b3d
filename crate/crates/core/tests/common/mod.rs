#![allow(dead_code)]

use lqprox::io::generate::{generate, GeneratorConfig, InitKind};
use lqprox::{LqProblem, ProximalState};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn problem(seed: u64, n: usize, nx: usize, nu: usize, nc: usize) -> LqProblem {
    generate(&GeneratorConfig::new(seed, n, nx, nu, nc))
}

pub fn problem_with(
    seed: u64,
    n: usize,
    (nx, nu, nc): (usize, usize, usize),
    implicit_e: bool,
    init: InitKind,
) -> LqProblem {
    let mut cfg = GeneratorConfig::new(seed, n, nx, nu, nc);
    cfg.implicit_e = implicit_e;
    cfg.mixed_nc = nc > 0 && seed % 2 == 0;
    cfg.init = init;
    generate(&cfg)
}

/// Proximal state with uniform random multiplier estimates.
pub fn random_prox(problem: &LqProblem, mu: f64, seed: u64) -> ProximalState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let zeros = ProximalState::zeros(problem, mu).unwrap();
    let mut fill = |v: &DVector<f64>| DVector::from_fn(v.len(), |_, _| rng.random_range(-1.0..1.0));
    let lam_e = zeros.lam_e.iter().map(&mut fill).collect();
    let nu_e = zeros.nu_e.iter().map(&mut fill).collect();
    ProximalState::new(problem, mu, lam_e, nu_e).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `‖a − b‖∞ / max(1, ‖b‖∞)` for matrices (vectors coerce via `DVector` derefs).
pub fn rel<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    S1: nalgebra::RawStorage<f64, R, C>,
    S2: nalgebra::RawStorage<f64, R, C>,
{
    assert_eq!(a.shape(), b.shape());
    let diff = a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / b.amax().max(1.0)
}

fn cyclic_problem(
    nx: usize,
    stage_cost: impl Fn(usize) -> (f64, DVector<f64>),
    r: f64,
    n: usize,
) -> LqProblem {
    use lqprox::{InitialCondition, StageData, TerminalData};
    use nalgebra::DMatrix;
    let eye = DMatrix::<f64>::identity(nx, nx);
    let stages = (0..n)
        .map(|t| {
            let (w, target) = stage_cost(t);
            let mut st = StageData::explicit(
                &eye * w,
                DMatrix::zeros(nx, nx),
                &eye * r,
                eye.clone(),
                eye.clone(),
            );
            st.q = -target * w;
            st
        })
        .collect();
    let (w, target) = stage_cost(n);
    LqProblem::new(
        nx,
        nx,
        stages,
        TerminalData::unconstrained(&eye * w, -target * w),
        InitialCondition::Cyclic,
    )
    .unwrap()
}

/// Single integrator on a line tracking one period of a sinusoid, closed by `x_30 = x_0`.
pub fn cyclic_line() -> LqProblem {
    let n = 30;
    cyclic_problem(
        1,
        |t| {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
            (1.0, DVector::from_element(1, phase.sin()))
        },
        1.0,
        n,
    )
}

pub const PLANE_WAYPOINTS: [(usize, [f64; 2]); 2] = [(5, [1.0, 1.0]), (15, [-1.0, 0.5])];

/// Single integrator in the plane, `ℓ = 1e-3‖x‖² + ‖u‖²` except at the two waypoint
/// stages where `ℓ = 0.2‖x − x̄_t‖² + ‖u‖²`.
pub fn cyclic_plane() -> LqProblem {
    cyclic_problem(
        2,
        |t| match PLANE_WAYPOINTS.iter().find(|(s, _)| *s == t) {
            Some((_, w)) => (0.4, DVector::from_row_slice(w)),
            None => (2e-3, DVector::zeros(2)),
        },
        2.0,
        20,
    )
}

/// Random symmetric block-tridiagonal matrix with indefinite, well-conditioned diagonal blocks.
pub fn random_tridiag(sizes: &[usize], seed: u64) -> lqprox::tridiag::BlockTridiag {
    let mut rng = rng(seed);
    let mut u = |r: usize, c: usize| nalgebra::DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let diag = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let a = u(n, n);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (&a + a.transpose()) * 0.5 + nalgebra::DMatrix::identity(n, n) * (sign * 4.0)
        })
        .collect();
    let sup = sizes.windows(2).map(|w| u(w[0], w[1])).collect();
    lqprox::tridiag::BlockTridiag::new(diag, sup).unwrap()
}

pub fn mixed_sizes(seed: u64) -> Vec<usize> {
    let mut rng = rng(seed ^ 0xb10c);
    let nblocks = rng.random_range(1..9);
    (0..nblocks).map(|_| rng.random_range(1..6)).collect()
}

