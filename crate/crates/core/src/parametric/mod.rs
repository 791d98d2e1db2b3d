//! Parametric Riccati recursion: value function jointly quadratic in `(x_0, θ)`,
//! parameter gains, sensitivities, and the cyclic solve built on top.
#![allow(non_snake_case)]

mod data;

pub use data::{ParametricData, ParametricStage, ParametricTerminal};

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::linalg::{symmetrize, Ldlt};
use crate::problem::{shift_rhs, InitialCondition, LqProblem, ProximalState, Solution, StageData};
use crate::riccati::{
    solve_initial, terminal_cost_to_go, terminal_multiplier, CostToGo, StageFactor, StageGains,
    StageKernel, StageRhs,
};

/// θ-columns of the stage gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGains {
    pub Ktheta: DMatrix<f64>,
    pub Ztheta: DMatrix<f64>,
    pub OmegaTheta: DMatrix<f64>,
    pub Mtheta: DMatrix<f64>,
}

impl ParamGains {
    pub fn zeros(nx: usize, nu: usize, nc: usize, ntheta: usize) -> Self {
        ParamGains {
            Ktheta: DMatrix::zeros(nu, ntheta),
            Ztheta: DMatrix::zeros(nc, ntheta),
            OmegaTheta: DMatrix::zeros(nx, ntheta),
            Mtheta: DMatrix::zeros(nx, ntheta),
        }
    }
}

/// `V(x, θ) = ½xᵀPx + pᵀx + xᵀΛθ + ½θᵀΣθ + σᵀθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    pub P: DMatrix<f64>,
    pub p: DVector<f64>,
    pub Lambda: DMatrix<f64>,
    pub Sigma: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

impl ValueParams {
    pub fn eval(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.P * x))
            + self.p.dot(x)
            + x.dot(&(&self.Lambda * theta))
            + 0.5 * theta.dot(&(&self.Sigma * theta))
            + self.sigma.dot(theta)
    }

    fn cost_to_go(&self) -> CostToGo {
        CostToGo {
            P: self.P.clone(),
            p: self.p.clone(),
        }
    }
}

/// Output of a parametric backward sweep; `values[t]` is the value at stage `t`
/// (relative to the sweep start), with one more entry than `gains`.
#[derive(Debug, Clone)]
pub struct ParametricBackward {
    pub gains: Vec<StageGains>,
    pub param_gains: Vec<ParamGains>,
    pub values: Vec<ValueParams>,
}

impl ParametricBackward {
    pub fn head(&self) -> &ValueParams {
        &self.values[0]
    }
}

/// Parametric sweep over `stages` from the seed value at the stage after the last one.
#[allow(clippy::too_many_arguments)]
pub(crate) fn parametric_sweep(
    stages: &[StageData],
    params: &[Option<&ParametricStage>],
    f_bar: &[DVector<f64>],
    h_bar: &[DVector<f64>],
    seed: ValueParams,
    mu: f64,
    kernel: StageKernel,
    offset: usize,
) -> Result<ParametricBackward> {
    let n = stages.len();
    let nth = seed.Sigma.nrows();
    let mut gains = Vec::with_capacity(n);
    let mut pgains = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n + 1);
    values.push(seed);
    for t in (0..n).rev() {
        let s = &stages[t];
        let (nx, nu, nc) = (s.nx(), s.nu(), s.nc());
        let next = values.last().expect("seeded");
        let factor = StageFactor::new(kernel, s, &next.P, mu, t + offset)?;
        let (g, ctg) = factor.gains(s, &f_bar[t], &h_bar[t], &next.cost_to_go());
        let zero_psi;
        let psi = match params[t] {
            Some(ps) => &ps.Psi,
            None => {
                zero_psi = DMatrix::zeros(nu, nth);
                &zero_psi
            }
        };
        let cols = factor.solve(&StageRhs {
            u: psi.clone(),
            nu: DMatrix::zeros(nc, nth),
            lam: DMatrix::zeros(nx, nth),
            x: next.Lambda.clone(),
        });
        let pg = ParamGains {
            Ktheta: cols.u,
            Ztheta: cols.nu,
            OmegaTheta: cols.lam,
            Mtheta: cols.x,
        };
        let mut Sigma = &next.Sigma + psi.tr_mul(&pg.Ktheta) + next.Lambda.tr_mul(&pg.Mtheta);
        let mut Lambda = g.K.tr_mul(psi) + g.M.tr_mul(&next.Lambda);
        let mut sigma = &next.sigma + psi.tr_mul(&g.k) + next.Lambda.tr_mul(&g.a);
        if let Some(ps) = params[t] {
            Sigma += &ps.Gamma;
            Lambda += &ps.Phi;
            sigma += &ps.gamma;
        }
        symmetrize(&mut Sigma);
        values.push(ValueParams {
            P: ctg.P,
            p: ctg.p,
            Lambda,
            Sigma,
            sigma,
        });
        gains.push(g);
        pgains.push(pg);
    }
    gains.reverse();
    pgains.reverse();
    values.reverse();
    Ok(ParametricBackward {
        gains,
        param_gains: pgains,
        values,
    })
}

/// Parametric backward pass over the whole horizon.
pub fn parametric_backward(
    problem: &LqProblem,
    prox: &ProximalState,
    params: &ParametricData,
    kernel: StageKernel,
) -> Result<ParametricBackward> {
    params.validate(problem)?;
    let shifted = shift_rhs(problem, prox)?;
    let n = problem.horizon();
    let (nx, nth) = (problem.nx, params.ntheta);
    let ctg = terminal_cost_to_go(&problem.terminal, &shifted.h[n], prox.mu)?;
    let seed = match &params.terminal {
        Some(t) => ValueParams {
            P: ctg.P,
            p: ctg.p,
            Lambda: t.Phi.clone(),
            Sigma: t.Gamma.clone(),
            sigma: t.gamma.clone(),
        },
        None => ValueParams {
            P: ctg.P,
            p: ctg.p,
            Lambda: DMatrix::zeros(nx, nth),
            Sigma: DMatrix::zeros(nth, nth),
            sigma: DVector::zeros(nth),
        },
    };
    let ps: Vec<_> = (0..n).map(|t| params.stage(t)).collect();
    parametric_sweep(
        &problem.stages,
        &ps,
        &shifted.f,
        &shifted.h[..n],
        seed,
        prox.mu,
        kernel,
        0,
    )
}

/// Rolls the θ-augmented gains forward; fills `x`, `u`, `λ_1..`, `ν_0..ν_{N−1}`.
///
/// `sol` must be shaped for the horizon covered by `gains` (`sol.x[0]` is overwritten
/// with `x0`).
pub(crate) fn roll_forward(
    gains: &[StageGains],
    pgains: &[ParamGains],
    x0: &DVector<f64>,
    theta: &DVector<f64>,
    x: &mut [DVector<f64>],
    u: &mut [DVector<f64>],
    lam: &mut [DVector<f64>],
    nu: &mut [DVector<f64>],
) {
    x[0] = x0.clone();
    for (t, (g, pg)) in gains.iter().zip(pgains).enumerate() {
        let xt = &x[t];
        u[t] = &g.k + &g.K * xt + &pg.Ktheta * theta;
        nu[t] = &g.zeta + &g.Z * xt + &pg.Ztheta * theta;
        lam[t + 1] = &g.omega + &g.Omega * xt + &pg.OmegaTheta * theta;
        x[t + 1] = &g.a + &g.M * xt + &pg.Mtheta * theta;
    }
}

/// Forward pass at a given `(x_0, θ)`; `λ_0` is left zero.
pub fn parametric_forward(
    problem: &LqProblem,
    prox: &ProximalState,
    backward: &ParametricBackward,
    x0: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<Solution> {
    let shifted = shift_rhs(problem, prox)?;
    let n = problem.horizon();
    let mut sol = Solution::zeros(problem);
    {
        let Solution { x, u, lam, nu, .. } = &mut sol;
        roll_forward(&backward.gains, &backward.param_gains, x0, theta, x, u, lam, nu);
    }
    sol.nu[n] = terminal_multiplier(&problem.terminal, &shifted.h[n], &sol.x[n], prox.mu);
    sol.theta = Some(theta.clone());
    Ok(sol)
}

/// Derivatives of the primal-dual trajectory with respect to θ.
#[derive(Debug, Clone)]
pub struct Sensitivities {
    pub x: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
    pub nu: Vec<DMatrix<f64>>,
    pub lam: Vec<DMatrix<f64>>,
}

/// Forward sensitivity recursion `∂u_t = K_t ∂x_t + K_t^θ`, etc., from `∂x_0`.
///
/// `∂λ_0` is zero; the terminal `∂ν_N = C_N ∂x_N / μ`.
pub fn sensitivities(
    problem: &LqProblem,
    backward: &ParametricBackward,
    dx0: &DMatrix<f64>,
    mu: f64,
) -> Sensitivities {
    let nth = dx0.ncols();
    let n = backward.gains.len();
    let mut s = Sensitivities {
        x: Vec::with_capacity(n + 1),
        u: Vec::with_capacity(n),
        nu: Vec::with_capacity(n + 1),
        lam: Vec::with_capacity(n + 1),
    };
    s.x.push(dx0.clone());
    s.lam.push(DMatrix::zeros(problem.lam0_dim(), nth));
    for (g, pg) in backward.gains.iter().zip(&backward.param_gains) {
        let dx = s.x.last().expect("seeded");
        s.u.push(&g.K * dx + &pg.Ktheta);
        s.nu.push(&g.Z * dx + &pg.Ztheta);
        s.lam.push(&g.Omega * dx + &pg.OmegaTheta);
        let next = &g.M * dx + &pg.Mtheta;
        s.x.push(next);
    }
    let term = &problem.terminal;
    s.nu.push(if term.nc() == 0 {
        DMatrix::zeros(0, nth)
    } else {
        &term.C * &s.x[n] / mu
    });
    s
}

/// How `(x_0, θ)` are chosen after the parametric backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStrategy {
    /// Both given.
    FixedX0AndTheta { x0: DVector<f64>, theta: DVector<f64> },
    /// θ given; `x_0` from the problem's initial condition, with `Λ_0θ` added to `p_0`.
    SolveInitialSystem { theta: DVector<f64> },
    /// Cyclic coupling: `[P_0, Λ_0−I; (Λ_0−I)ᵀ, Σ_0][x_0; θ] = −[p_0; σ_0]`.
    CyclicSaddle,
}

/// Resolves `(x_0, λ_0, θ)` from the head value function.
pub fn compute_initial(
    strategy: &InitialStrategy,
    problem: &LqProblem,
    head: &ValueParams,
    g0_bar: Option<&DVector<f64>>,
    mu: f64,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let nx = problem.nx;
    match strategy {
        InitialStrategy::FixedX0AndTheta { x0, theta } => {
            Ok((x0.clone(), DVector::zeros(problem.lam0_dim()), theta.clone()))
        }
        InitialStrategy::SolveInitialSystem { theta } => {
            let p = &head.p + &head.Lambda * theta;
            let (x0, lam0) = solve_initial(&head.P, &p, &problem.init, g0_bar, mu)?;
            let lam0 = match problem.init {
                InitialCondition::Constrained { .. } => lam0,
                _ => DVector::zeros(problem.lam0_dim()),
            };
            Ok((x0, lam0, theta.clone()))
        }
        InitialStrategy::CyclicSaddle => {
            let nth = head.Sigma.nrows();
            if nth != nx {
                return Err(LqError::dim("cyclic", "ntheta", nx, nth));
            }
            let mut K = DMatrix::zeros(2 * nx, 2 * nx);
            let off = &head.Lambda - DMatrix::identity(nx, nx);
            K.view_mut((0, 0), (nx, nx)).copy_from(&head.P);
            K.view_mut((0, nx), (nx, nx)).copy_from(&off);
            K.view_mut((nx, 0), (nx, nx)).copy_from(&off.transpose());
            K.view_mut((nx, nx), (nx, nx)).copy_from(&head.Sigma);
            let f = Ldlt::factor(&K).ok_or(LqError::SingularCyclicKkt)?;
            let mut b = DVector::zeros(2 * nx);
            b.rows_mut(0, nx).copy_from(&-&head.p);
            b.rows_mut(nx, nx).copy_from(&-&head.sigma);
            let z = f.solve_vec(&b);
            Ok((
                z.rows(0, nx).into_owned(),
                DVector::zeros(problem.lam0_dim()),
                z.rows(nx, nx).into_owned(),
            ))
        }
    }
}

/// Full parametric solve: backward pass, initial strategy, forward pass.
pub fn solve_parametric(
    problem: &LqProblem,
    prox: &ProximalState,
    params: &ParametricData,
    strategy: &InitialStrategy,
    kernel: StageKernel,
) -> Result<Solution> {
    let bw = parametric_backward(problem, prox, params, kernel)?;
    let shifted = shift_rhs(problem, prox)?;
    let (x0, lam0, theta) = compute_initial(strategy, problem, bw.head(), shifted.g0.as_ref(), prox.mu)?;
    let mut sol = parametric_forward(problem, prox, &bw, &x0, &theta)?;
    sol.lam[0] = lam0;
    Ok(sol)
}

/// Solves a problem with the cyclic constraint `x_N = x_0`; `θ` is its multiplier.
pub fn solve_cyclic(problem: &LqProblem, prox: &ProximalState, kernel: StageKernel) -> Result<Solution> {
    if !matches!(problem.init, InitialCondition::Cyclic) {
        return Err(LqError::Unsupported("solve_cyclic needs a cyclic initial condition".into()));
    }
    let params = ParametricData::cyclic(problem.horizon(), problem.nx);
    solve_parametric(problem, prox, &params, &InitialStrategy::CyclicSaddle, kernel)
}
