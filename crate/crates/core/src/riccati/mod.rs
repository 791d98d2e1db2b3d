//! Generalized Riccati recursion for the proximal, equality-constrained LQ problem.
#![allow(non_snake_case)]

mod classic;
mod kernel;

pub use classic::classic_riccati;
pub use kernel::{
    stage_kernel_blocksparse, stage_kernel_dense, BlockSparseWorkspace, CostToGo, StageColumns,
    StageFactor, StageGains, StageKernel, StageRhs,
};
pub(crate) use kernel::OpenStageFactor;

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::linalg::{symmetrize, Ldlt};
use crate::problem::{
    shift_rhs, InitialCondition, LqProblem, ProximalState, ShiftedRhs, Solution, StageData,
    TerminalData,
};

/// `P_N = Q_N + C_NᵀC_N/μ`, `p_N = q_N + C_Nᵀh̄_N/μ`.
pub fn terminal_cost_to_go(terminal: &TerminalData, h_bar: &DVector<f64>, mu: f64) -> Result<CostToGo> {
    if terminal.nc() == 0 {
        return Ok(CostToGo {
            P: terminal.Q.clone(),
            p: terminal.q.clone(),
        });
    }
    if mu == 0.0 {
        return Err(LqError::MuZeroWithConstraints);
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(LqError::InvalidMu(mu));
    }
    let C = &terminal.C;
    let mut P = &terminal.Q + C.tr_mul(C) / mu;
    symmetrize(&mut P);
    let p = &terminal.q + C.tr_mul(h_bar) / mu;
    Ok(CostToGo { P, p })
}

/// Output of a backward sweep: gains for stages `t0..t1` and cost-to-go for `t0..=t1`.
#[derive(Debug, Clone)]
pub struct Backward {
    pub gains: Vec<StageGains>,
    pub cost_to_go: Vec<CostToGo>,
}

/// Backward sweep over `stages` (first stage index `offset`) from the seed cost-to-go.
pub(crate) fn backward_sweep(
    stages: &[StageData],
    f_bar: &[DVector<f64>],
    h_bar: &[DVector<f64>],
    seed: CostToGo,
    mu: f64,
    kernel: StageKernel,
    offset: usize,
) -> Result<Backward> {
    let n = stages.len();
    let mut gains = Vec::with_capacity(n);
    let mut ctg = Vec::with_capacity(n + 1);
    ctg.push(seed);
    for t in (0..n).rev() {
        let next = ctg.last().expect("seeded");
        let s = &stages[t];
        let factor = StageFactor::new(kernel, s, &next.P, mu, t + offset)?;
        let (g, v) = factor.gains(s, &f_bar[t], &h_bar[t], next);
        gains.push(g);
        ctg.push(v);
    }
    gains.reverse();
    ctg.reverse();
    Ok(Backward {
        gains,
        cost_to_go: ctg,
    })
}

/// Backward pass over the whole horizon.
pub fn backward_pass(problem: &LqProblem, prox: &ProximalState, kernel: StageKernel) -> Result<Backward> {
    let shifted = shift_rhs(problem, prox)?;
    backward_shifted(problem, &shifted, prox.mu, kernel)
}

pub(crate) fn backward_shifted(
    problem: &LqProblem,
    shifted: &ShiftedRhs,
    mu: f64,
    kernel: StageKernel,
) -> Result<Backward> {
    let n = problem.horizon();
    let seed = terminal_cost_to_go(&problem.terminal, &shifted.h[n], mu)?;
    backward_sweep(&problem.stages, &shifted.f, &shifted.h[..n], seed, mu, kernel, 0)
}

/// Initial state and multiplier from the head cost-to-go.
///
/// Constrained mode solves `[P_0 Gᵀ; G −μI][x_0; λ_0] = −[p_0; ḡ_0]`.
pub fn solve_initial(
    P0: &DMatrix<f64>,
    p0: &DVector<f64>,
    init: &InitialCondition,
    g0_bar: Option<&DVector<f64>>,
    mu: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let nx = P0.nrows();
    match init {
        InitialCondition::Fixed(x0) => Ok((x0.clone(), DVector::zeros(nx))),
        InitialCondition::Constrained { G, g } => {
            let ng = G.nrows();
            let g0 = g0_bar.unwrap_or(g);
            let mut K = DMatrix::zeros(nx + ng, nx + ng);
            K.view_mut((0, 0), (nx, nx)).copy_from(P0);
            K.view_mut((nx, 0), (ng, nx)).copy_from(G);
            K.view_mut((0, nx), (nx, ng)).copy_from(&G.transpose());
            for i in nx..nx + ng {
                K[(i, i)] = -mu;
            }
            let f = Ldlt::factor(&K).ok_or(LqError::SingularInitKkt)?;
            let mut b = DVector::zeros(nx + ng);
            b.rows_mut(0, nx).copy_from(&-p0);
            b.rows_mut(nx, ng).copy_from(&-g0);
            let z = f.solve_vec(&b);
            Ok((z.rows(0, nx).into_owned(), z.rows(nx, ng).into_owned()))
        }
        InitialCondition::Cyclic => Err(LqError::Unsupported(
            "cyclic initial condition needs the parametric solve".into(),
        )),
    }
}

/// Rolls the gains forward from `x_0`; `λ_0` is stored as given.
pub fn forward_pass(
    problem: &LqProblem,
    gains: &[StageGains],
    x0: DVector<f64>,
    lam0: DVector<f64>,
    shifted: &ShiftedRhs,
    mu: f64,
) -> Solution {
    let n = problem.horizon();
    let mut sol = Solution::zeros(problem);
    sol.lam[0] = lam0;
    sol.x[0] = x0;
    for (t, g) in gains.iter().enumerate() {
        let x = &sol.x[t];
        sol.u[t] = &g.k + &g.K * x;
        sol.nu[t] = &g.zeta + &g.Z * x;
        sol.lam[t + 1] = &g.omega + &g.Omega * x;
        sol.x[t + 1] = &g.a + &g.M * x;
    }
    sol.nu[n] = terminal_multiplier(&problem.terminal, &shifted.h[n], &sol.x[n], mu);
    sol
}

/// `ν_N = (h̄_N + C_N x_N)/μ`.
pub(crate) fn terminal_multiplier(
    terminal: &TerminalData,
    h_bar: &DVector<f64>,
    xn: &DVector<f64>,
    mu: f64,
) -> DVector<f64> {
    if terminal.nc() == 0 {
        DVector::zeros(0)
    } else {
        (h_bar + &terminal.C * xn) / mu
    }
}

/// Serial backward/forward solve of the proximal subproblem.
pub fn solve_serial(problem: &LqProblem, prox: &ProximalState, kernel: StageKernel) -> Result<Solution> {
    if matches!(problem.init, InitialCondition::Cyclic) {
        return crate::parametric::solve_cyclic(problem, prox, kernel);
    }
    let shifted = shift_rhs(problem, prox)?;
    let bw = backward_shifted(problem, &shifted, prox.mu, kernel)?;
    let head = &bw.cost_to_go[0];
    let (x0, lam0) = solve_initial(&head.P, &head.p, &problem.init, shifted.g0.as_ref(), prox.mu)?;
    let lam0 = if matches!(problem.init, InitialCondition::Fixed(_)) {
        DVector::zeros(problem.lam0_dim())
    } else {
        lam0
    };
    Ok(forward_pass(problem, &bw.gains, x0, lam0, &shifted, prox.mu))
}
