//! Outer proximal-point loop: re-solve the regularized problem with the multiplier
//! estimates set to the last multipliers until the unregularized KKT conditions hold.

use crate::error::{LqError, Result};
use crate::parallel::solve_parallel;
use crate::problem::{kkt_residual, KktResidual, LqProblem, ProximalState, Solution};
use crate::riccati::{solve_serial, StageKernel};

/// Inner solver for one regularized subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    SerialDense,
    SerialBlockSparse,
    /// Parallel condensation with `J` coupling boundaries (`J + 1` legs).
    Parallel(usize),
}

impl Backend {
    /// Solves the regularized subproblem for `prox`.
    ///
    /// The parallel backend runs on the current rayon pool.
    pub fn solve(&self, problem: &LqProblem, prox: &ProximalState) -> Result<Solution> {
        match *self {
            Backend::SerialDense => solve_serial(problem, prox, StageKernel::Dense),
            Backend::SerialBlockSparse => solve_serial(problem, prox, StageKernel::BlockSparse),
            Backend::Parallel(j) => solve_parallel(problem, prox, j),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxLoopSettings {
    pub mu: f64,
    pub max_iters: usize,
    pub tol_stationarity: f64,
    pub tol_feasibility: f64,
    pub backend: Backend,
}

impl Default for ProxLoopSettings {
    fn default() -> Self {
        ProxLoopSettings {
            mu: 1e-6,
            max_iters: 50,
            tol_stationarity: 1e-8,
            tol_feasibility: 1e-8,
            backend: Backend::SerialBlockSparse,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExactSolve {
    pub solution: Solution,
    pub iterations: usize,
    /// Unregularized residuals after each inner solve.
    pub history: Vec<KktResidual>,
}

/// Iterates from zero multiplier estimates.
pub fn solve_exact(problem: &LqProblem, settings: &ProxLoopSettings) -> Result<ExactSolve> {
    let prox = ProximalState::zeros(problem, settings.mu)?;
    solve_exact_from(problem, settings, prox)
}

/// Iterates from the given estimates (`settings.mu` is ignored in favour of `prox.mu`).
pub fn solve_exact_from(
    problem: &LqProblem,
    settings: &ProxLoopSettings,
    mut prox: ProximalState,
) -> Result<ExactSolve> {
    if !(settings.tol_stationarity > 0.0 && settings.tol_feasibility > 0.0) {
        return Err(LqError::Unsupported("tolerances must be positive".into()));
    }
    let mut history = Vec::new();
    for it in 1..=settings.max_iters {
        let sol = settings.backend.solve(problem, &prox)?;
        let res = kkt_residual(problem, None, &sol)?;
        history.push(res);
        log::debug!(
            "prox iteration {it}: stationarity {:.3e}, feasibility {:.3e}",
            res.stationarity,
            res.feasibility
        );
        if res.stationarity <= settings.tol_stationarity && res.feasibility <= settings.tol_feasibility {
            return Ok(ExactSolve {
                solution: sol,
                iterations: it,
                history,
            });
        }
        prox.update_from(&sol);
    }
    let last = history.last().copied().unwrap_or(KktResidual {
        stationarity: f64::INFINITY,
        feasibility: f64::INFINITY,
    });
    Err(LqError::MaxItersExceeded {
        iterations: settings.max_iters,
        stationarity: last.stationarity,
        feasibility: last.feasibility,
    })
}
