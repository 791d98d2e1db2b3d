#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::linalg::symmetrize;
use crate::problem::{InitialCondition, LqProblem, Solution};

/// Textbook Riccati recursion for explicit dynamics `x⁺ = Ax + Bu + f`, no
/// constraints and a fixed initial state. Returns the exact (unregularized) solution.
pub fn classic_riccati(problem: &LqProblem) -> Result<Solution> {
    let nx = problem.nx;
    let InitialCondition::Fixed(x0) = &problem.init else {
        return Err(LqError::Unsupported("classic Riccati needs a fixed x0".into()));
    };
    let neg_i = -DMatrix::<f64>::identity(nx, nx);
    if problem.terminal.nc() > 0 || problem.stages.iter().any(|s| s.nc() > 0 || s.E != neg_i) {
        return Err(LqError::Unsupported(
            "classic Riccati needs E = -I and no constraints".into(),
        ));
    }

    let n = problem.horizon();
    let mut P = problem.terminal.Q.clone();
    let mut p = problem.terminal.q.clone();
    let mut ctg = vec![(P.clone(), p.clone())];
    let mut gains: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(n);
    for (t, s) in problem.stages.iter().enumerate().rev() {
        let PA = &P * &s.A;
        let PB = &P * &s.B;
        let pf = &p + &P * &s.f;
        let Qh = &s.Q + s.A.tr_mul(&PA);
        let Sh = &s.S + s.A.tr_mul(&PB);
        let Rh = &s.R + s.B.tr_mul(&PB);
        let qh = &s.q + s.A.tr_mul(&pf);
        let rh = &s.r + s.B.tr_mul(&pf);
        let chol = Rh.cholesky().ok_or(LqError::IndefiniteRhat { stage: t })?;
        let K = -chol.solve(&Sh.transpose());
        let k = -chol.solve(&rh);
        P = Qh + &Sh * &K;
        symmetrize(&mut P);
        p = qh + &Sh * &k;
        gains.push((k, K));
        ctg.push((P.clone(), p.clone()));
    }
    gains.reverse();
    ctg.reverse();

    let mut sol = Solution::zeros(problem);
    sol.x[0] = x0.clone();
    for (t, ((k, K), s)) in gains.iter().zip(&problem.stages).enumerate() {
        sol.u[t] = k + K * &sol.x[t];
        sol.x[t + 1] = &s.A * &sol.x[t] + &s.B * &sol.u[t] + &s.f;
        let (Pn, pn) = &ctg[t + 1];
        sol.lam[t + 1] = Pn * &sol.x[t + 1] + pn;
    }
    Ok(sol)
}
