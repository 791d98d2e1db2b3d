#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::problem::LqProblem;

/// Parameter coupling `θᵀ(Φᵀx + Ψᵀu + γ) + ½θᵀΓθ` of one running stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricStage {
    pub Phi: DMatrix<f64>,
    pub Psi: DMatrix<f64>,
    pub Gamma: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl ParametricStage {
    pub fn zeros(nx: usize, nu: usize, ntheta: usize) -> Self {
        ParametricStage {
            Phi: DMatrix::zeros(nx, ntheta),
            Psi: DMatrix::zeros(nu, ntheta),
            Gamma: DMatrix::zeros(ntheta, ntheta),
            gamma: DVector::zeros(ntheta),
        }
    }
}

/// Terminal coupling `θᵀ(Φᵀx_N + γ) + ½θᵀΓθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricTerminal {
    pub Phi: DMatrix<f64>,
    pub Gamma: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl ParametricTerminal {
    pub fn zeros(nx: usize, ntheta: usize) -> Self {
        ParametricTerminal {
            Phi: DMatrix::zeros(nx, ntheta),
            Gamma: DMatrix::zeros(ntheta, ntheta),
            gamma: DVector::zeros(ntheta),
        }
    }
}

/// Parameter data over a horizon; unset stages are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricData {
    pub ntheta: usize,
    pub stages: Vec<Option<ParametricStage>>,
    pub terminal: Option<ParametricTerminal>,
}

impl ParametricData {
    pub fn new(horizon: usize, ntheta: usize) -> Self {
        ParametricData {
            ntheta,
            stages: vec![None; horizon],
            terminal: None,
        }
    }

    /// Cyclic coupling `θᵀ x_N` (`Φ_N = I`), `nθ = nx`.
    pub fn cyclic(horizon: usize, nx: usize) -> Self {
        let mut d = Self::new(horizon, nx);
        d.terminal = Some(ParametricTerminal {
            Phi: DMatrix::identity(nx, nx),
            Gamma: DMatrix::zeros(nx, nx),
            gamma: DVector::zeros(nx),
        });
        d
    }

    pub fn stage(&self, t: usize) -> Option<&ParametricStage> {
        self.stages.get(t).and_then(Option::as_ref)
    }

    pub fn validate(&self, problem: &LqProblem) -> Result<()> {
        let (nx, nu, nth) = (problem.nx, problem.nu, self.ntheta);
        if nth == 0 {
            return Err(LqError::dim("params", "ntheta", ">= 1", 0));
        }
        if self.stages.len() != problem.horizon() {
            return Err(LqError::dim("params", "stages", problem.horizon(), self.stages.len()));
        }
        let shape = |loc: &str, field: &'static str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() == (r, c) {
                Ok(())
            } else {
                Err(LqError::dim(
                    loc,
                    field,
                    format!("{r}x{c}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ))
            }
        };
        for (t, s) in self.stages.iter().enumerate() {
            if let Some(s) = s {
                let loc = format!("params.stages[{t}]");
                shape(&loc, "Phi", &s.Phi, nx, nth)?;
                shape(&loc, "Psi", &s.Psi, nu, nth)?;
                shape(&loc, "Gamma", &s.Gamma, nth, nth)?;
                if s.gamma.len() != nth {
                    return Err(LqError::dim(loc, "gamma", nth, s.gamma.len()));
                }
            }
        }
        if let Some(term) = &self.terminal {
            shape("params.terminal", "Phi", &term.Phi, nx, nth)?;
            shape("params.terminal", "Gamma", &term.Gamma, nth, nth)?;
            if term.gamma.len() != nth {
                return Err(LqError::dim("params.terminal", "gamma", nth, term.gamma.len()));
            }
        }
        Ok(())
    }
}
