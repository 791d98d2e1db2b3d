//! Operation-count model of the serial and parallel backward passes.
//!
//! With `n = nx + nu + nc`, one stage factorization costs `C_fac = n³` and each
//! right-hand column `C_col = n²`. The serial pass solves `nx + 1` columns per stage;
//! a parametric leg solves `nx` more (`C_param = nx·C_col`), and the consensus chain
//! costs `(2J + 1)/3 · nx³`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupModel {
    pub nx: usize,
    pub c_fac: f64,
    pub c_col: f64,
    pub c_param: f64,
}

impl SpeedupModel {
    pub fn new(nx: usize, nu: usize, nc: usize) -> Self {
        let n = (nx + nu + nc) as f64;
        let c_col = n * n;
        SpeedupModel {
            nx,
            c_fac: n * n * n,
            c_col,
            c_param: nx as f64 * c_col,
        }
    }

    pub fn t_serial(&self, horizon: usize) -> f64 {
        horizon as f64 * (self.c_fac + (self.nx as f64 + 1.0) * self.c_col)
    }

    /// `J` coupling boundaries, `J + 1` legs each on its own worker.
    pub fn t_parallel(&self, horizon: usize, legs_j: usize) -> f64 {
        let nx = self.nx as f64;
        let j = legs_j as f64;
        horizon as f64 / (j + 1.0) * (self.c_fac + (nx + 1.0) * self.c_col + self.c_param)
            + (2.0 * j + 1.0) / 3.0 * nx * nx * nx
    }

    /// `T_serial / T_parallel`; `J = 0` is the serial solver itself.
    pub fn speedup(&self, horizon: usize, legs_j: usize) -> f64 {
        if legs_j == 0 {
            1.0
        } else {
            self.t_serial(horizon) / self.t_parallel(horizon, legs_j)
        }
    }
}
