//! Problem data, proximal state, solutions and KKT residuals.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::linalg::{asymmetry, symmetrize};

/// Relative asymmetry above which cost Hessians are reported before symmetrizing.
pub const SYMMETRY_WARN_TOL: f64 = 1e-12;

/// Data of one running stage `t < N`.
///
/// Cost `½[x;u]ᵀ[Q S; Sᵀ R][x;u] + qᵀx + rᵀu`, dynamics `A x + B u + E x⁺ + f = 0`,
/// path constraint `C x + D u + h = 0` with `C.nrows()` rows (possibly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub Q: DMatrix<f64>,
    pub S: DMatrix<f64>,
    pub R: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub E: DMatrix<f64>,
    pub f: DVector<f64>,
    pub C: DMatrix<f64>,
    pub D: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl StageData {
    /// Unconstrained stage with explicit dynamics `x⁺ = A x + B u + f` and zero gradients.
    pub fn explicit(
        Q: DMatrix<f64>,
        S: DMatrix<f64>,
        R: DMatrix<f64>,
        A: DMatrix<f64>,
        B: DMatrix<f64>,
    ) -> Self {
        let nx = A.nrows();
        let nu = B.ncols();
        StageData {
            Q,
            S,
            R,
            q: DVector::zeros(nx),
            r: DVector::zeros(nu),
            A,
            B,
            E: -DMatrix::identity(nx, nx),
            f: DVector::zeros(nx),
            C: DMatrix::zeros(0, nx),
            D: DMatrix::zeros(0, nu),
            h: DVector::zeros(0),
        }
    }

    pub fn nc(&self) -> usize {
        self.C.nrows()
    }

    pub fn nx(&self) -> usize {
        self.A.nrows()
    }

    pub fn nu(&self) -> usize {
        self.B.ncols()
    }

    pub fn with_constraints(mut self, C: DMatrix<f64>, D: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.C = C;
        self.D = D;
        self.h = h;
        self
    }
}

/// Terminal cost `½xᵀQx + qᵀx` and constraint `C x + h = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    pub Q: DMatrix<f64>,
    pub q: DVector<f64>,
    pub C: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl TerminalData {
    pub fn unconstrained(Q: DMatrix<f64>, q: DVector<f64>) -> Self {
        let nx = Q.nrows();
        TerminalData {
            Q,
            q,
            C: DMatrix::zeros(0, nx),
            h: DVector::zeros(0),
        }
    }

    pub fn nc(&self) -> usize {
        self.C.nrows()
    }
}

/// How the initial state enters the problem.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `x_0` is given data.
    Fixed(DVector<f64>),
    /// `G x_0 + g = 0` with multiplier `λ_0`.
    Constrained { G: DMatrix<f64>, g: DVector<f64> },
    /// `x_N = x_0`, multiplier returned as `Solution::theta`.
    Cyclic,
}

/// Equality-constrained LQ problem over horizon `N = stages.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub nx: usize,
    pub nu: usize,
    pub stages: Vec<StageData>,
    pub terminal: TerminalData,
    pub init: InitialCondition,
}

impl LqProblem {
    /// Validates dimensions and symmetrizes the cost Hessians.
    pub fn new(
        nx: usize,
        nu: usize,
        stages: Vec<StageData>,
        terminal: TerminalData,
        init: InitialCondition,
    ) -> Result<Self> {
        let mut p = LqProblem {
            nx,
            nu,
            stages,
            terminal,
            init,
        };
        p.validate()?;
        p.symmetrize_costs();
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Initial-constraint row count (`n_g`); zero unless the mode is `Constrained`.
    pub fn ng(&self) -> usize {
        match &self.init {
            InitialCondition::Constrained { G, .. } => G.nrows(),
            _ => 0,
        }
    }

    /// Length of `λ_0`: `n_g` in constrained mode, `nx` (zero-filled) otherwise.
    pub fn lam0_dim(&self) -> usize {
        match &self.init {
            InitialCondition::Constrained { G, .. } => G.nrows(),
            _ => self.nx,
        }
    }

    /// Largest absolute entry over all problem data.
    pub fn data_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for s in &self.stages {
            for a in [&s.Q, &s.S, &s.R, &s.A, &s.B, &s.E, &s.C, &s.D] {
                m = m.max(a.amax());
            }
            for v in [&s.q, &s.r, &s.f, &s.h] {
                m = m.max(v.amax());
            }
        }
        m = m
            .max(self.terminal.Q.amax())
            .max(self.terminal.q.amax())
            .max(self.terminal.C.amax())
            .max(self.terminal.h.amax());
        match &self.init {
            InitialCondition::Fixed(x0) => m.max(x0.amax()),
            InitialCondition::Constrained { G, g } => m.max(G.amax()).max(g.amax()),
            InitialCondition::Cyclic => m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu) = (self.nx, self.nu);
        if nx == 0 || nu == 0 {
            return Err(LqError::dim("problem", "nx/nu", "positive", format!("{nx}/{nu}")));
        }
        if self.stages.is_empty() {
            return Err(LqError::dim("problem", "stages", "N >= 1", 0));
        }
        for (t, s) in self.stages.iter().enumerate() {
            let loc = format!("stages[{t}]");
            let nc = s.C.nrows();
            check_mat(&loc, "Q", &s.Q, nx, nx)?;
            check_mat(&loc, "S", &s.S, nx, nu)?;
            check_mat(&loc, "R", &s.R, nu, nu)?;
            check_vec(&loc, "q", &s.q, nx)?;
            check_vec(&loc, "r", &s.r, nu)?;
            check_mat(&loc, "A", &s.A, nx, nx)?;
            check_mat(&loc, "B", &s.B, nx, nu)?;
            check_mat(&loc, "E", &s.E, nx, nx)?;
            check_vec(&loc, "f", &s.f, nx)?;
            check_mat(&loc, "C", &s.C, nc, nx)?;
            check_mat(&loc, "D", &s.D, nc, nu)?;
            check_vec(&loc, "h", &s.h, nc)?;
        }
        let nc = self.terminal.C.nrows();
        check_mat("terminal", "Q", &self.terminal.Q, nx, nx)?;
        check_vec("terminal", "q", &self.terminal.q, nx)?;
        check_mat("terminal", "C", &self.terminal.C, nc, nx)?;
        check_vec("terminal", "h", &self.terminal.h, nc)?;
        match &self.init {
            InitialCondition::Fixed(x0) => check_vec("init", "x0", x0, nx)?,
            InitialCondition::Constrained { G, g } => {
                check_mat("init", "G", G, G.nrows(), nx)?;
                check_vec("init", "g", g, G.nrows())?;
            }
            InitialCondition::Cyclic => {}
        }
        Ok(())
    }

    fn symmetrize_costs(&mut self) {
        fn fix(m: &mut DMatrix<f64>, what: &str) {
            let scale = m.amax().max(f64::MIN_POSITIVE);
            let a = asymmetry(m);
            if a > SYMMETRY_WARN_TOL * scale {
                log::warn!("{what} is not symmetric (relative asymmetry {:.3e}); symmetrizing", a / scale);
            }
            symmetrize(m);
        }
        for (t, s) in self.stages.iter_mut().enumerate() {
            fix(&mut s.Q, &format!("stages[{t}].Q"));
            fix(&mut s.R, &format!("stages[{t}].R"));
        }
        fix(&mut self.terminal.Q, "terminal.Q");
    }
}

fn check_mat(loc: &str, field: &'static str, m: &DMatrix<f64>, r: usize, c: usize) -> Result<()> {
    if m.shape() != (r, c) {
        return Err(LqError::dim(
            loc,
            field,
            format!("{r}x{c}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_vec(loc: &str, field: &'static str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(LqError::dim(loc, field, n, v.len()));
    }
    Ok(())
}

/// Proximal parameter and previous multiplier estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalState {
    pub mu: f64,
    /// `λᵉ_0 … λᵉ_N` (`λᵉ_0` has `n_g` entries in constrained mode).
    pub lam_e: Vec<DVector<f64>>,
    /// `νᵉ_0 … νᵉ_N` (terminal last).
    pub nu_e: Vec<DVector<f64>>,
}

impl ProximalState {
    /// Zero multiplier estimates.
    pub fn zeros(problem: &LqProblem, mu: f64) -> Result<Self> {
        Self::new(
            problem,
            mu,
            lam_shapes(problem).map(DVector::zeros).collect(),
            nu_shapes(problem).map(DVector::zeros).collect(),
        )
    }

    pub fn new(
        problem: &LqProblem,
        mu: f64,
        lam_e: Vec<DVector<f64>>,
        nu_e: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(LqError::InvalidMu(mu));
        }
        let n = problem.horizon();
        if lam_e.len() != n + 1 {
            return Err(LqError::dim("prox", "lam_e", n + 1, lam_e.len()));
        }
        if nu_e.len() != n + 1 {
            return Err(LqError::dim("prox", "nu_e", n + 1, nu_e.len()));
        }
        for (t, (l, n)) in lam_e.iter().zip(lam_shapes(problem)).enumerate() {
            check_vec(&format!("prox.lam_e[{t}]"), "len", l, n)?;
        }
        for (t, (v, nc)) in nu_e.iter().zip(nu_shapes(problem)).enumerate() {
            check_vec(&format!("prox.nu_e[{t}]"), "len", v, nc)?;
        }
        Ok(ProximalState { mu, lam_e, nu_e })
    }

    /// Replaces the estimates by the multipliers of `sol` (`λ_0` ignored in fixed mode).
    pub fn update_from(&mut self, sol: &Solution) {
        self.lam_e.clone_from(&sol.lam);
        self.nu_e.clone_from(&sol.nu);
    }
}

fn lam_shapes(problem: &LqProblem) -> impl Iterator<Item = usize> + '_ {
    std::iter::once(problem.lam0_dim()).chain(std::iter::repeat_n(problem.nx, problem.horizon()))
}

fn nu_shapes(problem: &LqProblem) -> impl Iterator<Item = usize> + '_ {
    problem
        .stages
        .iter()
        .map(StageData::nc)
        .chain(std::iter::once(problem.terminal.nc()))
}

/// Primal-dual trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Co-states `λ_0 … λ_N`; `λ_0` has `n_g` entries in constrained mode and is
    /// zero otherwise.
    pub lam: Vec<DVector<f64>>,
    /// Constraint multipliers `ν_0 … ν_N`.
    pub nu: Vec<DVector<f64>>,
    /// Cyclic-constraint multiplier.
    pub theta: Option<DVector<f64>>,
}

impl Solution {
    pub fn zeros(problem: &LqProblem) -> Self {
        let n = problem.horizon();
        Solution {
            x: vec![DVector::zeros(problem.nx); n + 1],
            u: vec![DVector::zeros(problem.nu); n],
            lam: lam_shapes(problem).map(DVector::zeros).collect(),
            nu: nu_shapes(problem).map(DVector::zeros).collect(),
            theta: matches!(problem.init, InitialCondition::Cyclic)
                .then(|| DVector::zeros(problem.nx)),
        }
    }

    /// All blocks in a fixed order, for norm comparisons.
    pub fn blocks(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.x
            .iter()
            .chain(&self.u)
            .chain(&self.lam)
            .chain(&self.nu)
            .chain(self.theta.iter())
    }

    /// `‖self − other‖∞ / max(1, ‖other‖∞)` over all blocks.
    pub fn rel_diff(&self, other: &Solution) -> f64 {
        crate::linalg::rel_diff(self.blocks(), other.blocks())
    }

    pub fn check_dims(&self, problem: &LqProblem) -> Result<()> {
        let n = problem.horizon();
        let lens = [
            ("x", self.x.len(), n + 1),
            ("u", self.u.len(), n),
            ("lam", self.lam.len(), n + 1),
            ("nu", self.nu.len(), n + 1),
        ];
        for (field, found, expected) in lens {
            if found != expected {
                return Err(LqError::dim("solution", field, expected, found));
            }
        }
        for (t, v) in self.x.iter().enumerate() {
            check_vec(&format!("solution.x[{t}]"), "len", v, problem.nx)?;
        }
        for (t, (v, n)) in self.lam.iter().zip(lam_shapes(problem)).enumerate() {
            check_vec(&format!("solution.lam[{t}]"), "len", v, n)?;
        }
        for (t, v) in self.u.iter().enumerate() {
            check_vec(&format!("solution.u[{t}]"), "len", v, problem.nu)?;
        }
        for (t, (v, nc)) in self.nu.iter().zip(nu_shapes(problem)).enumerate() {
            check_vec(&format!("solution.nu[{t}]"), "len", v, nc)?;
        }
        if matches!(problem.init, InitialCondition::Cyclic) {
            match &self.theta {
                Some(th) => check_vec("solution", "theta", th, problem.nx)?,
                None => return Err(LqError::dim("solution", "theta", problem.nx, "none")),
            }
        }
        Ok(())
    }
}

/// Right-hand sides shifted by the proximal multiplier estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedRhs {
    /// `ḡ_0`, present only for a constrained initial condition.
    pub g0: Option<DVector<f64>>,
    /// `f̄_0 … f̄_{N−1}`.
    pub f: Vec<DVector<f64>>,
    /// `h̄_0 … h̄_N`.
    pub h: Vec<DVector<f64>>,
}

/// `ḡ_0 = g_0 + μλᵉ_0`, `f̄_t = f_t + μλᵉ_{t+1}`, `h̄_t = h_t + μνᵉ_t`.
pub fn shift_rhs(problem: &LqProblem, prox: &ProximalState) -> Result<ShiftedRhs> {
    let n = problem.horizon();
    if prox.lam_e.len() != n + 1 {
        return Err(LqError::dim("prox", "lam_e", n + 1, prox.lam_e.len()));
    }
    if prox.nu_e.len() != n + 1 {
        return Err(LqError::dim("prox", "nu_e", n + 1, prox.nu_e.len()));
    }
    let mu = prox.mu;
    let mut f = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n + 1);
    for (t, s) in problem.stages.iter().enumerate() {
        check_vec(&format!("prox.lam_e[{}]", t + 1), "len", &prox.lam_e[t + 1], s.f.len())?;
        check_vec(&format!("prox.nu_e[{t}]"), "len", &prox.nu_e[t], s.h.len())?;
        f.push(&s.f + &prox.lam_e[t + 1] * mu);
        h.push(&s.h + &prox.nu_e[t] * mu);
    }
    check_vec("prox.nu_e[N]", "len", &prox.nu_e[n], problem.terminal.nc())?;
    h.push(&problem.terminal.h + &prox.nu_e[n] * mu);
    let g0 = match &problem.init {
        InitialCondition::Constrained { g, .. } => {
            check_vec("prox.lam_e[0]", "len", &prox.lam_e[0], g.len())?;
            Some(g + &prox.lam_e[0] * mu)
        }
        _ => None,
    };
    Ok(ShiftedRhs { g0, f, h })
}

/// Unshifted right-hand sides (zero multiplier estimates).
pub fn raw_rhs(problem: &LqProblem) -> ShiftedRhs {
    ShiftedRhs {
        g0: match &problem.init {
            InitialCondition::Constrained { g, .. } => Some(g.clone()),
            _ => None,
        },
        f: problem.stages.iter().map(|s| s.f.clone()).collect(),
        h: problem
            .stages
            .iter()
            .map(|s| s.h.clone())
            .chain(std::iter::once(problem.terminal.h.clone()))
            .collect(),
    }
}

/// Infinity norms of the stationarity and feasibility blocks of the KKT system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility)
    }
}

/// Evaluates the KKT residuals of `sol`.
///
/// With `prox = None` the unregularized conditions are used; otherwise the
/// feasibility rows carry the shifted right-hand sides and the `−μ·multiplier` terms.
/// In fixed-x0 mode the `x_0` stationarity row and the `λ_0` row are skipped and
/// `x_0` is compared to the given initial state instead.
pub fn kkt_residual(
    problem: &LqProblem,
    prox: Option<&ProximalState>,
    sol: &Solution,
) -> Result<KktResidual> {
    sol.check_dims(problem)?;
    let n = problem.horizon();
    let shifted = match prox {
        Some(p) => shift_rhs(problem, p)?,
        None => raw_rhs(problem),
    };
    let mu = prox.map_or(0.0, |p| p.mu);
    let mut stat: f64 = 0.0;
    let mut feas: f64 = 0.0;

    for (t, s) in problem.stages.iter().enumerate() {
        let (x, u, lam_next, nu) = (&sol.x[t], &sol.u[t], &sol.lam[t + 1], &sol.nu[t]);
        let mut gx = &s.Q * x + &s.S * u + s.A.tr_mul(lam_next) + s.C.tr_mul(nu) + &s.q;
        let skip_x_row = t == 0 && matches!(problem.init, InitialCondition::Fixed(_));
        if t == 0 {
            match &problem.init {
                InitialCondition::Constrained { G, .. } => gx += G.tr_mul(&sol.lam[0]),
                InitialCondition::Cyclic => {
                    if let Some(th) = &sol.theta {
                        gx -= th;
                    }
                }
                InitialCondition::Fixed(_) => {}
            }
        } else {
            gx += problem.stages[t - 1].E.tr_mul(&sol.lam[t]);
        }
        if !skip_x_row {
            stat = stat.max(gx.amax());
        }
        let gu = s.S.tr_mul(x) + &s.R * u + s.B.tr_mul(lam_next) + s.D.tr_mul(nu) + &s.r;
        stat = stat.max(gu.amax());

        let dyn_res = &s.A * x + &s.B * u + &s.E * &sol.x[t + 1] + &shifted.f[t] - lam_next * mu;
        feas = feas.max(dyn_res.amax());
        if s.nc() > 0 {
            let c_res = &s.C * x + &s.D * u + &shifted.h[t] - nu * mu;
            feas = feas.max(c_res.amax());
        }
    }

    let term = &problem.terminal;
    let xn = &sol.x[n];
    let mut gxn = &term.Q * xn + term.C.tr_mul(&sol.nu[n]) + &term.q
        + problem.stages[n - 1].E.tr_mul(&sol.lam[n]);
    if let (InitialCondition::Cyclic, Some(th)) = (&problem.init, &sol.theta) {
        gxn += th;
    }
    stat = stat.max(gxn.amax());
    if term.nc() > 0 {
        let c_res = &term.C * xn + &shifted.h[n] - &sol.nu[n] * mu;
        feas = feas.max(c_res.amax());
    }

    match &problem.init {
        InitialCondition::Fixed(x0) => feas = feas.max((&sol.x[0] - x0).amax()),
        InitialCondition::Constrained { G, .. } => {
            let g0 = shifted.g0.as_ref().expect("constrained mode has g0");
            let r = G * &sol.x[0] + g0 - &sol.lam[0] * mu;
            feas = feas.max(r.amax());
        }
        InitialCondition::Cyclic => feas = feas.max((xn - &sol.x[0]).amax()),
    }

    Ok(KktResidual {
        stationarity: stat,
        feasibility: feas,
    })
}
