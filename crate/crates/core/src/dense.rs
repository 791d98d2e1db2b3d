//! Dense assembly of the full proximal KKT system, solved with a generic LU.
//!
//! This is the reference every structured backend is checked against. It shares no
//! factorization code with the Riccati backends.
#![allow(non_snake_case)]

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::parametric::ParametricData;
use crate::problem::{shift_rhs, InitialCondition, LqProblem, ProximalState, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// `λ_0`, multiplier of the initial constraint.
    InitMultiplier,
    State,
    Control,
    PathMultiplier,
    CoState,
    /// Parameter `θ` (or the cyclic multiplier).
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub kind: VarKind,
    pub stage: usize,
    pub range: Range<usize>,
}

/// Ordered map from variables to row ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KktLayout {
    pub entries: Vec<LayoutEntry>,
}

impl KktLayout {
    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.range.end)
    }

    pub fn find(&self, kind: VarKind, stage: usize) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.stage == stage)
            .map(|e| e.range.clone())
    }

    fn push(&mut self, kind: VarKind, stage: usize, len: usize) {
        if len == 0 {
            return;
        }
        let start = self.dim();
        self.entries.push(LayoutEntry {
            kind,
            stage,
            range: start..start + len,
        });
    }

    fn without(&self, kind: VarKind, stage: usize) -> KktLayout {
        let mut out = KktLayout::default();
        for e in &self.entries {
            if !(e.kind == kind && e.stage == stage) {
                out.push(e.kind, e.stage, e.range.len());
            }
        }
        out
    }
}

/// Assembled KKT system `M z + rhs = 0`.
///
/// `rhs` is the right-hand column in the order of `layout`: `q_t`, `r_t`, `h̄_t`,
/// `f̄_t`, `ḡ_0` (and known-`x_0` contributions in fixed mode).
#[derive(Debug, Clone)]
pub struct DenseKkt {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub layout: KktLayout,
}

/// Everything about the problem as one quadratic saddle function of all variables,
/// including `x_0` and (when parametric) `θ` as variables.
struct FullSystem {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    layout: KktLayout,
}

struct Builder<'a> {
    m: &'a mut DMatrix<f64>,
    layout: &'a KktLayout,
}

impl Builder<'_> {
    /// Writes block `(row, col)` and its transpose.
    fn sym(&mut self, row: (VarKind, usize), col: (VarKind, usize), blk: &DMatrix<f64>) {
        let (Some(r), Some(c)) = (self.layout.find(row.0, row.1), self.layout.find(col.0, col.1))
        else {
            return;
        };
        for j in 0..c.len() {
            for i in 0..r.len() {
                self.m[(r.start + i, c.start + j)] += blk[(i, j)];
                if r != c {
                    self.m[(c.start + j, r.start + i)] += blk[(i, j)];
                }
            }
        }
    }

    fn diag_scaled(&mut self, var: (VarKind, usize), s: f64) {
        if let Some(r) = self.layout.find(var.0, var.1) {
            for i in r {
                self.m[(i, i)] += s;
            }
        }
    }
}

fn build_full(
    problem: &LqProblem,
    prox: &ProximalState,
    params: Option<&ParametricData>,
) -> Result<FullSystem> {
    use VarKind::*;
    problem.validate()?;
    let shifted = shift_rhs(problem, prox)?;
    let n = problem.horizon();
    let (nx, nu) = (problem.nx, problem.nu);
    let mu = prox.mu;

    // the cyclic multiplier is a parameter with Φ_0 = −I, Φ_N = I
    let cyclic_params;
    let params = match (&problem.init, params) {
        (InitialCondition::Cyclic, None) => {
            let mut d = ParametricData::cyclic(n, nx);
            let mut s0 = crate::parametric::ParametricStage::zeros(nx, nu, nx);
            s0.Phi = -DMatrix::identity(nx, nx);
            d.stages[0] = Some(s0);
            cyclic_params = d;
            Some(&cyclic_params)
        }
        (InitialCondition::Cyclic, Some(_)) => {
            return Err(LqError::Unsupported(
                "extra parameters on a cyclic problem".into(),
            ))
        }
        (_, p) => p,
    };
    if let Some(p) = params {
        p.validate(problem)?;
    }

    let mut layout = KktLayout::default();
    if let InitialCondition::Constrained { G, .. } = &problem.init {
        layout.push(InitMultiplier, 0, G.nrows());
    }
    layout.push(State, 0, nx);
    for (t, s) in problem.stages.iter().enumerate() {
        layout.push(Control, t, nu);
        layout.push(PathMultiplier, t, s.nc());
        layout.push(CoState, t + 1, nx);
        layout.push(State, t + 1, nx);
    }
    layout.push(PathMultiplier, n, problem.terminal.nc());
    if let Some(p) = params {
        layout.push(Parameter, 0, p.ntheta);
    }

    let dim = layout.dim();
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut put_rhs = |var: (VarKind, usize), v: &DVector<f64>| {
        if let Some(r) = layout.find(var.0, var.1) {
            let mut blk = rhs.rows_mut(r.start, r.len());
            blk += v;
        }
    };
    {
        let mut b = Builder {
            m: &mut matrix,
            layout: &layout,
        };
        if let InitialCondition::Constrained { G, .. } = &problem.init {
            b.sym((InitMultiplier, 0), (State, 0), G);
            b.diag_scaled((InitMultiplier, 0), -mu);
        }
        for (t, s) in problem.stages.iter().enumerate() {
            b.sym((State, t), (State, t), &s.Q);
            b.sym((State, t), (Control, t), &s.S);
            b.sym((Control, t), (Control, t), &s.R);
            if s.nc() > 0 {
                b.sym((PathMultiplier, t), (State, t), &s.C);
                b.sym((PathMultiplier, t), (Control, t), &s.D);
                b.diag_scaled((PathMultiplier, t), -mu);
            }
            b.sym((CoState, t + 1), (State, t), &s.A);
            b.sym((CoState, t + 1), (Control, t), &s.B);
            b.sym((CoState, t + 1), (State, t + 1), &s.E);
            b.diag_scaled((CoState, t + 1), -mu);
        }
        b.sym((State, n), (State, n), &problem.terminal.Q);
        if problem.terminal.nc() > 0 {
            b.sym((PathMultiplier, n), (State, n), &problem.terminal.C);
            b.diag_scaled((PathMultiplier, n), -mu);
        }
        if let Some(p) = params {
            for (t, ps) in p.stages.iter().enumerate() {
                if let Some(ps) = ps {
                    b.sym((State, t), (Parameter, 0), &ps.Phi);
                    b.sym((Control, t), (Parameter, 0), &ps.Psi);
                    b.sym((Parameter, 0), (Parameter, 0), &ps.Gamma);
                }
            }
            if let Some(term) = &p.terminal {
                b.sym((State, n), (Parameter, 0), &term.Phi);
                b.sym((Parameter, 0), (Parameter, 0), &term.Gamma);
            }
        }
    }
    if let Some(g0) = &shifted.g0 {
        put_rhs((InitMultiplier, 0), g0);
    }
    for (t, s) in problem.stages.iter().enumerate() {
        put_rhs((State, t), &s.q);
        put_rhs((Control, t), &s.r);
        put_rhs((PathMultiplier, t), &shifted.h[t]);
        put_rhs((CoState, t + 1), &shifted.f[t]);
    }
    put_rhs((State, n), &problem.terminal.q);
    put_rhs((PathMultiplier, n), &shifted.h[n]);
    if let Some(p) = params {
        for ps in p.stages.iter().flatten() {
            put_rhs((Parameter, 0), &ps.gamma);
        }
        if let Some(term) = &p.terminal {
            put_rhs((Parameter, 0), &term.gamma);
        }
    }
    Ok(FullSystem {
        matrix,
        rhs,
        layout,
    })
}

/// Removes variable block `var` with known value, moving its column into the rhs.
fn eliminate(sys: FullSystem, kind: VarKind, stage: usize, value: &DVector<f64>) -> FullSystem {
    let r = sys.layout.find(kind, stage).expect("variable present");
    let keep: Vec<usize> = (0..sys.layout.dim()).filter(|i| !r.contains(i)).collect();
    let k = keep.len();
    let mut matrix = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (a, &i) in keep.iter().enumerate() {
        let mut acc = sys.rhs[i];
        for (c, j) in r.clone().enumerate() {
            acc += sys.matrix[(i, j)] * value[c];
        }
        rhs[a] = acc;
        for (b, &j) in keep.iter().enumerate() {
            matrix[(a, b)] = sys.matrix[(i, j)];
        }
    }
    FullSystem {
        matrix,
        rhs,
        layout: sys.layout.without(kind, stage),
    }
}

/// Assembles the proximal KKT system of the whole horizon.
///
/// Fixed-x0 problems have `x_0` eliminated; constrained ones carry `λ_0` first;
/// cyclic ones carry the cyclic multiplier last.
pub fn assemble(problem: &LqProblem, prox: &ProximalState) -> Result<DenseKkt> {
    let mut sys = build_full(problem, prox, None)?;
    if let InitialCondition::Fixed(x0) = &problem.init {
        sys = eliminate(sys, VarKind::State, 0, x0);
    }
    Ok(DenseKkt {
        matrix: sys.matrix,
        rhs: sys.rhs,
        layout: sys.layout,
    })
}

fn lu_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = matrix.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let lu = matrix.clone().lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_pivot <= n as f64 * f64::EPSILON * scale {
        return Err(LqError::SingularKkt);
    }
    lu.solve(&(-rhs)).ok_or(LqError::SingularKkt)
}

fn lu_solve_mat(matrix: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = matrix.nrows();
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let lu = matrix.clone().lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if n > 0 && min_pivot <= n as f64 * f64::EPSILON * scale {
        return Err(LqError::SingularKkt);
    }
    lu.solve(rhs).ok_or(LqError::SingularKkt)
}

fn unpack(problem: &LqProblem, layout: &KktLayout, z: &DVector<f64>) -> Solution {
    let mut sol = Solution::zeros(problem);
    if let InitialCondition::Fixed(x0) = &problem.init {
        sol.x[0] = x0.clone();
    }
    for e in &layout.entries {
        let v = z.rows(e.range.start, e.range.len()).into_owned();
        match e.kind {
            VarKind::InitMultiplier => sol.lam[0] = v,
            VarKind::State => sol.x[e.stage] = v,
            VarKind::Control => sol.u[e.stage] = v,
            VarKind::PathMultiplier => sol.nu[e.stage] = v,
            VarKind::CoState => sol.lam[e.stage] = v,
            VarKind::Parameter => sol.theta = Some(v),
        }
    }
    sol
}

/// Solves the proximal KKT system with a dense LU factorization.
pub fn solve_dense(problem: &LqProblem, prox: &ProximalState) -> Result<Solution> {
    let kkt = assemble(problem, prox)?;
    let z = lu_solve(&kkt.matrix, &kkt.rhs)?;
    Ok(unpack(problem, &kkt.layout, &z))
}

/// Solves the parametric problem at a fixed parameter value `θ`.
///
/// Fixed and constrained initial conditions only.
pub fn solve_dense_parametric(
    problem: &LqProblem,
    prox: &ProximalState,
    params: &ParametricData,
    theta: &DVector<f64>,
) -> Result<Solution> {
    if matches!(problem.init, InitialCondition::Cyclic) {
        return Err(LqError::Unsupported("parametric dense solve of a cyclic problem".into()));
    }
    let mut sys = build_full(problem, prox, Some(params))?;
    sys = eliminate(sys, VarKind::Parameter, 0, theta);
    if let InitialCondition::Fixed(x0) = &problem.init {
        sys = eliminate(sys, VarKind::State, 0, x0);
    }
    let z = lu_solve(&sys.matrix, &sys.rhs)?;
    Ok(unpack(problem, &sys.layout, &z))
}

/// Value-function coefficients of `(x_0, θ)` obtained by dense Schur complements.
#[derive(Debug, Clone)]
pub struct DenseValue {
    pub P: DMatrix<f64>,
    pub p: DVector<f64>,
    pub Lambda: DMatrix<f64>,
    pub Sigma: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

/// Eliminates every variable except `(x_0, θ)` from the parametric saddle function.
///
/// The initial condition of `problem` is ignored: `x_0` is treated as a parameter.
pub fn dense_value_params(
    problem: &LqProblem,
    prox: &ProximalState,
    params: &ParametricData,
) -> Result<DenseValue> {
    let mut p = problem.clone();
    p.init = InitialCondition::Fixed(DVector::zeros(problem.nx));
    let sys = build_full(&p, prox, Some(params))?;
    let zr = sys.layout.find(VarKind::State, 0).expect("x0");
    let tr = sys.layout.find(VarKind::Parameter, 0).expect("theta");
    let xi: Vec<usize> = (0..sys.layout.dim())
        .filter(|i| !zr.contains(i) && !tr.contains(i))
        .collect();
    let zidx: Vec<usize> = zr.clone().chain(tr.clone()).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| sys.matrix[(rows[i], cols[j])])
    };
    let l_xx = pick(&xi, &xi);
    let l_xz = pick(&xi, &zidx);
    let l_zz = pick(&zidx, &zidx);
    let g_xi = DVector::from_fn(xi.len(), |i, _| sys.rhs[xi[i]]);
    let g_z = DVector::from_fn(zidx.len(), |i, _| sys.rhs[zidx[i]]);
    let mut cols = DMatrix::zeros(xi.len(), zidx.len() + 1);
    cols.columns_mut(0, zidx.len()).copy_from(&l_xz);
    cols.column_mut(zidx.len()).copy_from(&g_xi);
    let sol = lu_solve_mat(&l_xx, &cols)?;
    let w = &l_zz - l_xz.transpose() * sol.columns(0, zidx.len());
    let wv = &g_z - l_xz.transpose() * sol.column(zidx.len());
    let nx = zr.len();
    let nth = tr.len();
    Ok(DenseValue {
        P: w.view((0, 0), (nx, nx)).into_owned(),
        p: wv.rows(0, nx).into_owned(),
        Lambda: w.view((0, nx), (nx, nth)).into_owned(),
        Sigma: w.view((nx, nx), (nth, nth)).into_owned(),
        sigma: wv.rows(nx, nth).into_owned(),
    })
}

/// Value of the proximal (parametric) Lagrangian at `sol`, with `x_0 = sol.x[0]`.
///
/// `theta` defaults to `sol.theta` when absent.
pub fn saddle_value(
    problem: &LqProblem,
    prox: &ProximalState,
    params: Option<&ParametricData>,
    theta: Option<&DVector<f64>>,
    sol: &Solution,
) -> Result<f64> {
    let mut p = problem.clone();
    if matches!(p.init, InitialCondition::Fixed(_)) {
        p.init = InitialCondition::Fixed(sol.x[0].clone());
    }
    let sys = build_full(&p, prox, params)?;
    let mut z = DVector::zeros(sys.layout.dim());
    for e in &sys.layout.entries {
        let v = match e.kind {
            VarKind::InitMultiplier => &sol.lam[0],
            VarKind::State => &sol.x[e.stage],
            VarKind::Control => &sol.u[e.stage],
            VarKind::PathMultiplier => &sol.nu[e.stage],
            VarKind::CoState => &sol.lam[e.stage],
            VarKind::Parameter => theta.or(sol.theta.as_ref()).expect("theta value"),
        };
        z.rows_mut(e.range.start, e.range.len()).copy_from(v);
    }
    let mut c = 0.0;
    for l in &prox.lam_e {
        c -= 0.5 * prox.mu * l.norm_squared();
    }
    for v in &prox.nu_e {
        c -= 0.5 * prox.mu * v.norm_squared();
    }
    if !matches!(problem.init, InitialCondition::Constrained { .. }) {
        c += 0.5 * prox.mu * prox.lam_e[0].norm_squared();
    }
    Ok(0.5 * z.dot(&(&sys.matrix * &z)) + sys.rhs.dot(&z) + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{kkt_residual, StageData, TerminalData};

    fn scalar_problem() -> LqProblem {
        let one = || DMatrix::from_element(1, 1, 1.0);
        let stage = StageData::explicit(one(), DMatrix::zeros(1, 1), one(), one(), one());
        LqProblem::new(
            1,
            1,
            vec![stage],
            TerminalData::unconstrained(one(), DVector::zeros(1)),
            InitialCondition::Fixed(DVector::from_element(1, 1.0)),
        )
        .unwrap()
    }

    #[test]
    fn smallest_instance_layout() {
        let p = scalar_problem();
        let prox = ProximalState::zeros(&p, 1.0).unwrap();
        let kkt = assemble(&p, &prox).unwrap();
        let kinds: Vec<_> = kkt.layout.entries.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![VarKind::Control, VarKind::CoState, VarKind::State]);
        assert_eq!(kkt.matrix.shape(), (3, 3));
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 3, &[
            1.0, 1.0, 0.0,
            1.0, -1.0, -1.0,
            0.0, -1.0, 1.0,
        ]);
        assert_eq!(kkt.matrix, expected);
        // rhs: r, f̄ + A x0, q_N
        assert_eq!(kkt.rhs.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn scalar_hand_solve() {
        // u + λ = 0, u − λ − x = −1, −λ + x = 0  ⇒  λ = x = 1/3, u = −1/3
        let p = scalar_problem();
        let prox = ProximalState::zeros(&p, 1.0).unwrap();
        let sol = solve_dense(&p, &prox).unwrap();
        assert!((sol.u[0][0] + 1.0 / 3.0).abs() < 1e-14);
        assert!((sol.lam[1][0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((sol.x[1][0] - 1.0 / 3.0).abs() < 1e-14);
        let res = kkt_residual(&p, Some(&prox), &sol).unwrap();
        assert!(res.max() < 1e-14);
    }

    #[test]
    fn homogeneous_problem_gives_zero() {
        let mut p = scalar_problem();
        p.init = InitialCondition::Fixed(DVector::zeros(1));
        let prox = ProximalState::zeros(&p, 0.5).unwrap();
        let sol = solve_dense(&p, &prox).unwrap();
        assert!(sol.blocks().all(|b| b.amax() == 0.0));
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let mut p = scalar_problem();
        p.init = InitialCondition::Constrained {
            G: -DMatrix::identity(1, 1),
            g: DVector::from_element(1, 2.0),
        };
        p.stages[0] = p.stages[0].clone().with_constraints(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 0.5),
        );
        let prox = ProximalState::zeros(&p, 0.1).unwrap();
        let kkt = assemble(&p, &prox).unwrap();
        assert_eq!(kkt.layout.entries[0].kind, VarKind::InitMultiplier);
        assert_eq!((&kkt.matrix - kkt.matrix.transpose()).amax(), 0.0);
    }
}
