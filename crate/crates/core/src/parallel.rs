//! Parallel condensation: the horizon is split into legs, each leg is solved
//! parametrically in the co-state that couples it to the next leg, and the legs are
//! stitched by a block-tridiagonal consensus system in the boundary states and
//! co-states.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{LqError, Result};
use crate::parametric::{parametric_sweep, roll_forward, ParamGains, ValueParams};
use crate::problem::{shift_rhs, InitialCondition, LqProblem, ProximalState, ShiftedRhs, Solution};
use crate::riccati::{
    backward_sweep, terminal_cost_to_go, terminal_multiplier, OpenStageFactor, StageGains,
    StageKernel,
};
use crate::tridiag::BlockTridiag;

/// Leg boundaries `0 = i_0 < i_1 < … < i_J ≤ N − 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    horizon: usize,
    indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionStrategy {
    /// Leg lengths differ by at most one; longer legs first.
    #[default]
    Equal,
}

impl Partition {
    pub fn from_indices(horizon: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(LqError::InvalidPartition("need at least two legs".into()));
        }
        if indices[0] != 0 {
            return Err(LqError::InvalidPartition("first leg must start at 0".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LqError::InvalidPartition("indices must be strictly increasing".into()));
        }
        if *indices.last().expect("nonempty") > horizon.saturating_sub(1) {
            return Err(LqError::InvalidPartition(format!(
                "last leg must start at or before N - 1 = {}",
                horizon.saturating_sub(1)
            )));
        }
        Ok(Partition { horizon, indices })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of coupling boundaries `J` (there are `J + 1` legs).
    pub fn j(&self) -> usize {
        self.indices.len() - 1
    }

    /// State indices `[i_j, i_{j+1} − 1]` of leg `j`, with `i_{J+1} = N + 1`.
    pub fn leg(&self, j: usize) -> (usize, usize) {
        let end = self.indices.get(j + 1).copied().unwrap_or(self.horizon + 1);
        (self.indices[j], end - 1)
    }

    /// Stage range `i_j .. i_{j+1}` (`.. N` for the last leg).
    fn stages(&self, j: usize) -> std::ops::Range<usize> {
        self.indices[j]..self.indices.get(j + 1).copied().unwrap_or(self.horizon)
    }
}

/// Splits `N` stages into `J + 1` legs.
pub fn make_partition(horizon: usize, legs_j: usize, strategy: PartitionStrategy) -> Result<Partition> {
    if legs_j < 1 || legs_j >= horizon {
        return Err(LqError::InvalidLegCount {
            horizon,
            legs: legs_j,
        });
    }
    match strategy {
        PartitionStrategy::Equal => {
            let parts = legs_j + 1;
            let (base, rem) = (horizon / parts, horizon % parts);
            let mut indices = Vec::with_capacity(parts);
            let mut at = 0;
            for k in 0..parts {
                indices.push(at);
                at += base + usize::from(k < rem);
            }
            Partition::from_indices(horizon, indices)
        }
    }
}

/// Default boundary count `J`: one leg per worker (`J = W − 1`), legs of at least
/// eight stages, `1 ≤ J < N`.
pub fn default_legs(horizon: usize, workers: usize) -> usize {
    workers
        .saturating_sub(1)
        .min(horizon / 8)
        .max(1)
        .min(horizon.saturating_sub(1).max(1))
}

/// Value function of a leg at its head, `V(x̃_j, λ̃_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegValue {
    pub Ptilde: DMatrix<f64>,
    pub ptilde: DVector<f64>,
    pub Lambdatilde: DMatrix<f64>,
    pub Sigmatilde: DMatrix<f64>,
    pub sigmatilde: DVector<f64>,
    /// `E` of the leg's last stage, coupling `λ̃_{j+1}` to `x̃_{j+1}`; zero for the last leg.
    pub Etilde: DMatrix<f64>,
}

/// Backward result of one leg.
#[derive(Debug, Clone)]
pub struct LegBackward {
    pub leg: usize,
    pub stages: std::ops::Range<usize>,
    pub gains: Vec<StageGains>,
    /// θ-columns; empty for the last leg.
    pub param_gains: Vec<ParamGains>,
    pub value: LegValue,
}

fn tag(leg: usize) -> impl Fn(LqError) -> LqError {
    move |e| LqError::Leg {
        leg,
        source: Box::new(e),
    }
}

/// Backward pass of leg `j`.
///
/// Legs `j < J` end with an open stage `t* = i_{j+1} − 1` whose outgoing dynamics
/// are dualized with `θ = λ̃_{j+1}`: `Φ = Aᵀ`, `Ψ = Bᵀ`, `γ = f̄`, `Γ = −μI`.
pub fn leg_backward(
    problem: &LqProblem,
    prox: &ProximalState,
    partition: &Partition,
    j: usize,
    kernel: StageKernel,
) -> Result<LegBackward> {
    let shifted = shift_rhs(problem, prox)?;
    leg_backward_shifted(problem, &shifted, prox.mu, partition, j, kernel)
}

fn leg_backward_shifted(
    problem: &LqProblem,
    shifted: &ShiftedRhs,
    mu: f64,
    partition: &Partition,
    j: usize,
    kernel: StageKernel,
) -> Result<LegBackward> {
    let nx = problem.nx;
    let range = partition.stages(j);
    let n = problem.horizon();
    if j == partition.j() {
        let seed = terminal_cost_to_go(&problem.terminal, &shifted.h[n], mu).map_err(tag(j))?;
        let bw = backward_sweep(
            &problem.stages[range.clone()],
            &shifted.f[range.clone()],
            &shifted.h[range.clone()],
            seed,
            mu,
            kernel,
            range.start,
        )
        .map_err(tag(j))?;
        let head = bw.cost_to_go.into_iter().next().expect("head");
        return Ok(LegBackward {
            leg: j,
            stages: range,
            gains: bw.gains,
            param_gains: Vec::new(),
            value: LegValue {
                Ptilde: head.P,
                ptilde: head.p,
                Lambdatilde: DMatrix::zeros(nx, nx),
                Sigmatilde: DMatrix::zeros(nx, nx),
                sigmatilde: DVector::zeros(nx),
                Etilde: DMatrix::zeros(nx, nx),
            },
        });
    }

    let ts = range.end - 1;
    let s = &problem.stages[ts];
    let (nu, nc) = (s.nu(), s.nc());
    let open = OpenStageFactor::new(s, mu, ts).map_err(tag(j))?;
    // columns: feedforward | feedback | θ
    let mut rho_u = DMatrix::zeros(nu, 1 + 2 * nx);
    rho_u.column_mut(0).copy_from(&s.r);
    rho_u.columns_mut(1, nx).copy_from(&s.S.transpose());
    rho_u.columns_mut(1 + nx, nx).copy_from(&s.B.transpose());
    let mut rho_nu = DMatrix::zeros(nc, 1 + 2 * nx);
    rho_nu.column_mut(0).copy_from(&shifted.h[ts]);
    rho_nu.columns_mut(1, nx).copy_from(&s.C);
    let (U, Nu) = open.solve(&rho_u, &rho_nu);
    let k = U.column(0).into_owned();
    let K = U.columns(1, nx).into_owned();
    let Kth = U.columns(1 + nx, nx).into_owned();
    let zeta = Nu.column(0).into_owned();
    let Z = Nu.columns(1, nx).into_owned();
    let Zth = Nu.columns(1 + nx, nx).into_owned();

    let mut P = &s.Q + &s.S * &K + s.C.tr_mul(&Z);
    crate::linalg::symmetrize(&mut P);
    let p = &s.q + &s.S * &k + s.C.tr_mul(&zeta);
    // Λ = Aᵀ + KᵀBᵀ,  Σ = −μI + BK^θ,  σ = f̄ + Bk
    let Lambda = s.A.transpose() + K.tr_mul(&s.B.transpose());
    let mut Sigma = &s.B * &Kth - DMatrix::identity(nx, nx) * mu;
    crate::linalg::symmetrize(&mut Sigma);
    let sigma = &shifted.f[ts] + &s.B * &k;
    let seed = ValueParams {
        P,
        p,
        Lambda,
        Sigma,
        sigma,
    };
    let open_gains = StageGains {
        k,
        K,
        zeta,
        Z,
        omega: DVector::zeros(nx),
        Omega: DMatrix::zeros(nx, nx),
        a: DVector::zeros(nx),
        M: DMatrix::zeros(nx, nx),
    };
    let open_pgains = ParamGains {
        Ktheta: Kth,
        Ztheta: Zth,
        OmegaTheta: DMatrix::identity(nx, nx),
        Mtheta: DMatrix::zeros(nx, nx),
    };

    let inner = range.start..ts;
    let none = vec![None; inner.len()];
    let mut bw = parametric_sweep(
        &problem.stages[inner.clone()],
        &none,
        &shifted.f[inner.clone()],
        &shifted.h[inner.clone()],
        seed,
        mu,
        kernel,
        inner.start,
    )
    .map_err(tag(j))?;
    bw.gains.push(open_gains);
    bw.param_gains.push(open_pgains);
    let head = bw.values.swap_remove(0);
    Ok(LegBackward {
        leg: j,
        stages: range,
        gains: bw.gains,
        param_gains: bw.param_gains,
        value: LegValue {
            Ptilde: head.P,
            ptilde: head.p,
            Lambdatilde: head.Lambda,
            Sigmatilde: head.Sigma,
            sigmatilde: head.sigma,
            Etilde: s.E.clone(),
        },
    })
}

/// Consensus system `M z = −rhs` in the boundary unknowns.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub matrix: BlockTridiag,
    pub rhs: Vec<DVector<f64>>,
    /// Whether the first two blocks are `(λ_0, x_0)`.
    pub has_initial: bool,
}

/// Builds the consensus system.
///
/// Constrained: unknowns `(λ_0, x_0, λ̃_1, x̃_1, …, x̃_J)`. Fixed: `x_0` is known and
/// the unknowns are `(λ̃_1, x̃_1, …, x̃_J)`.
pub fn assemble_consensus(
    legs: &[LegValue],
    init: &InitialCondition,
    g0_bar: Option<&DVector<f64>>,
    mu: f64,
) -> Result<Consensus> {
    let jj = legs.len() - 1;
    if jj == 0 {
        return Err(LqError::InvalidPartition("need at least two legs".into()));
    }
    let mut diag = Vec::with_capacity(2 * jj + 3);
    let mut sup = Vec::with_capacity(2 * jj + 2);
    let mut rhs = Vec::with_capacity(2 * jj + 3);
    let l0 = &legs[0];
    let has_initial = match init {
        InitialCondition::Constrained { G, g } => {
            let ng = G.nrows();
            diag.push(DMatrix::identity(ng, ng) * -mu);
            rhs.push(g0_bar.unwrap_or(g).clone());
            sup.push(G.clone());
            diag.push(l0.Ptilde.clone());
            rhs.push(l0.ptilde.clone());
            sup.push(l0.Lambdatilde.clone());
            diag.push(l0.Sigmatilde.clone());
            rhs.push(l0.sigmatilde.clone());
            true
        }
        InitialCondition::Fixed(x0) => {
            diag.push(l0.Sigmatilde.clone());
            rhs.push(&l0.sigmatilde + l0.Lambdatilde.tr_mul(x0));
            false
        }
        InitialCondition::Cyclic => {
            return Err(LqError::Unsupported(
                "the parallel backend does not support cyclic problems".into(),
            ))
        }
    };
    for j in 1..=jj {
        let lv = &legs[j];
        sup.push(legs[j - 1].Etilde.clone());
        diag.push(lv.Ptilde.clone());
        rhs.push(lv.ptilde.clone());
        if j < jj {
            sup.push(lv.Lambdatilde.clone());
            diag.push(lv.Sigmatilde.clone());
            rhs.push(lv.sigmatilde.clone());
        }
    }
    Ok(Consensus {
        matrix: BlockTridiag::new(diag, sup)?,
        rhs,
        has_initial,
    })
}

/// Boundary values `(λ_0, x̃_j, λ̃_{j+1})` from the consensus solve.
#[derive(Debug, Clone)]
struct Boundary {
    lam0: Option<DVector<f64>>,
    x: Vec<DVector<f64>>,
    lam: Vec<DVector<f64>>,
}

fn solve_consensus(c: &Consensus, init: &InitialCondition) -> Result<Boundary> {
    let f = c.matrix.factor_udut()?;
    let neg: Vec<DVector<f64>> = c.rhs.iter().map(|v| -v).collect();
    let z = f.solve(&neg)?;
    let mut it = z.into_iter();
    let (lam0, x0) = if c.has_initial {
        let l = it.next().expect("λ0");
        (Some(l), it.next().expect("x0"))
    } else {
        match init {
            InitialCondition::Fixed(x0) => (None, x0.clone()),
            _ => unreachable!("consensus without initial block is fixed mode"),
        }
    };
    let mut x = vec![x0];
    let mut lam = Vec::new();
    while let Some(l) = it.next() {
        lam.push(l);
        x.push(it.next().expect("x̃ follows λ̃"));
    }
    Ok(Boundary { lam0, x, lam })
}

struct LegTrajectory {
    x: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    lam: Vec<DVector<f64>>,
    nu: Vec<DVector<f64>>,
}

fn leg_forward(leg: &LegBackward, x0: &DVector<f64>, theta: Option<&DVector<f64>>) -> LegTrajectory {
    let n = leg.gains.len();
    let nx = x0.len();
    let mut tr = LegTrajectory {
        x: vec![DVector::zeros(nx); n + 1],
        u: vec![DVector::zeros(0); n],
        lam: vec![DVector::zeros(nx); n + 1],
        nu: vec![DVector::zeros(0); n],
    };
    match theta {
        Some(th) => roll_forward(
            &leg.gains,
            &leg.param_gains,
            x0,
            th,
            &mut tr.x,
            &mut tr.u,
            &mut tr.lam,
            &mut tr.nu,
        ),
        None => {
            tr.x[0] = x0.clone();
            for (t, g) in leg.gains.iter().enumerate() {
                let x = &tr.x[t];
                tr.u[t] = &g.k + &g.K * x;
                tr.nu[t] = &g.zeta + &g.Z * x;
                tr.lam[t + 1] = &g.omega + &g.Omega * x;
                tr.x[t + 1] = &g.a + &g.M * x;
            }
        }
    }
    tr
}

/// Runs `f` on each leg index, in parallel on the current rayon pool.
fn per_leg<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

fn solve_with(
    problem: &LqProblem,
    prox: &ProximalState,
    partition: &Partition,
    kernel: StageKernel,
) -> Result<Solution> {
    if matches!(problem.init, InitialCondition::Cyclic) {
        return Err(LqError::Unsupported(
            "the parallel backend does not support cyclic problems".into(),
        ));
    }
    if partition.horizon() != problem.horizon() {
        return Err(LqError::InvalidPartition(format!(
            "partition is for N = {}, problem has N = {}",
            partition.horizon(),
            problem.horizon()
        )));
    }
    let shifted = shift_rhs(problem, prox)?;
    let mu = prox.mu;
    let nlegs = partition.j() + 1;

    let legs = per_leg(nlegs, |j| {
        leg_backward_shifted(problem, &shifted, mu, partition, j, kernel)
    })?;

    let values: Vec<LegValue> = legs.iter().map(|l| l.value.clone()).collect();
    let cons = assemble_consensus(&values, &problem.init, shifted.g0.as_ref(), mu)?;
    let b = solve_consensus(&cons, &problem.init)?;

    let trajs = per_leg(nlegs, |j| {
        Ok(leg_forward(&legs[j], &b.x[j], b.lam.get(j)))
    })?;

    let n = problem.horizon();
    let mut sol = Solution::zeros(problem);
    if let Some(l0) = b.lam0 {
        sol.lam[0] = l0;
    }
    for (leg, tr) in legs.iter().zip(trajs) {
        let start = leg.stages.start;
        // an open last stage leaves its successor state to the next leg
        let keep = if leg.stages.end == n { leg.stages.len() + 1 } else { leg.stages.len() };
        for (k, v) in tr.x.into_iter().take(keep).enumerate() {
            sol.x[start + k] = v;
        }
        for (k, v) in tr.u.into_iter().enumerate() {
            sol.u[start + k] = v;
        }
        for (k, v) in tr.nu.into_iter().enumerate() {
            sol.nu[start + k] = v;
        }
        for (k, v) in tr.lam.into_iter().enumerate().skip(1) {
            sol.lam[start + k] = v;
        }
    }
    sol.nu[n] = terminal_multiplier(&problem.terminal, &shifted.h[n], &sol.x[n], mu);
    Ok(sol)
}

/// Parallel solve with an equal partition into `legs_j + 1` legs on the global pool.
pub fn solve_parallel(problem: &LqProblem, prox: &ProximalState, legs_j: usize) -> Result<Solution> {
    let partition = make_partition(problem.horizon(), legs_j, PartitionStrategy::Equal)?;
    solve_with(problem, prox, &partition, StageKernel::BlockSparse)
}

/// Parallel solver bound to a fixed partition and a dedicated worker pool.
pub struct ParallelSolver {
    partition: Partition,
    pool: rayon::ThreadPool,
    kernel: StageKernel,
}

impl ParallelSolver {
    pub fn new(partition: Partition, workers: usize, kernel: StageKernel) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| LqError::Unsupported(format!("cannot start worker pool: {e}")))?;
        Ok(ParallelSolver {
            partition,
            pool,
            kernel,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn solve(&self, problem: &LqProblem, prox: &ProximalState) -> Result<Solution> {
        self.pool
            .install(|| solve_with(problem, prox, &self.partition, self.kernel))
    }

    /// Runs `op` inside this solver's pool, so that code using the global-pool entry
    /// points (e.g. the outer loop with `Backend::Parallel`) uses these workers.
    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        self.pool.install(op)
    }
}
