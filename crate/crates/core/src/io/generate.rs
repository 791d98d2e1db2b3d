//! Seeded synthetic problems.
//!
//! Cost Hessians are `LᵀL + εI` over the joint `(x, u)` space, with `L` uniform in
//! `[−1, 1]/√n` so the spectrum stays O(1) as dimensions grow; hence `[Q S; Sᵀ R] ≻ 0`.
//! Dynamics and constraint matrices are uniform in `[−1, 1]`. A reference trajectory
//! `(x̂, û)` is sampled first and `f`, `h`, `g` are chosen so that it satisfies every
//! constraint, which makes each instance feasible regardless of `A`'s spectrum.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{InitialCondition, LqProblem, StageData, TerminalData};

pub const COST_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    #[default]
    Fixed,
    /// `G = −I` (or a random full-row-rank `G` when `ng < nx`) through `x̂_0`.
    Constrained { ng: usize },
    Cyclic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nc: usize,
    /// `E = −I + 0.1·G` instead of `−I`.
    pub implicit_e: bool,
    /// Drop the path constraints on every third stage (`t ≡ 1 mod 3`).
    pub mixed_nc: bool,
    /// Terminal constraint rows; defaults to `min(nc, nx)`.
    pub terminal_nc: Option<usize>,
    pub init: InitKind,
}

impl GeneratorConfig {
    pub fn new(seed: u64, horizon: usize, nx: usize, nu: usize, nc: usize) -> Self {
        GeneratorConfig {
            seed,
            horizon,
            nx,
            nu,
            nc,
            implicit_e: false,
            mixed_nc: false,
            terminal_nc: None,
            init: InitKind::Fixed,
        }
    }
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn mat(&mut self, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| self.0.random_range(-1.0..1.0))
    }

    fn vec(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.0.random_range(-1.0..1.0))
    }

    fn spd(&mut self, n: usize) -> DMatrix<f64> {
        let l = self.mat(n, n) / (n as f64).sqrt();
        l.tr_mul(&l) + DMatrix::identity(n, n) * COST_EPS
    }
}

/// Builds a deterministic instance from `cfg`.
pub fn generate(cfg: &GeneratorConfig) -> LqProblem {
    let (n, nx, nu) = (cfg.horizon, cfg.nx, cfg.nu);
    assert!(n >= 1 && nx >= 1 && nu >= 1, "dimensions must be positive");
    let mut s = Sampler(ChaCha8Rng::seed_from_u64(cfg.seed));

    let xs: Vec<DVector<f64>> = (0..=n).map(|_| s.vec(nx)).collect();
    let us: Vec<DVector<f64>> = (0..n).map(|_| s.vec(nu)).collect();
    let mut stages = Vec::with_capacity(n);
    for t in 0..n {
        let H = s.spd(nx + nu);
        let Q = H.view((0, 0), (nx, nx)).into_owned();
        let S = H.view((0, nx), (nx, nu)).into_owned();
        let R = H.view((nx, nx), (nu, nu)).into_owned();
        let q = s.vec(nx);
        let r = s.vec(nu);
        let A = s.mat(nx, nx);
        let B = s.mat(nx, nu);
        let E = if cfg.implicit_e {
            -DMatrix::identity(nx, nx) + s.mat(nx, nx) * 0.1
        } else {
            -DMatrix::identity(nx, nx)
        };
        let f = -(&A * &xs[t] + &B * &us[t] + &E * &xs[t + 1]);
        let nc = if cfg.mixed_nc && t % 3 == 1 { 0 } else { cfg.nc };
        let C = s.mat(nc, nx);
        let D = s.mat(nc, nu);
        let h = -(&C * &xs[t] + &D * &us[t]);
        stages.push(StageData {
            Q,
            S,
            R,
            q,
            r,
            A,
            B,
            E,
            f,
            C,
            D,
            h,
        });
    }
    let ncn = cfg.terminal_nc.unwrap_or(cfg.nc.min(nx));
    let Cn = s.mat(ncn, nx);
    let terminal = TerminalData {
        Q: s.spd(nx),
        q: s.vec(nx),
        h: -(&Cn * &xs[n]),
        C: Cn,
    };
    let init = match cfg.init {
        InitKind::Fixed => InitialCondition::Fixed(xs[0].clone()),
        InitKind::Constrained { ng } => {
            let G = if ng == nx {
                -DMatrix::identity(nx, nx)
            } else {
                s.mat(ng, nx)
            };
            let g = -(&G * &xs[0]);
            InitialCondition::Constrained { G, g }
        }
        InitKind::Cyclic => InitialCondition::Cyclic,
    };
    LqProblem::new(nx, nu, stages, terminal, init).expect("generator builds consistent dimensions")
}
