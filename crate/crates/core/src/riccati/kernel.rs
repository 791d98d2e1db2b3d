//! Stage kernels: solve the stage KKT system
//!
//! ```text
//! [ R   Dᵀ   Bᵀ   0 ] [ u  ]     [ ρ_u ]
//! [ D  −μI   0    0 ] [ ν  ] = − [ ρ_ν ]
//! [ B   0   −μI   E ] [ λ⁺ ]     [ ρ_λ ]
//! [ 0   0    Eᵀ   P⁺] [ x⁺ ]     [ ρ_x ]
//! ```
//!
//! for the feedforward column `(r, h̄, f̄, p⁺)`, the feedback columns `(Sᵀ, C, A, 0)`
//! and any extra parameter columns.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{LqError, Result};
use crate::linalg::{symmetrize, Ldlt};
use crate::problem::StageData;

/// Which stage factorization the backward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageKernel {
    /// Symmetric-indefinite factorization of the whole `(nu + nc + 2nx)` stage matrix.
    Dense,
    /// Elimination through `E⁻¹`, `Υ = I + μP̌` and the `(nu + nc)` block `𝒦̂`.
    #[default]
    BlockSparse,
}

/// Primal-dual gains of one stage: `u = k + Kx`, `ν = ζ + Zx`, `λ⁺ = ω + Ωx`, `x⁺ = a + Mx`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGains {
    pub k: DVector<f64>,
    pub K: DMatrix<f64>,
    pub zeta: DVector<f64>,
    pub Z: DMatrix<f64>,
    pub omega: DVector<f64>,
    pub Omega: DMatrix<f64>,
    pub a: DVector<f64>,
    pub M: DMatrix<f64>,
}

impl StageGains {
    pub fn zeros(nx: usize, nu: usize, nc: usize) -> Self {
        StageGains {
            k: DVector::zeros(nu),
            K: DMatrix::zeros(nu, nx),
            zeta: DVector::zeros(nc),
            Z: DMatrix::zeros(nc, nx),
            omega: DVector::zeros(nx),
            Omega: DMatrix::zeros(nx, nx),
            a: DVector::zeros(nx),
            M: DMatrix::zeros(nx, nx),
        }
    }
}

/// Quadratic cost-to-go `½xᵀPx + pᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGo {
    pub P: DMatrix<f64>,
    pub p: DVector<f64>,
}

/// Right-hand side blocks of the stage system, one column per right-hand side.
#[derive(Debug, Clone)]
pub struct StageRhs {
    pub u: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub lam: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// Solution blocks `(u, ν, λ⁺, x⁺)` for each right-hand column.
#[derive(Debug, Clone)]
pub struct StageColumns {
    pub u: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub lam: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// Intermediate quantities of the block-sparse elimination.
#[derive(Debug, Clone)]
pub struct BlockSparseWorkspace {
    /// `E⁻¹`.
    pub E_inv: DMatrix<f64>,
    /// `P̌ = E⁻ᵀP⁺E⁻¹`.
    pub Pcheck: DMatrix<f64>,
    /// LU of `Υ = I + μP̌`.
    pub upsilon: LU<f64, Dyn, Dyn>,
    /// `𝒱 = Υ⁻¹P̌`.
    pub V: DMatrix<f64>,
    pub Rhat: DMatrix<f64>,
    /// `𝒦̂ = [R̂ Dᵀ; D −μI]`, or `R̂` alone when `nc = 0`.
    pub Khat: Ldlt,
}

#[derive(Debug, Clone)]
enum FactorKind {
    Dense(Ldlt),
    BlockSparse(Box<BlockSparseWorkspace>),
}

/// A factored stage KKT matrix.
#[derive(Debug, Clone)]
pub struct StageFactor {
    kind: FactorKind,
    nx: usize,
    nu: usize,
    nc: usize,
    mu: f64,
    B: DMatrix<f64>,
}

fn is_neg_identity(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.iter()
            .enumerate()
            .all(|(idx, &v)| v == if idx % m.nrows() == idx / m.nrows() { -1.0 } else { 0.0 })
}

impl StageFactor {
    /// Factors the stage matrix for `stage` with next cost-to-go matrix `P_next`.
    pub fn new(
        kernel: StageKernel,
        stage: &StageData,
        P_next: &DMatrix<f64>,
        mu: f64,
        t: usize,
    ) -> Result<Self> {
        let (nx, nu, nc) = (stage.nx(), stage.nu(), stage.nc());
        if nc > 0 && mu <= 0.0 {
            return Err(LqError::InvalidMu(mu));
        }
        let kind = match kernel {
            StageKernel::Dense => {
                let n = nu + nc + 2 * nx;
                let mut K = DMatrix::zeros(n, n);
                let (iu, inu, il, ix) = (0, nu, nu + nc, nu + nc + nx);
                K.view_mut((iu, iu), (nu, nu)).copy_from(&stage.R);
                K.view_mut((inu, iu), (nc, nu)).copy_from(&stage.D);
                K.view_mut((iu, inu), (nu, nc)).copy_from(&stage.D.transpose());
                K.view_mut((il, iu), (nx, nu)).copy_from(&stage.B);
                K.view_mut((iu, il), (nu, nx)).copy_from(&stage.B.transpose());
                K.view_mut((il, ix), (nx, nx)).copy_from(&stage.E);
                K.view_mut((ix, il), (nx, nx)).copy_from(&stage.E.transpose());
                K.view_mut((ix, ix), (nx, nx)).copy_from(P_next);
                for i in inu..ix {
                    K[(i, i)] = -mu;
                }
                FactorKind::Dense(Ldlt::factor(&K).ok_or(LqError::SingularStageKkt { stage: t })?)
            }
            StageKernel::BlockSparse => {
                let E_inv = if is_neg_identity(&stage.E) {
                    stage.E.clone()
                } else {
                    let lu = stage.E.clone().lu();
                    let scale = stage.E.amax().max(f64::MIN_POSITIVE);
                    let piv = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                    if piv <= nx as f64 * f64::EPSILON * scale {
                        return Err(LqError::SingularE { stage: t });
                    }
                    lu.try_inverse().ok_or(LqError::SingularE { stage: t })?
                };
                let mut Pcheck = E_inv.tr_mul(P_next) * &E_inv;
                symmetrize(&mut Pcheck);
                let mut ups = &Pcheck * mu;
                for i in 0..nx {
                    ups[(i, i)] += 1.0;
                }
                let upsilon = ups.lu();
                let mut V = upsilon
                    .solve(&Pcheck)
                    .ok_or(LqError::SingularUpsilon { stage: t })?;
                if !V.iter().all(|v| v.is_finite()) {
                    return Err(LqError::SingularUpsilon { stage: t });
                }
                symmetrize(&mut V);
                let Rhat = &stage.R + stage.B.tr_mul(&(&V * &stage.B));
                let Khat = if nc == 0 {
                    Ldlt::factor(&Rhat)
                } else {
                    let mut K = DMatrix::zeros(nu + nc, nu + nc);
                    K.view_mut((0, 0), (nu, nu)).copy_from(&Rhat);
                    K.view_mut((nu, 0), (nc, nu)).copy_from(&stage.D);
                    K.view_mut((0, nu), (nu, nc)).copy_from(&stage.D.transpose());
                    for i in nu..nu + nc {
                        K[(i, i)] = -mu;
                    }
                    Ldlt::factor(&K)
                }
                .ok_or(LqError::SingularStageKkt { stage: t })?;
                FactorKind::BlockSparse(Box::new(BlockSparseWorkspace {
                    E_inv,
                    Pcheck,
                    upsilon,
                    V,
                    Rhat,
                    Khat,
                }))
            }
        };
        Ok(StageFactor {
            kind,
            nx,
            nu,
            nc,
            mu,
            B: stage.B.clone(),
        })
    }

    pub fn workspace(&self) -> Option<&BlockSparseWorkspace> {
        match &self.kind {
            FactorKind::BlockSparse(w) => Some(w),
            FactorKind::Dense(_) => None,
        }
    }

    /// Solves the stage system for every column of `rhs`.
    pub fn solve(&self, rhs: &StageRhs) -> StageColumns {
        let (nx, nu, nc, mu) = (self.nx, self.nu, self.nc, self.mu);
        let m = rhs.u.ncols();
        match &self.kind {
            FactorKind::Dense(f) => {
                let n = nu + nc + 2 * nx;
                let mut b = DMatrix::zeros(n, m);
                b.rows_mut(0, nu).copy_from(&rhs.u);
                b.rows_mut(nu, nc).copy_from(&rhs.nu);
                b.rows_mut(nu + nc, nx).copy_from(&rhs.lam);
                b.rows_mut(nu + nc + nx, nx).copy_from(&rhs.x);
                b.neg_mut();
                let z = f.solve_mat(&b);
                StageColumns {
                    u: z.rows(0, nu).into_owned(),
                    nu: z.rows(nu, nc).into_owned(),
                    lam: z.rows(nu + nc, nx).into_owned(),
                    x: z.rows(nu + nc + nx, nx).into_owned(),
                }
            }
            FactorKind::BlockSparse(w) => {
                // p̌ = −E⁻ᵀρ_x,  v = Υ⁻¹(p̌ + P̌ρ_λ)
                let pcheck = -w.E_inv.tr_mul(&rhs.x);
                let v = w
                    .upsilon
                    .solve(&(pcheck + &w.Pcheck * &rhs.lam))
                    .expect("Υ factored");
                let mut b = DMatrix::zeros(nu + nc, m);
                b.rows_mut(0, nu).copy_from(&(&rhs.u + self.B.tr_mul(&v)));
                b.rows_mut(nu, nc).copy_from(&rhs.nu);
                b.neg_mut();
                let z = w.Khat.solve_mat(&b);
                let u = z.rows(0, nu).into_owned();
                let bu = &self.B * &u;
                let lam = v + &w.V * &bu;
                let x = -(&w.E_inv * (bu + &rhs.lam - &lam * mu));
                StageColumns {
                    u,
                    nu: z.rows(nu, nc).into_owned(),
                    lam,
                    x,
                }
            }
        }
    }

    /// Feedforward/feedback gains and the stage cost-to-go.
    pub fn gains(
        &self,
        stage: &StageData,
        f_bar: &DVector<f64>,
        h_bar: &DVector<f64>,
        next: &CostToGo,
    ) -> (StageGains, CostToGo) {
        match &self.kind {
            FactorKind::Dense(_) => self.gains_dense(stage, f_bar, h_bar, next),
            FactorKind::BlockSparse(w) => self.gains_blocksparse(w, stage, f_bar, h_bar, next),
        }
    }

    fn gains_dense(
        &self,
        stage: &StageData,
        f_bar: &DVector<f64>,
        h_bar: &DVector<f64>,
        next: &CostToGo,
    ) -> (StageGains, CostToGo) {
        let (nx, nu, nc) = (self.nx, self.nu, self.nc);
        let m = nx + 1;
        let mut rhs = StageRhs {
            u: DMatrix::zeros(nu, m),
            nu: DMatrix::zeros(nc, m),
            lam: DMatrix::zeros(nx, m),
            x: DMatrix::zeros(nx, m),
        };
        rhs.u.column_mut(0).copy_from(&stage.r);
        rhs.u.columns_mut(1, nx).copy_from(&stage.S.transpose());
        rhs.nu.column_mut(0).copy_from(h_bar);
        rhs.nu.columns_mut(1, nx).copy_from(&stage.C);
        rhs.lam.column_mut(0).copy_from(f_bar);
        rhs.lam.columns_mut(1, nx).copy_from(&stage.A);
        rhs.x.column_mut(0).copy_from(&next.p);
        let cols = self.solve(&rhs);
        let g = split_gains(&cols, nx);
        // P = Q + SK + CᵀZ + AᵀΩ,  p = q + Sk + Cᵀζ + Aᵀω
        let mut P = &stage.Q + &stage.S * &g.K + stage.C.tr_mul(&g.Z) + stage.A.tr_mul(&g.Omega);
        symmetrize(&mut P);
        let p = &stage.q + &stage.S * &g.k + stage.C.tr_mul(&g.zeta) + stage.A.tr_mul(&g.omega);
        (g, CostToGo { P, p })
    }

    fn gains_blocksparse(
        &self,
        w: &BlockSparseWorkspace,
        stage: &StageData,
        f_bar: &DVector<f64>,
        h_bar: &DVector<f64>,
        next: &CostToGo,
    ) -> (StageGains, CostToGo) {
        let (nx, nu, nc, mu) = (self.nx, self.nu, self.nc, self.mu);
        let (A, B) = (&stage.A, &stage.B);
        // p̌ = −E⁻ᵀp⁺,  v = Υ⁻¹(p̌ + P̌f̄)
        let pcheck = -w.E_inv.tr_mul(&next.p);
        let v = w
            .upsilon
            .solve(&(pcheck + &w.Pcheck * f_bar))
            .expect("Υ factored");
        let VA = &w.V * A;
        let Qhat = &stage.Q + A.tr_mul(&VA);
        let Shat = &stage.S + VA.tr_mul(B);
        let qhat = &stage.q + A.tr_mul(&v);
        let rhat = &stage.r + B.tr_mul(&v);

        let mut rhs = DMatrix::zeros(nu + nc, nx + 1);
        rhs.view_mut((0, 0), (nu, 1)).copy_from(&rhat);
        rhs.view_mut((0, 1), (nu, nx)).copy_from(&Shat.transpose());
        rhs.view_mut((nu, 0), (nc, 1)).copy_from(h_bar);
        rhs.view_mut((nu, 1), (nc, nx)).copy_from(&stage.C);
        rhs.neg_mut();
        let sol = w.Khat.solve_mat(&rhs);
        let k = sol.view((0, 0), (nu, 1)).column(0).into_owned();
        let K = sol.view((0, 1), (nu, nx)).into_owned();
        let zeta = sol.view((nu, 0), (nc, 1)).column(0).into_owned();
        let Z = sol.view((nu, 1), (nc, nx)).into_owned();

        // λ⁺ = v + 𝒱Bk + 𝒱(A + BK)x
        let Bk = B * &k;
        let ABK = A + B * &K;
        let omega = &v + &w.V * &Bk;
        let Omega = &w.V * &ABK;
        // x⁺ = −E⁻¹x̌,  x̌ = (f̄ + Bk − μω) + (A + BK − μΩ)x
        let a = -(&w.E_inv * (f_bar + Bk - &omega * mu));
        let M = -(&w.E_inv * (ABK - &Omega * mu));

        let mut P = Qhat + &Shat * &K + stage.C.tr_mul(&Z);
        symmetrize(&mut P);
        let p = qhat + &Shat * &k + stage.C.tr_mul(&zeta);
        (
            StageGains {
                k,
                K,
                zeta,
                Z,
                omega,
                Omega,
                a,
                M,
            },
            CostToGo { P, p },
        )
    }
}

fn split_gains(cols: &StageColumns, nx: usize) -> StageGains {
    StageGains {
        k: cols.u.column(0).into_owned(),
        K: cols.u.columns(1, nx).into_owned(),
        zeta: cols.nu.column(0).into_owned(),
        Z: cols.nu.columns(1, nx).into_owned(),
        omega: cols.lam.column(0).into_owned(),
        Omega: cols.lam.columns(1, nx).into_owned(),
        a: cols.x.column(0).into_owned(),
        M: cols.x.columns(1, nx).into_owned(),
    }
}

/// One backward step with the dense stage factorization.
pub fn stage_kernel_dense(
    stage: &StageData,
    f_bar: &DVector<f64>,
    h_bar: &DVector<f64>,
    next: &CostToGo,
    mu: f64,
) -> Result<(StageGains, CostToGo)> {
    let f = StageFactor::new(StageKernel::Dense, stage, &next.P, mu, 0)?;
    Ok(f.gains(stage, f_bar, h_bar, next))
}

/// One backward step with the block-sparse stage factorization.
pub fn stage_kernel_blocksparse(
    stage: &StageData,
    f_bar: &DVector<f64>,
    h_bar: &DVector<f64>,
    next: &CostToGo,
    mu: f64,
) -> Result<(StageGains, CostToGo)> {
    let f = StageFactor::new(StageKernel::BlockSparse, stage, &next.P, mu, 0)?;
    Ok(f.gains(stage, f_bar, h_bar, next))
}

/// Factorization of a stage without outgoing dynamics: `[R Dᵀ; D −μI]`.
///
/// Used for the last stage of a parameterized leg, whose co-state is the parameter.
#[derive(Debug, Clone)]
pub(crate) struct OpenStageFactor {
    ldlt: Ldlt,
    nu: usize,
    nc: usize,
}

impl OpenStageFactor {
    pub(crate) fn new(stage: &StageData, mu: f64, t: usize) -> Result<Self> {
        let (nu, nc) = (stage.nu(), stage.nc());
        let mut K = DMatrix::zeros(nu + nc, nu + nc);
        K.view_mut((0, 0), (nu, nu)).copy_from(&stage.R);
        K.view_mut((nu, 0), (nc, nu)).copy_from(&stage.D);
        K.view_mut((0, nu), (nu, nc)).copy_from(&stage.D.transpose());
        for i in nu..nu + nc {
            K[(i, i)] = -mu;
        }
        let ldlt = Ldlt::factor(&K).ok_or(LqError::SingularStageKkt { stage: t })?;
        Ok(OpenStageFactor { ldlt, nu, nc })
    }

    /// Returns `(u, ν)` blocks solving `[R Dᵀ; D −μI][u; ν] = −[ρ_u; ρ_ν]`.
    pub(crate) fn solve(&self, rho_u: &DMatrix<f64>, rho_nu: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nu, nc) = (self.nu, self.nc);
        let m = rho_u.ncols();
        let mut b = DMatrix::zeros(nu + nc, m);
        b.rows_mut(0, nu).copy_from(rho_u);
        b.rows_mut(nu, nc).copy_from(rho_nu);
        b.neg_mut();
        let z = self.ldlt.solve_mat(&b);
        (z.rows(0, nu).into_owned(), z.rows(nu, nc).into_owned())
    }
}
