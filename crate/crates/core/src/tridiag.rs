//! Symmetric block-tridiagonal solves by a back-to-front block `UDUᵀ` factorization.
//!
//! The matrix has diagonal blocks `A_0..A_N` and super-diagonal blocks `B_1..B_N`
//! (`B_i` is `n_{i−1} × n_i`). Block sizes may vary, and the diagonal blocks may be
//! indefinite, so each pivot block is factored with symmetric pivoting.

use nalgebra::{DMatrix, DVector};

use crate::error::{LqError, Result};
use crate::linalg::Ldlt;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    pub diag: Vec<DMatrix<f64>>,
    /// `sup[i − 1] = B_i`.
    pub sup: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn new(diag: Vec<DMatrix<f64>>, sup: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = BlockTridiag { diag, sup };
        m.validate()?;
        Ok(m)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.diag.iter().map(|d| d.nrows()).collect()
    }

    pub fn dim(&self) -> usize {
        self.diag.iter().map(|d| d.nrows()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.diag.is_empty() {
            return Err(LqError::dim("tridiag", "diag", ">= 1 block", 0));
        }
        if self.sup.len() + 1 != self.diag.len() {
            return Err(LqError::dim("tridiag", "sup", self.diag.len() - 1, self.sup.len()));
        }
        for (i, d) in self.diag.iter().enumerate() {
            if !d.is_square() {
                return Err(LqError::dim(
                    format!("tridiag.diag[{i}]"),
                    "shape",
                    "square",
                    format!("{}x{}", d.nrows(), d.ncols()),
                ));
            }
        }
        for (i, b) in self.sup.iter().enumerate() {
            let want = (self.diag[i].nrows(), self.diag[i + 1].nrows());
            if b.shape() != want {
                return Err(LqError::dim(
                    format!("tridiag.sup[{i}]"),
                    "shape",
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", b.nrows(), b.ncols()),
                ));
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let sizes = self.block_sizes();
        let offs = offsets(&sizes);
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, d) in self.diag.iter().enumerate() {
            m.view_mut((offs[i], offs[i]), (sizes[i], sizes[i])).copy_from(d);
        }
        for (i, b) in self.sup.iter().enumerate() {
            m.view_mut((offs[i], offs[i + 1]), b.shape()).copy_from(b);
            m.view_mut((offs[i + 1], offs[i]), (b.ncols(), b.nrows()))
                .copy_from(&b.transpose());
        }
        m
    }

    /// `𝖣_N = A_N`, `𝖴_i = B_i 𝖣_i⁻¹`, `𝖣_{i−1} = A_{i−1} − 𝖴_i B_iᵀ`.
    pub fn factor_udut(&self) -> Result<BlockUdut> {
        self.validate()?;
        let n = self.diag.len();
        let mut d = vec![DMatrix::zeros(0, 0); n];
        let mut fac: Vec<Option<Ldlt>> = vec![None; n];
        let mut u = vec![DMatrix::zeros(0, 0); n - 1];
        d[n - 1] = self.diag[n - 1].clone();
        for i in (0..n).rev() {
            let f = Ldlt::factor(&d[i]).ok_or(LqError::SingularDiagonalBlock(i))?;
            if i > 0 {
                let b = &self.sup[i - 1];
                // 𝖴_i = (𝖣_i⁻¹ B_iᵀ)ᵀ, 𝖣_i symmetric
                let ui = f.solve_mat(&b.transpose()).transpose();
                let mut next = &self.diag[i - 1] - &ui * b.transpose();
                crate::linalg::symmetrize(&mut next);
                d[i - 1] = next;
                u[i - 1] = ui;
            }
            fac[i] = Some(f);
        }
        Ok(BlockUdut {
            d,
            d_fac: fac.into_iter().map(|f| f.expect("factored")).collect(),
            u,
            b: self.sup.clone(),
        })
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut o = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    o.push(0);
    for s in sizes {
        acc += s;
        o.push(acc);
    }
    o
}

/// Block `UDUᵀ` factors: `U` is unit upper block-bidiagonal with off-diagonal `𝖴_i`.
#[derive(Debug, Clone)]
pub struct BlockUdut {
    /// Pivot blocks `𝖣_i`.
    pub d: Vec<DMatrix<f64>>,
    d_fac: Vec<Ldlt>,
    /// `u[i − 1] = 𝖴_i`.
    pub u: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl BlockUdut {
    pub fn block_sizes(&self) -> Vec<usize> {
        self.d.iter().map(|d| d.nrows()).collect()
    }

    /// Solves `M x = c` for stacked block vectors.
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n = self.d.len();
        if rhs.len() != n {
            return Err(LqError::dim("tridiag.rhs", "blocks", n, rhs.len()));
        }
        for (i, (c, d)) in rhs.iter().zip(&self.d).enumerate() {
            if c.len() != d.nrows() {
                return Err(LqError::dim(format!("tridiag.rhs[{i}]"), "len", d.nrows(), c.len()));
            }
        }
        // Z_N = 𝖣_N⁻¹C_N, Z_i = 𝖣_i⁻¹(C_i − B_{i+1}Z_{i+1})
        let mut z: Vec<DVector<f64>> = vec![DVector::zeros(0); n];
        z[n - 1] = self.d_fac[n - 1].solve_vec(&rhs[n - 1]);
        for i in (0..n - 1).rev() {
            let c = &rhs[i] - &self.b[i] * &z[i + 1];
            z[i] = self.d_fac[i].solve_vec(&c);
        }
        // X_0 = Z_0, X_{i+1} = Z_{i+1} − 𝖴_{i+1}ᵀX_i
        for i in 0..n - 1 {
            let corr = self.u[i].tr_mul(&z[i]);
            z[i + 1] -= corr;
        }
        Ok(z)
    }

    /// Multi-column solve; columns are processed independently, so the result equals
    /// separate single-column solves bitwise.
    pub fn solve_mat(&self, rhs: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.d.len();
        if rhs.len() != n {
            return Err(LqError::dim("tridiag.rhs", "blocks", n, rhs.len()));
        }
        let m = rhs[0].ncols();
        let mut out: Vec<DMatrix<f64>> = self.d.iter().map(|d| DMatrix::zeros(d.nrows(), m)).collect();
        for j in 0..m {
            let col: Vec<DVector<f64>> = rhs.iter().map(|c| c.column(j).into_owned()).collect();
            let x = self.solve(&col)?;
            for (o, xi) in out.iter_mut().zip(x) {
                o.column_mut(j).copy_from(&xi);
            }
        }
        Ok(out)
    }

    /// Dense `U D Uᵀ`, for checking the factorization.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sizes = self.block_sizes();
        let offs = offsets(&sizes);
        let n = *offs.last().expect("offsets");
        let mut u = DMatrix::identity(n, n);
        let mut d = DMatrix::zeros(n, n);
        for (i, di) in self.d.iter().enumerate() {
            d.view_mut((offs[i], offs[i]), (sizes[i], sizes[i])).copy_from(di);
        }
        for (i, ui) in self.u.iter().enumerate() {
            u.view_mut((offs[i], offs[i + 1]), ui.shape()).copy_from(ui);
        }
        &u * d * u.transpose()
    }
}
