//! Small dense helpers and a Bunch-Kaufman symmetric-indefinite factorization.
//!
//! The factorization computes `P A Pᵀ = L D Lᵀ` with `L` unit lower triangular and
//! `D` block diagonal with 1x1 and 2x2 blocks, using the partial pivoting rule of
//! Bunch and Kaufman (growth factor `alpha = (1 + sqrt 17) / 8`).

use nalgebra::{DMatrix, DVector};

const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

/// Factored symmetric (possibly indefinite) matrix.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    /// Unit lower factor stored below the diagonal; diagonal blocks of `D` on and
    /// just below the diagonal.
    lu: DMatrix<f64>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    /// `true` at `k` when `(k, k+1)` form a 2x2 pivot.
    two_by_two: Vec<bool>,
}

impl Ldlt {
    /// Factors a symmetric matrix; only the lower triangle is read.
    ///
    /// Returns `None` when a pivot falls below `n * eps * max|a_ij|`.
    pub fn factor(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Ldlt::factor needs a square matrix");
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                w[(i, j)] = a[(i, j)];
                w[(j, i)] = a[(i, j)];
            }
        }
        let scale = w.amax();
        let tiny = (n.max(1) as f64) * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut two_by_two = vec![false; n];

        let mut k = 0;
        while k < n {
            let akk = w[(k, k)].abs();
            let (r, colmax) = (k + 1..n)
                .map(|i| (i, w[(i, k)].abs()))
                .fold((k, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });

            let pivot_2x2;
            if akk.max(colmax) <= tiny {
                return None;
            }
            if akk >= BK_ALPHA * colmax {
                pivot_2x2 = false;
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != r)
                    .map(|j| w[(r, j)].abs())
                    .fold(0.0, f64::max);
                if akk * rowmax >= BK_ALPHA * colmax * colmax {
                    pivot_2x2 = false;
                } else if w[(r, r)].abs() >= BK_ALPHA * rowmax {
                    sym_swap(&mut w, k, r);
                    perm.swap(k, r);
                    pivot_2x2 = false;
                } else {
                    sym_swap(&mut w, k + 1, r);
                    perm.swap(k + 1, r);
                    pivot_2x2 = true;
                }
            }

            if !pivot_2x2 {
                let d = w[(k, k)];
                if d.abs() <= tiny {
                    return None;
                }
                for i in k + 1..n {
                    w[(i, k)] /= d;
                }
                for j in k + 1..n {
                    let ljd = w[(j, k)] * d;
                    if ljd == 0.0 {
                        continue;
                    }
                    for i in j..n {
                        w[(i, j)] -= w[(i, k)] * ljd;
                    }
                }
                for j in k + 1..n {
                    for i in j + 1..n {
                        w[(j, i)] = w[(i, j)];
                    }
                }
                k += 1;
            } else {
                let d11 = w[(k, k)];
                let d21 = w[(k + 1, k)];
                let d22 = w[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det.abs() <= tiny * scale {
                    return None;
                }
                // rows i > k+1: [l_i1 l_i2] = [w_ik w_i,k+1] D⁻¹
                for i in k + 2..n {
                    let a1 = w[(i, k)];
                    let a2 = w[(i, k + 1)];
                    let l1 = (a1 * d22 - a2 * d21) / det;
                    let l2 = (a2 * d11 - a1 * d21) / det;
                    for j in k + 2..=i {
                        let upd = l1 * w[(j, k)] + l2 * w[(j, k + 1)];
                        w[(i, j)] -= upd;
                    }
                }
                // multipliers overwrite the column only after the trailing update
                for i in k + 2..n {
                    let a1 = w[(i, k)];
                    let a2 = w[(i, k + 1)];
                    w[(i, k)] = (a1 * d22 - a2 * d21) / det;
                    w[(i, k + 1)] = (a2 * d11 - a1 * d21) / det;
                }
                for j in k + 2..n {
                    for i in j + 1..n {
                        w[(j, i)] = w[(i, j)];
                    }
                }
                two_by_two[k] = true;
                k += 2;
            }
        }
        Some(Ldlt {
            n,
            lu: w,
            perm,
            two_by_two,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L y = Pb
        let mut k = 0;
        while k < n {
            if self.two_by_two[k] {
                for i in k + 2..n {
                    y[i] -= self.lu[(i, k)] * y[k] + self.lu[(i, k + 1)] * y[k + 1];
                }
                k += 2;
            } else {
                for i in k + 1..n {
                    y[i] -= self.lu[(i, k)] * y[k];
                }
                k += 1;
            }
        }
        // D z = y
        let mut k = 0;
        while k < n {
            if self.two_by_two[k] {
                let d11 = self.lu[(k, k)];
                let d21 = self.lu[(k + 1, k)];
                let d22 = self.lu[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                let (y1, y2) = (y[k], y[k + 1]);
                y[k] = (d22 * y1 - d21 * y2) / det;
                y[k + 1] = (d11 * y2 - d21 * y1) / det;
                k += 2;
            } else {
                y[k] /= self.lu[(k, k)];
                k += 1;
            }
        }
        // Lᵀ w = z
        let mut k = n;
        while k > 0 {
            let top = if k >= 2 && self.two_by_two[k - 2] { k - 2 } else { k - 1 };
            for c in top..k {
                let mut s = 0.0;
                for i in k..n {
                    s += self.lu[(i, c)] * y[i];
                }
                y[c] -= s;
            }
            k = top;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

fn sym_swap(w: &mut DMatrix<f64>, a: usize, b: usize) {
    if a != b {
        w.swap_rows(a, b);
        w.swap_columns(a, b);
    }
}

/// `(M + Mᵀ)/2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute entry of `M − Mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            a = a.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    a
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// `‖a − b‖∞ / max(1, ‖b‖∞)` over a sequence of vector pairs.
pub fn rel_diff<'a>(
    a: impl IntoIterator<Item = &'a DVector<f64>>,
    b: impl IntoIterator<Item = &'a DVector<f64>>,
) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (x, y) in a.into_iter().zip(b) {
        assert_eq!(x.len(), y.len());
        diff = diff.max((x - y).amax());
        scale = scale.max(y.amax());
    }
    diff / scale
}
