//! Dense linear solves by LU with partial pivoting, for systems up to ~20x20.

use super::mat::Mat;
use crate::error::NumericsError;

/// LU factorization with partial pivoting of a square matrix.
pub struct Lu {
    n: usize,
    lu: Mat,
    perm: Vec<usize>,
    /// Crude reciprocal condition estimate in the 1-norm.
    rcond: f64,
}

const PIVOT_TOL: f64 = 1e-12;

impl Lu {
    pub fn factor(a: &Mat) -> Result<Lu, NumericsError> {
        assert!(a.is_square(), "LU needs a square matrix");
        if !a.is_finite() {
            return Err(NumericsError::NonFinite {
                context: "LU input".into(),
            });
        }
        let n = a.rows();
        let norm_a = a.norm_l1().max(f64::MIN_POSITIVE);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                if lu[(i, k)].abs() > best {
                    best = lu[(i, k)].abs();
                    p = i;
                }
            }
            if best <= PIVOT_TOL * norm_a {
                return Err(NumericsError::SingularSystem {
                    pivot: best,
                    condition_estimate: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let m = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = m;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= m * v;
                }
            }
        }
        let mut f = Lu {
            n,
            lu,
            perm,
            rcond: 0.0,
        };
        f.rcond = f.estimate_rcond(norm_a);
        Ok(f)
    }

    /// 1-norm condition estimate via ||A^{-1}||_1 computed column by column.
    /// Matrices here are at most ~20x20, so the exact inverse norm is cheap.
    fn estimate_rcond(&self, norm_a: f64) -> f64 {
        let mut inv_norm = 0.0_f64;
        for j in 0..self.n {
            let mut e = Mat::zeros(self.n, 1);
            e[(j, 0)] = 1.0;
            let col = self.solve_factored(&e);
            inv_norm = inv_norm.max(col.data().iter().map(|v| v.abs()).sum());
        }
        if inv_norm == 0.0 {
            return 1.0;
        }
        1.0 / (norm_a * inv_norm)
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    fn solve_factored(&self, b: &Mat) -> Mat {
        let n = self.n;
        assert_eq!(b.rows(), n, "rhs height mismatch");
        let mut x = Mat::zeros(n, b.cols());
        for c in 0..b.cols() {
            // forward substitution on permuted rhs
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut s = b[(self.perm[i], c)];
                for j in 0..i {
                    s -= self.lu[(i, j)] * y[j];
                }
                y[i] = s;
            }
            // back substitution
            for i in (0..n).rev() {
                let mut s = y[i];
                for j in i + 1..n {
                    s -= self.lu[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        x
    }

    pub fn solve(&self, b: &Mat) -> Mat {
        self.solve_factored(b)
    }
}

/// Solves `A x = b`, checking the residual as a postcondition rather than
/// assuming backward stability. Returns the solution and the residual norm.
pub fn solve_checked(a: &Mat, b: &Mat) -> Result<(Mat, f64), NumericsError> {
    let lu = Lu::factor(a)?;
    let x = lu.solve(b);
    let residual = (&a.matmul(&x) - b).norm_inf();
    let scale = a.norm_inf() * x.norm_inf() + b.norm_inf();
    if !residual.is_finite() || residual > 1e-8 * scale.max(1.0) {
        return Err(NumericsError::ResidualTooLarge { residual });
    }
    Ok((x, residual))
}

/// Solves `A x = b` without the residual postcondition, for hot paths where
/// the caller checks conditioning once per grid instead of per call.
pub fn solve_lu(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    Ok(Lu::factor(a)?.solve(b))
}

pub fn inverse(a: &Mat) -> Result<Mat, NumericsError> {
    solve_lu(a, &Mat::identity(a.rows()))
}

pub fn det(a: &Mat) -> Result<f64, NumericsError> {
    assert!(a.is_square());
    let n = a.rows();
    let norm_a = a.norm_l1().max(f64::MIN_POSITIVE);
    let mut lu = a.clone();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            if lu[(i, k)].abs() > best {
                best = lu[(i, k)].abs();
                p = i;
            }
        }
        if best <= f64::EPSILON * norm_a {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            sign = -sign;
        }
        for i in k + 1..n {
            let m = lu[(i, k)] / lu[(k, k)];
            for j in k + 1..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= m * v;
            }
        }
    }
    let mut d = sign;
    for k in 0..n {
        d *= lu[(k, k)];
    }
    Ok(d)
}
