//! The purely backward specialization: the Riccati unknown collapses to a
//! 2x3 block, the companion backward equation to a 2-vector, and the adjoint
//! processes admit explicit exponential representations, which make the
//! equilibrium intercepts evaluable in closed form along any common-noise
//! path.

use crate::assembly::{assemble, build_b_matrix, check_backward, AssembledSystem};
use crate::error::{NumericsError, SolverError};
use crate::model::ModelParams;
use crate::numerics::{
    expm, integrate_backward, inverse, solve_lu, Mat, MatrixFunctionPath, TimeGrid,
};

use super::general;
use super::MeanFieldSolution;

/// Exact evaluators for the adjoint processes of a backward specialization.
///
/// (L0, L) solves a linear SDE with constant coefficient matrices
/// Ht = (D1+D2)^T and Kt = (F1+F2)^T; when H = Ht - Kt^2/2 commutes with Kt
/// the solution is the matrix exponential exp(H t + Kt W0_t) applied to the
/// initial vector, and Ldd is the scalar geometric process
/// Ldd_t = Ldd_0 exp((f2 - f3^2/2) t + f3 W0_t).
#[derive(Clone, Debug)]
pub struct BackwardExact {
    pub h: Mat,
    pub k: Mat,
    /// Initial adjoint vector (L0_0, L_0, Ldd_0).
    pub l0: [f64; 3],
    pub ldd_drift: f64,
    pub ldd_vol: f64,
    /// Whether exp(H t + K W) is an exact solution ([H, K] = 0).
    pub commuting: bool,
    a3_0: [f64; 3],
    avg_l: [f64; 3],
}

impl BackwardExact {
    /// The adjoint vector at time t on the path with W0_t = w.
    pub fn lbar(&self, t: f64, w: f64) -> Result<[f64; 3], NumericsError> {
        let mut m = self.h.scale(t);
        m.axpy(w, &self.k);
        let e = expm(&m)?;
        let head = e.matmul(&Mat::col_vec(&[self.l0[0], self.l0[1]]));
        let ldd = self.l0[2] * (self.ldd_drift * t + self.ldd_vol * w).exp();
        Ok([head[(0, 0)], head[(1, 0)], ldd])
    }

    /// The equilibrium intercepts (M0_t, M_t) on the path with W0_t = w.
    pub fn intercepts(&self, t: f64, w: f64) -> Result<(f64, f64), NumericsError> {
        let l = self.lbar(t, w)?;
        let m0 = self.a3_0[0] * l[0] + self.a3_0[1] * l[1] + self.a3_0[2] * l[2];
        let m = self.avg_l[0] * l[0] + self.avg_l[1] * l[1] + self.avg_l[2] * l[2];
        Ok((m0, m))
    }
}

/// Builds the exact adjoint evaluators when the specialization applies and
/// the exponential form is exact.
pub(crate) fn exact_adjoints(
    sys: &AssembledSystem,
    p: &ModelParams,
    lbar0: [f64; 3],
) -> Option<BackwardExact> {
    if check_backward(p).is_err() {
        return None;
    }
    let d12t = sys.d12().transpose();
    let kt = sys.f12().transpose();
    let mut h = d12t.clone();
    h.axpy(-0.5, &kt.matmul(&kt));
    let commutator = (&h.matmul(&kt) - &kt.matmul(&h)).norm_max();
    let commuting = commutator < 1e-12;
    if !commuting {
        return None;
    }
    Some(BackwardExact {
        h,
        k: kt,
        l0: lbar0,
        ldd_drift: p.f2 - 0.5 * p.f3 * p.f3,
        ldd_vol: p.f3,
        commuting,
        a3_0: sys.consts.a3_0,
        avg_l: sys.consts.avg_l(),
    })
}

/// Solves the backward specialization. The full stacked solve already reduces
/// exactly to the 2x3 system (the complementary blocks of S stay identically
/// zero), so this validates the specialization, runs the stacked solve, and
/// checks the reduction.
pub fn solve_backward_case(
    params: &ModelParams,
    grid: TimeGrid,
) -> Result<MeanFieldSolution, SolverError> {
    check_backward(params)?;
    let sol = general::solve(params, grid)?;
    debug_assert!(
        sol.nodes
            .iter()
            .all(|n| n.s.block(2, 0, 3, 5).norm_max() == 0.0
                && n.s.block(0, 0, 2, 2).norm_max() == 0.0),
        "backward reduction must leave the complementary blocks of S at zero"
    );
    Ok(sol)
}

/// The 2x3 Riccati block of a backward solution.
pub fn s_block(sol: &MeanFieldSolution, node: usize) -> Mat {
    sol.nodes[node].s.block(0, 2, 2, 3)
}

/// Direct RK4 integration of the reduced 2x3 Riccati equation, independent of
/// the stacked 5x5 sweep. Used to cross-check the reduction.
pub fn riccati_2x3(
    params: &ModelParams,
    grid: TimeGrid,
) -> Result<MatrixFunctionPath, SolverError> {
    check_backward(params)?;
    let sys = assemble(params);
    let c34 = sys.c34();
    let c56 = sys.c56();
    let c78 = sys.c78();
    let c_tilde = sys.c_tilde();
    let b_tilde = sys.b_tilde();
    let f12 = sys.f12();
    let rho = sys.rho.clone();
    let rhs = move |_t: f64, s: &Mat| -> Result<Mat, NumericsError> {
        let s_rho = s.matmul(&rho); // 2x2
        let i_plus = &Mat::identity(2) + &s_rho;
        let w = inverse(&i_plus)?;
        let sc56 = s.matmul(&c56);
        let mut inner = sc56.clone();
        inner.axpy(1.0, &sc56.matmul(&rho).matmul(s));
        let mut rhs = s.matmul(&(&c34 + &rho.matmul(&c78)));
        rhs.axpy(1.0, &c_tilde.matmul(s));
        rhs.axpy(1.0, &s.matmul(&b_tilde).matmul(s));
        rhs.axpy(1.0, &i_plus.matmul(&f12).matmul(&w).matmul(&inner));
        rhs.axpy(1.0, &c78);
        Ok(-&rhs)
    };
    integrate_backward(rhs, Mat::zeros(2, 3), grid).map_err(SolverError::from)
}

/// Closed-form S_t of the scalar-intensity backward case,
///   S_t = -corner(exp(B (T-t)))^{-1} (rows 4..5, cols 1..3 of the same),
/// available when the companion block matrix applies.
pub fn closed_form_s(params: &ModelParams, t: f64) -> Result<Mat, SolverError> {
    let sys = assemble(params);
    let b = build_b_matrix(&sys, params)?;
    let e = expm(&b.scale(params.T - t))?;
    let corner = e.block(3, 3, 2, 2);
    let left = e.block(3, 0, 2, 3);
    let s = solve_lu(&corner, &left)?;
    Ok(-&s)
}
