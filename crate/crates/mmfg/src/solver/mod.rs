//! Solves the limiting consistency system: the 5x5 matrix Riccati equation,
//! its companion backward equation, the scalar Riccati pair (Sigma, p), and
//! the decentralized equilibrium feedback built from them, together with the
//! runtime solvability checks.

mod backward;
mod conditions;
mod feedback;
mod general;

pub use backward::{closed_form_s, riccati_2x3, s_block, solve_backward_case, BackwardExact};
pub use conditions::{a6_determinant_path, check_conditions, ConditionCheck, ConditionReport};
pub use feedback::{AffineControl, EquilibriumFeedback};
pub use general::{solve, solve_with_options, SolveOptions};

use crate::assembly::AssembledSystem;
use crate::model::ModelParams;
use crate::numerics::{Mat, TimeGrid};

/// Exponential martingale factor `E_t = exp(a W0_t - a^2 t / 2)` appearing in
/// the terminal data. `kappa` scales its contribution to the stacked terminal
/// vector; loadings live in the per-node `psi` coefficients.
#[derive(Clone, Debug)]
pub struct MartingaleFactor {
    pub a: f64,
}

/// Everything the solver produces at one grid node.
#[derive(Clone, Debug)]
pub struct NodeData {
    /// S_t, the 5x5 Riccati solution.
    pub s: Mat,
    /// W_t = (I + S_t rho~)^{-1}.
    pub w: Mat,
    /// T_t = W_t S_t, the realized decoupling map on (Xbar, Lbar).
    pub t_dec: Mat,
    /// Deterministic part of Upsilon_t.
    pub phi: [f64; 5],
    /// Martingale loadings of Upsilon_t, one per factor.
    pub psi: Vec<[f64; 5]>,
    /// Sigma_t, the scalar Riccati solution of the idiosyncratic block.
    pub sigma: f64,
    /// Row kernel of the conditional-expectation functional p_t on (Xbar, Lbar).
    pub alpha_p: [f64; 5],
    /// Deterministic source of p_t.
    pub beta0: f64,
    /// Martingale sources of p_t, one per factor.
    pub beta_mart: Vec<f64>,
    /// Row (C1 | C2) driving the integral term of the minor feedback.
    pub c_row: [f64; 5],
}

/// Time-gridded solution of the limiting consistency system.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    pub grid: TimeGrid,
    pub params: ModelParams,
    pub sys: AssembledSystem,
    pub nodes: Vec<NodeData>,
    pub factors: Vec<MartingaleFactor>,
    /// Initial adjoint vector resolved from the fixed point at t = 0.
    pub lbar0: [f64; 3],
    /// Initial recursive states (Y0_0, Y1_0), deterministic.
    pub ybar0: [f64; 2],
    /// Initial state adjoints (P0, P, Pdd) at t = 0.
    pub pbar0: [f64; 3],
    /// Log-integral of the discount rate pi(t) = b1 + b2^2 Sigma_t / (2R),
    /// so Pi(t, s) = exp(pi_log[s] - pi_log[t]).
    pub pi_log: Vec<f64>,
    pub conditions: ConditionReport,
    /// Exact adjoint evaluators, present for backward specializations.
    pub backward: Option<BackwardExact>,
}

impl MeanFieldSolution {
    pub fn node(&self, i: usize) -> &NodeData {
        &self.nodes[i]
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    /// Upsilon_t at node `i` for realized martingale factors `efac`.
    pub fn upsilon(&self, i: usize, efac: &[f64]) -> [f64; 5] {
        let n = &self.nodes[i];
        let mut u = n.phi;
        for (k, psi) in n.psi.iter().enumerate() {
            for j in 0..5 {
                u[j] += psi[j] * efac[k];
            }
        }
        u
    }

    /// p_t at node `i` given the stacked state and realized factors.
    pub fn p_value(&self, i: usize, xbar: [f64; 2], lbar: [f64; 3], efac: &[f64]) -> f64 {
        let n = &self.nodes[i];
        let mut p = n.beta0;
        let stacked = [xbar[0], xbar[1], lbar[0], lbar[1], lbar[2]];
        for j in 0..5 {
            p += n.alpha_p[j] * stacked[j];
        }
        for (k, b) in n.beta_mart.iter().enumerate() {
            p += b * efac[k];
        }
        p
    }

    /// Pi(node_i, node_j) for i <= j.
    pub fn pi(&self, i: usize, j: usize) -> f64 {
        (self.pi_log[j] - self.pi_log[i]).exp()
    }

    /// Max |S| over the grid, the headline scalar of the solve summary.
    pub fn s_max_abs(&self) -> f64 {
        self.nodes
            .iter()
            .fold(0.0_f64, |m, n| m.max(n.s.norm_max()))
    }

    pub fn sigma_path(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.sigma).collect()
    }

    /// Decoupled backward pair (Ybar, Pbar) at node `i`.
    pub fn ybar_pbar(&self, i: usize, xbar: [f64; 2], lbar: [f64; 3], efac: &[f64]) -> [f64; 5] {
        let n = &self.nodes[i];
        let stacked = Mat::col_vec(&[xbar[0], xbar[1], lbar[0], lbar[1], lbar[2]]);
        let ups = self.upsilon(i, efac);
        let mut out = n.t_dec.matmul(&stacked);
        let w_ups = n.w.matmul(&Mat::col_vec(&ups));
        out.axpy(1.0, &w_ups);
        [
            out[(0, 0)],
            out[(1, 0)],
            out[(2, 0)],
            out[(3, 0)],
            out[(4, 0)],
        ]
    }

    /// Decoupled intensity pair (Zbar, Qbar) at node `i`:
    /// W [S H5 U~ + S H6 V + S (sigma0 e1) + upsilon], where U~ is the
    /// transformed forward pair U - rho~ V and V the decoupled backward pair.
    pub fn zbar_qbar(&self, i: usize, xbar: [f64; 2], lbar: [f64; 3], efac: &[f64]) -> [f64; 5] {
        let n = &self.nodes[i];
        let u = Mat::col_vec(&[xbar[0], xbar[1], lbar[0], lbar[1], lbar[2]]);
        let v_arr = self.ybar_pbar(i, xbar, lbar, efac);
        let v = Mat::col_vec(&v_arr);
        let mut u_twist = u.clone();
        u_twist.axpy(-1.0, &self.sys.rho_tilde.matmul(&v));
        let mut inner = self.sys.H5.matmul(&u_twist);
        inner.axpy(1.0, &self.sys.H6.matmul(&v));
        inner[(0, 0)] += self.params.sigma0;
        let mut bracket = n.s.matmul(&inner);
        // The martingale intensity of Upsilon: sum_k a_k psi_k E^k.
        for (k, f) in self.factors.iter().enumerate() {
            let psi = Mat::col_vec(&n.psi[k]);
            bracket.axpy(f.a * efac[k], &psi);
        }
        let out = n.w.matmul(&bracket);
        [
            out[(0, 0)],
            out[(1, 0)],
            out[(2, 0)],
            out[(3, 0)],
            out[(4, 0)],
        ]
    }
}

/// Collects the distinct martingale exponents of the two terminal conditions
/// and their kappa-weighted contributions to the stacked terminal vector
/// (slot 0 for the major, slot 1 for the minor).
pub(crate) fn collect_factors(
    params: &ModelParams,
) -> (Vec<MartingaleFactor>, [f64; 2], Vec<[f64; 2]>) {
    let mut factors: Vec<MartingaleFactor> = Vec::new();
    let mut det = [0.0; 2];
    let mut contribs: Vec<[f64; 2]> = Vec::new();
    for (slot, cond) in [(0usize, params.xi0), (1usize, params.xi)] {
        let (d, mart) = cond.martingale_decomposition(params.T);
        det[slot] += d;
        if let Some((a, kappa)) = mart {
            if let Some(pos) = factors.iter().position(|f| f.a == a) {
                contribs[pos][slot] += kappa;
            } else {
                factors.push(MartingaleFactor { a });
                let mut c = [0.0; 2];
                c[slot] = kappa;
                contribs.push(c);
            }
        }
    }
    (factors, det, contribs)
}
