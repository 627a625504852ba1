//! The joint backward pass: matrix Riccati S, companion coefficients
//! (phi, psi) of Upsilon, and the conditional-expectation kernel of p, all
//! integrated in one RK4 sweep so that every right-hand side sees stage-
//! consistent values of S. Sigma is evaluated from its exponential formula
//! at arbitrary times, so nothing is ever interpolated.

use crate::assembly::{assemble, AssembledSystem};
use crate::error::{NumericsError, SolverError};
use crate::model::ModelParams;
use crate::numerics::{expm, inverse, solve_lu, Lu, Mat, TimeGrid};

use super::conditions;
use super::{backward, collect_factors, MartingaleFactor, MeanFieldSolution, NodeData};

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Reciprocal-condition floor for (I + S rho~); below it the node counts
    /// as a solvability failure.
    pub rcond_min: f64,
    /// Abort on failed solvability/positivity checks (the default), or keep
    /// going and only record them in the report.
    pub abort_on_condition_failure: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rcond_min: 1e-10,
            abort_on_condition_failure: true,
        }
    }
}

/// Solves the limiting consistency system on `grid`.
pub fn solve(params: &ModelParams, grid: TimeGrid) -> Result<MeanFieldSolution, SolverError> {
    solve_with_options(params, grid, SolveOptions::default())
}

pub fn solve_with_options(
    params: &ModelParams,
    grid: TimeGrid,
    opts: SolveOptions,
) -> Result<MeanFieldSolution, SolverError> {
    let params = params.clone().validated()?;
    let sys = assemble(&params);
    let (factors, det_terminal, mart_contribs) = collect_factors(&params);

    let pass = integrate_joint(&sys, &params, grid, &factors, det_terminal, &mart_contribs)?;
    let conditions = conditions::build_report(&sys, &params, grid, &pass, opts.rcond_min);
    if opts.abort_on_condition_failure {
        if let Some(node) = conditions.a5.first_failing_node {
            return Err(SolverError::SolvabilityFailure {
                t: grid.node(node),
                detail: format!(
                    "reciprocal condition estimate {:.3e} below {:.3e}",
                    conditions.a5.min_value, opts.rcond_min
                ),
            });
        }
        if let Some(node) = conditions.a6.first_failing_node {
            return Err(SolverError::DeterminantNotPositive {
                t: grid.node(node),
                det: conditions.a6.min_value,
            });
        }
    }

    let nodes = build_nodes(&sys, &params, grid, &pass)?;
    let pi_log = accumulate_pi_log(&params, grid, &nodes);

    let (lbar0, ybar0, pbar0) = initial_fixed_point(&sys, &params, &nodes)?;

    let backward = if params.is_backward_specialization() {
        backward::exact_adjoints(&sys, &params, lbar0)
    } else {
        None
    };

    Ok(MeanFieldSolution {
        grid,
        params,
        sys,
        nodes,
        factors,
        lbar0,
        ybar0,
        pbar0,
        pi_log,
        conditions,
        backward,
    })
}

/// Raw output of the joint RK4 sweep: one flat state per node.
pub(crate) struct JointPass {
    pub states: Vec<Vec<f64>>,
    pub n_factors: usize,
}

impl JointPass {
    pub fn s_at(&self, i: usize) -> Mat {
        Mat::from_vec(5, 5, self.states[i][..25].to_vec())
    }
}

const S_LEN: usize = 25;

fn layout(n_factors: usize) -> (usize, usize, usize, usize, usize) {
    // offsets: phi, psi, alpha, beta0, beta_k; total length
    let phi = S_LEN;
    let psi = phi + 5;
    let alpha = psi + 5 * n_factors;
    let beta0 = alpha + 5;
    let beta_k = beta0 + 1;
    (phi, psi, alpha, beta0, beta_k)
}

fn integrate_joint(
    sys: &AssembledSystem,
    p: &ModelParams,
    grid: TimeGrid,
    factors: &[MartingaleFactor],
    det_terminal: [f64; 2],
    mart_contribs: &[[f64; 2]],
) -> Result<JointPass, SolverError> {
    let nf = factors.len();
    let (off_phi, off_psi, off_alpha, _off_beta0, off_beta_k) = layout(nf);
    let len = off_beta_k + nf;

    // Terminal data. S_T = (I - G1)^{-1} G2 and the Upsilon coefficients get
    // (I - G1)^{-1} applied to their stacked terminal vectors.
    let i_minus_g1 = &Mat::identity(5) - &sys.G1;
    let ig1 = Lu::factor(&i_minus_g1).map_err(|_| SolverError::TerminalConditionFailure)?;
    let s_terminal = ig1.solve(&sys.G2);
    let phi_terminal = ig1.solve(&Mat::col_vec(&[
        det_terminal[0],
        det_terminal[1],
        0.0,
        0.0,
        0.0,
    ]));
    let mut terminal = vec![0.0; len];
    terminal[..S_LEN].copy_from_slice(s_terminal.data());
    for j in 0..5 {
        terminal[off_phi + j] = phi_terminal[(j, 0)];
    }
    for (k, contrib) in mart_contribs.iter().enumerate() {
        let psi_t = ig1.solve(&Mat::col_vec(&[contrib[0], contrib[1], 0.0, 0.0, 0.0]));
        for j in 0..5 {
            terminal[off_psi + 5 * k + j] = psi_t[(j, 0)];
        }
    }
    // p-kernel terminal: the adjoint terminal -L_T Phi1 in the last slot.
    terminal[off_alpha + 4] = -p.Phi1;

    let exponents: Vec<f64> = factors.iter().map(|f| f.a).collect();
    let rhs = |t: f64, state: &Mat| -> Result<Mat, NumericsError> {
        joint_rhs(sys, p, t, state.data(), nf, &exponents).map(|v| Mat::from_vec(len, 1, v))
    };

    let path = crate::numerics::integrate_backward(rhs, Mat::from_vec(len, 1, terminal), grid)
        .map_err(|e| match e {
            NumericsError::BlowUp { t } => SolverError::SolvabilityFailure {
                t,
                detail: "integration blow-up".to_string(),
            },
            NumericsError::SingularSystem {
                pivot,
                condition_estimate,
            } => SolverError::SolvabilityFailure {
                t: f64::NAN,
                detail: format!("singular (pivot {pivot:.3e}, cond est {condition_estimate:.3e})"),
            },
            other => SolverError::Numerics(other),
        })?;

    Ok(JointPass {
        states: path.values.iter().map(|m| m.data().to_vec()).collect(),
        n_factors: nf,
    })
}

#[allow(clippy::too_many_lines)]
fn joint_rhs(
    sys: &AssembledSystem,
    p: &ModelParams,
    t: f64,
    state: &[f64],
    nf: usize,
    exponents: &[f64],
) -> Result<Vec<f64>, NumericsError> {
    let (off_phi, off_psi, off_alpha, off_beta0, off_beta_k) = layout(nf);
    let s = Mat::from_vec(5, 5, state[..S_LEN].to_vec());

    let ident = Mat::identity(5);
    let i_plus = &ident + &s.matmul(&sys.rho_tilde);
    let w = inverse(&i_plus)?;
    let t_dec = w.matmul(&s);

    // S' = -(S H1 + H2 S + S H3 S + (I+S rho~) H4 W (S H5 + S H6 S) + H7).
    let sh6 = s.matmul(&sys.H6);
    let mut bracket = s.matmul(&sys.H5);
    bracket.axpy(1.0, &sh6.matmul(&s));
    let h4w = i_plus.matmul(&sys.H4).matmul(&w);
    let mut s_rhs = s.matmul(&sys.H1);
    s_rhs.axpy(1.0, &sys.H2.matmul(&s));
    s_rhs.axpy(1.0, &s.matmul(&sys.H3).matmul(&s));
    s_rhs.axpy(1.0, &h4w.matmul(&bracket));
    s_rhs.axpy(1.0, &sys.H7);
    let s_rhs = -&s_rhs;

    // Upsilon coefficient dynamics share G = S H3 + H2 + (I+S rho~) H4 W S H6
    // with martingale corrections a_k * F, F = (I+S rho~) H4 W.
    let mut g_ups = s.matmul(&sys.H3);
    g_ups.axpy(1.0, &sys.H2);
    g_ups.axpy(1.0, &h4w.matmul(&sh6));
    // Deterministic source from the common-noise loading of the state,
    // carried through the same resolvent as the other intensity terms.
    let sigma_col = Mat::col_vec(&[p.sigma0, 0.0, 0.0, 0.0, 0.0]);
    let h_src = h4w.matmul(&s.matmul(&sigma_col));

    let phi = Mat::col_vec(&state[off_phi..off_phi + 5]);
    let mut phi_rhs = g_ups.matmul(&phi);
    phi_rhs.axpy(1.0, &h_src);
    let phi_rhs = -&phi_rhs;

    // Scalar Riccati value and discount rate at this time.
    let sigma_t = sigma_at(p, t)?;
    let pi_t = p.b1 + 0.5 * p.b2 * p.b2 * sigma_t / p.R;

    // Kernel row: alpha' = -(alpha (D + pi I) + c).
    let b12 = &sys.B1 + &sys.B2;
    let t_p_rows = t_dec.block(2, 0, 3, 5);
    let mut d_mat = Mat::zeros(5, 5);
    d_mat.set_block(0, 0, &(&sys.A1 + &sys.A2));
    d_mat.set_block(0, 2, &(&sys.C1 + &sys.C2));
    d_mat.set_block(2, 2, &sys.c34());
    let x_feedback = b12.matmul(&t_p_rows); // 2x5
    for i in 0..2 {
        for j in 0..5 {
            d_mat[(i, j)] += x_feedback[(i, j)];
        }
    }
    let lambda2 = Mat::row_vec(&sys.lambda2);
    let c_row = {
        let mut c = Mat::row_vec(&sys.lambda1).scale(sigma_t);
        c.axpy(sigma_t, &lambda2.matmul(&t_dec));
        c.axpy(1.0, &Mat::row_vec(&sys.lambda4));
        c
    };
    let alpha = Mat::row_vec(&state[off_alpha..off_alpha + 5]);
    let mut alpha_rhs = alpha.matmul(&d_mat);
    alpha_rhs.axpy(pi_t, &alpha);
    alpha_rhs.axpy(1.0, &c_row);
    let alpha_rhs = -&alpha_rhs;

    // Source terms: the Upsilon feed-through of the conditional-mean flow
    // (through the state block) and of the integrand itself.
    let w_phi = w.matmul(&phi);
    let g0_top = b12.matmul(&w_phi.block(2, 0, 3, 1)); // 2x1
    let beta0 = state[off_beta0];
    let beta0_rhs = -(alpha[(0, 0)] * g0_top[(0, 0)]
        + alpha[(0, 1)] * g0_top[(1, 0)]
        + sigma_t * lambda2.matmul(&w_phi)[(0, 0)]
        + pi_t * beta0);

    let mut out = vec![0.0; state.len()];
    out[..S_LEN].copy_from_slice(s_rhs.data());
    for j in 0..5 {
        out[off_phi + j] = phi_rhs[(j, 0)];
    }
    for (k, &a_k) in exponents.iter().enumerate() {
        let psi = Mat::col_vec(&state[off_psi + 5 * k..off_psi + 5 * k + 5]);
        let mut psi_rhs = g_ups.matmul(&psi);
        psi_rhs.axpy(a_k, &h4w.matmul(&psi));
        for j in 0..5 {
            out[off_psi + 5 * k + j] = -psi_rhs[(j, 0)];
        }
        let w_psi = w.matmul(&psi);
        let gk_top = b12.matmul(&w_psi.block(2, 0, 3, 1));
        let beta_k = state[off_beta_k + k];
        out[off_beta_k + k] = -(alpha[(0, 0)] * gk_top[(0, 0)]
            + alpha[(0, 1)] * gk_top[(1, 0)]
            + sigma_t * lambda2.matmul(&w_psi)[(0, 0)]
            + pi_t * beta_k);
    }
    for j in 0..5 {
        out[off_alpha + j] = alpha_rhs[(0, j)];
    }
    out[off_beta0] = beta0_rhs;
    Ok(out)
}

/// Sigma_t from the exponential representation of the idiosyncratic scalar
/// Riccati flow. Exact at t = T (the corner of the identity is 1, 0).
pub fn sigma_at(p: &ModelParams, t: f64) -> Result<f64, NumericsError> {
    if p.Q == 0.0 {
        // Upper-triangular flow: the (1,0) corner of the exponential vanishes.
        return Ok(0.0);
    }
    let u = flow_matrix(p, p.T - t)?;
    let denom = u[(1, 1)];
    if denom.abs() < 1e-14 {
        return Err(NumericsError::SingularSystem {
            pivot: denom.abs(),
            condition_estimate: f64::INFINITY,
        });
    }
    Ok(-u[(1, 0)] / denom)
}

/// exp(A tau) for the 2x2 idiosyncratic Hamiltonian flow.
pub fn flow_matrix(p: &ModelParams, tau: f64) -> Result<Mat, NumericsError> {
    let a = Mat::from_rows(&[&[p.b1, 0.5 * p.b2 * p.b2 / p.R], &[2.0 * p.Q, -p.b1]]);
    expm(&a.scale(tau))
}

fn build_nodes(
    sys: &AssembledSystem,
    p: &ModelParams,
    grid: TimeGrid,
    pass: &JointPass,
) -> Result<Vec<NodeData>, SolverError> {
    let nf = pass.n_factors;
    let (off_phi, off_psi, off_alpha, off_beta0, off_beta_k) = layout(nf);
    let lambda2 = Mat::row_vec(&sys.lambda2);
    let mut nodes = Vec::with_capacity(grid.n_nodes());
    for (i, state) in pass.states.iter().enumerate() {
        let t = grid.node(i);
        let s = Mat::from_vec(5, 5, state[..S_LEN].to_vec());
        let i_plus = &Mat::identity(5) + &s.matmul(&sys.rho_tilde);
        let w = inverse(&i_plus).map_err(|e| SolverError::SolvabilityFailure {
            t,
            detail: e.to_string(),
        })?;
        let t_dec = w.matmul(&s);
        let sigma = sigma_at(p, t)?;
        let c_row = {
            let mut c = Mat::row_vec(&sys.lambda1).scale(sigma);
            c.axpy(sigma, &lambda2.matmul(&t_dec));
            c.axpy(1.0, &Mat::row_vec(&sys.lambda4));
            c
        };
        let mut phi = [0.0; 5];
        phi.copy_from_slice(&state[off_phi..off_phi + 5]);
        let mut psi = Vec::with_capacity(nf);
        for k in 0..nf {
            let mut v = [0.0; 5];
            v.copy_from_slice(&state[off_psi + 5 * k..off_psi + 5 * k + 5]);
            psi.push(v);
        }
        let mut alpha_p = [0.0; 5];
        alpha_p.copy_from_slice(&state[off_alpha..off_alpha + 5]);
        let mut c_arr = [0.0; 5];
        for j in 0..5 {
            c_arr[j] = c_row[(0, j)];
        }
        nodes.push(NodeData {
            s,
            w,
            t_dec,
            phi,
            psi,
            sigma,
            alpha_p,
            beta0: state[off_beta0],
            beta_mart: state[off_beta_k..off_beta_k + nf].to_vec(),
            c_row: c_arr,
        });
    }
    Ok(nodes)
}

fn accumulate_pi_log(p: &ModelParams, grid: TimeGrid, nodes: &[NodeData]) -> Vec<f64> {
    let dt = grid.dt();
    let rate = |sigma: f64| p.b1 + 0.5 * p.b2 * p.b2 * sigma / p.R;
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in nodes.windows(2) {
        acc += 0.5 * dt * (rate(w[0].sigma) + rate(w[1].sigma));
        out.push(acc);
    }
    out
}

/// Resolves the initial adjoint vector from
///   L0 = rho (Ybar_0), Ybar_0 = [T (Xbar_0, L0) + W Upsilon_0]_Y,
/// i.e. the 3x3 linear system (I - rho T_YL) L0 = rho (T_YX Xbar_0 + (W U)_Y).
fn initial_fixed_point(
    sys: &AssembledSystem,
    p: &ModelParams,
    nodes: &[NodeData],
) -> Result<([f64; 3], [f64; 2], [f64; 3]), SolverError> {
    let n0 = &nodes[0];
    // Upsilon_0 with every factor at its t = 0 value of 1.
    let mut ups0 = n0.phi;
    for psi in &n0.psi {
        for j in 0..5 {
            ups0[j] += psi[j];
        }
    }
    let w_ups = n0.w.matmul(&Mat::col_vec(&ups0));
    let t_yx = n0.t_dec.block(0, 0, 2, 2);
    let t_yl = n0.t_dec.block(0, 2, 2, 3);
    let xbar0 = Mat::col_vec(&[p.x0_major, p.x0_minor]);
    let mut rhs = t_yx.matmul(&xbar0);
    rhs.axpy(1.0, &w_ups.block(0, 0, 2, 1));
    let rhs = sys.rho.matmul(&rhs);
    let a = &Mat::identity(3) - &sys.rho.matmul(&t_yl);
    let l0 = solve_lu(&a, &rhs).map_err(|e| SolverError::AdjointFixedPoint(e.to_string()))?;
    let lbar0 = [l0[(0, 0)], l0[(1, 0)], l0[(2, 0)]];

    let stacked = Mat::col_vec(&[p.x0_major, p.x0_minor, lbar0[0], lbar0[1], lbar0[2]]);
    let mut yp = n0.t_dec.matmul(&stacked);
    yp.axpy(1.0, &n0.w.matmul(&Mat::col_vec(&ups0)));
    Ok((
        lbar0,
        [yp[(0, 0)], yp[(1, 0)]],
        [yp[(2, 0)], yp[(3, 0)], yp[(4, 0)]],
    ))
}
