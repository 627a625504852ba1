//! The decentralized equilibrium feedback maps built from a solved
//! consistency system.
//!
//! Controls are affine in the decentralized information: the agent's own
//! state plus the common-noise kernel vector
//!   kappa_t = (Xbar0_t, Xbar1_t, L0_t, L_t, Ldd_t, E^1_t, ..., E^K_t),
//! i.e. the co-simulated conditional-mean pair, the adjoint vector, and the
//! exponential martingale factors of the terminal data. The major reads her
//! own realized state in the first slot; every minor reads only W0-adapted
//! kernels and its own state.

use crate::numerics::Mat;

use super::MeanFieldSolution;

/// One affine control map: `u = on_own_state * x_own + on_kappa . kappa + constant`.
#[derive(Clone, Debug)]
pub struct AffineControl {
    pub on_own_state: f64,
    pub on_kappa: Vec<f64>,
    pub constant: f64,
}

impl AffineControl {
    pub fn eval(&self, own: f64, kappa: &[f64]) -> f64 {
        debug_assert_eq!(kappa.len(), self.on_kappa.len());
        let mut u = self.on_own_state * own + self.constant;
        for (c, k) in self.on_kappa.iter().zip(kappa) {
            u += c * k;
        }
        u
    }
}

/// Per-node rows of the equilibrium strategy maps.
#[derive(Clone, Debug)]
pub struct FeedbackNode {
    /// Row acting on (x0, xbar1) in the major's control.
    pub a01: [f64; 2],
    /// Row acting on the adjoint block in the major's intercept.
    pub a02: [f64; 3],
    /// Row acting on (xbar0, xbar1) in the minor's control.
    pub a1: [f64; 2],
    /// Row acting on the adjoint block in the minor's intercept.
    pub a2: [f64; 3],
    /// Split of the integral-term row (C1 | C2).
    pub c1: [f64; 2],
    pub c2: [f64; 3],
    /// Own-state gain of the minor: b2 Sigma_t / (2R).
    pub sigma_gain: f64,
    /// Upsilon rows of the two intercepts.
    pub m0_ups: [f64; 5],
    pub m_ups: [f64; 5],
    /// Adjoint rows of the two intercepts (decoupling plus direct parts).
    pub m0_l: [f64; 3],
    pub m_l: [f64; 3],
    pub major: AffineControl,
    pub minor: AffineControl,
}

/// The decentralized epsilon-Nash feedback strategy pair.
#[derive(Clone, Debug)]
pub struct EquilibriumFeedback {
    pub nodes: Vec<FeedbackNode>,
    /// Gain b2 / (2R) multiplying the conditional-expectation functional.
    pub half_r_inv_b2: f64,
    pub n_factors: usize,
}

/// Dimension of the kernel vector kappa for a solution with `k` factors.
pub fn kappa_dim(n_factors: usize) -> usize {
    5 + n_factors
}

impl EquilibriumFeedback {
    /// Builds the strategy maps from a solved system.
    pub fn build(sol: &MeanFieldSolution) -> Self {
        let p = &sol.params;
        let k = &sol.sys.consts;
        // The averaged strategies of interchangeable minors must assemble to
        // the same coefficient rows however they are grouped; this is the
        // consistency identity behind exchanging the tagged minor.
        let avg_p = k.avg_p();
        let avg_l = k.avg_l();
        for j in 0..3 {
            assert_eq!(
                avg_p[j],
                k.a1[j] + k.a7[j],
                "control-average P coefficients"
            );
            assert_eq!(
                avg_l[j],
                k.a3[j] + k.a8[j],
                "control-average L coefficients"
            );
        }

        let h = 0.5 * p.b2 / p.R;
        let nf = sol.n_factors();
        let kd = kappa_dim(nf);
        let row_a10 = Mat::row_vec(&[0.0, 0.0, k.a1_0[0], k.a1_0[1], k.a1_0[2]]);
        let row_a1 = Mat::row_vec(&[0.0, 0.0, k.a1[0], k.a1[1], k.a1[2]]);

        let mut nodes = Vec::with_capacity(sol.nodes.len());
        for nd in &sol.nodes {
            let a0_row = row_a10.matmul(&nd.t_dec); // 1x5
            let a_row = row_a1.matmul(&nd.t_dec);
            let m0_ups_m = row_a10.matmul(&nd.w);
            let m_ups_m = row_a1.matmul(&nd.w);
            let take2 = |m: &Mat| [m[(0, 0)], m[(0, 1)]];
            let take3 = |m: &Mat| [m[(0, 2)], m[(0, 3)], m[(0, 4)]];
            let take5 = |m: &Mat| [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(0, 3)], m[(0, 4)]];

            let a01 = take2(&a0_row);
            let a02 = take3(&a0_row);
            let a1v = take2(&a_row);
            let a2v = take3(&a_row);
            let m0_ups = take5(&m0_ups_m);
            let m_ups = take5(&m_ups_m);
            let m0_l = [a02[0] + k.a3_0[0], a02[1] + k.a3_0[1], a02[2] + k.a3_0[2]];
            let m_l = [a2v[0] + avg_l[0], a2v[1] + avg_l[1], a2v[2] + avg_l[2]];

            // Major: u0 = a01 . (x0, xbar1) + M0 with
            // M0 = m0_l . L + m0_ups . Upsilon.
            let mut major_kappa = vec![0.0; kd];
            major_kappa[1] = a01[1];
            major_kappa[2] = m0_l[0];
            major_kappa[3] = m0_l[1];
            major_kappa[4] = m0_l[2];
            let major_const = dot5(&m0_ups, &nd.phi);
            for (kk, psi) in nd.psi.iter().enumerate() {
                major_kappa[5 + kk] = dot5(&m0_ups, psi);
            }
            let major = AffineControl {
                on_own_state: a01[0],
                on_kappa: major_kappa,
                constant: major_const,
            };

            // Minor: u = a1 . (xbar0, xbar1) + sigma_gain x_own
            //         + h * p(xbar, L, factors) + m_l . L + m_ups . Upsilon.
            let mut minor_kappa = vec![0.0; kd];
            minor_kappa[0] = a1v[0] + h * nd.alpha_p[0];
            minor_kappa[1] = a1v[1] + h * nd.alpha_p[1];
            minor_kappa[2] = m_l[0] + h * nd.alpha_p[2];
            minor_kappa[3] = m_l[1] + h * nd.alpha_p[3];
            minor_kappa[4] = m_l[2] + h * nd.alpha_p[4];
            let minor_const = dot5(&m_ups, &nd.phi) + h * nd.beta0;
            for (kk, psi) in nd.psi.iter().enumerate() {
                minor_kappa[5 + kk] = dot5(&m_ups, psi) + h * nd.beta_mart[kk];
            }
            let minor = AffineControl {
                on_own_state: h * nd.sigma,
                on_kappa: minor_kappa,
                constant: minor_const,
            };

            nodes.push(FeedbackNode {
                a01,
                a02,
                a1: a1v,
                a2: a2v,
                c1: [nd.c_row[0], nd.c_row[1]],
                c2: [nd.c_row[2], nd.c_row[3], nd.c_row[4]],
                sigma_gain: h * nd.sigma,
                m0_ups,
                m_ups,
                m0_l,
                m_l,
                major,
                minor,
            });
        }
        EquilibriumFeedback {
            nodes,
            half_r_inv_b2: h,
            n_factors: nf,
        }
    }

    pub fn node(&self, i: usize) -> &FeedbackNode {
        &self.nodes[i]
    }

    /// The major's intercept M0 at node `i` given realized kernel values.
    pub fn m0(&self, i: usize, lbar: [f64; 3], upsilon: &[f64; 5]) -> f64 {
        let n = &self.nodes[i];
        n.m0_l[0] * lbar[0] + n.m0_l[1] * lbar[1] + n.m0_l[2] * lbar[2] + dot5(&n.m0_ups, upsilon)
    }

    /// The minor's intercept before the conditional-expectation term.
    pub fn m_direct(&self, i: usize, lbar: [f64; 3], upsilon: &[f64; 5]) -> f64 {
        let n = &self.nodes[i];
        n.m_l[0] * lbar[0] + n.m_l[1] * lbar[1] + n.m_l[2] * lbar[2] + dot5(&n.m_ups, upsilon)
    }
}

fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
