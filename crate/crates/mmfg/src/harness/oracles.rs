//! The closed-form oracle suite behind the `examples` command: every shipped
//! scenario with printed solutions is solved end to end and compared against
//! its frozen closed forms at stated tolerances.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, build_a_hat, build_b_matrix};
use crate::model::{load_preset, ModelParams};
use crate::numerics::{det, expm, solve_lu, Mat, TimeGrid};
use crate::sim::{simulate_ensemble, SimConfig};
use crate::solver::{s_block, solve, solve_backward_case, EquilibriumFeedback};

use super::HarnessError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleEntry {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExamplesReport {
    pub entries: Vec<OracleEntry>,
    pub all_pass: bool,
}

impl ExamplesReport {
    pub fn into_result(self) -> Result<ExamplesReport, HarnessError> {
        if self.all_pass {
            Ok(self)
        } else {
            let failing: Vec<String> = self
                .entries
                .iter()
                .filter(|e| !e.pass)
                .map(|e| format!("{} ({:.3e} > {:.1e})", e.name, e.max_deviation, e.tolerance))
                .collect();
            Err(HarnessError::Oracle(failing.join(", ")))
        }
    }
}

fn entry(name: &str, max_deviation: f64, tolerance: f64) -> OracleEntry {
    OracleEntry {
        name: name.to_string(),
        max_deviation,
        tolerance,
        pass: max_deviation.is_finite() && max_deviation < tolerance,
    }
}

/// Printed Riccati block of the idempotent backward scenario.
pub fn idempotent_s_closed_form(p: &ModelParams, t: f64) -> Mat {
    let e = (-(p.T - t)).exp();
    let s = 1.0 - e;
    Mat::from_rows(&[&[-s, p.mu4 * s, -p.mu2_0 * e * s], &[0.0, 0.0, -s]])
}

/// Printed intercepts of the idempotent backward scenario at (t, W0_t).
pub fn idempotent_intercepts_closed_form(p: &ModelParams, t: f64, w: f64) -> (f64, f64) {
    let weighted =
        |xi: &crate::model::TerminalCondition| (-p.T).exp() * xi.unit_martingale_moment(p.T);
    let e0 = weighted(&p.xi0);
    let e1 = weighted(&p.xi);
    let inv = 1.0 / (1.0 - p.mu3 - p.mu2_0 * p.mu4);
    let carrier = (-0.5 * t + w).exp();
    let e_t = (-p.T).exp();
    let ef2t = (p.f2 * t).exp();
    let m0 = -inv
        * carrier
        * ((1.0 - p.mu3) * e0 + p.mu2_0 * (ef2t - 1.0 + e_t + p.mu3 - p.mu3 * e_t) * e1);
    let m = -inv * carrier * (p.mu4 * e0 + (ef2t - p.mu4 * p.mu2_0 + p.mu4 * p.mu2_0 * e_t) * e1);
    (m0, m)
}

/// Linear-ramp intercept of the degenerate backward scenario.
pub fn degenerate_major_intercept(p: &ModelParams, t: f64) -> f64 {
    -p.f8 * p.f6_0 * p.gamma0 / p.R0 * (p.xi0.mean(p.T) + p.f6_0 * p.T * p.xi.mean(p.T)) * t
}

/// Runs the full oracle suite.
pub fn run_examples() -> Result<ExamplesReport, HarnessError> {
    let mut entries = Vec::new();

    // Degenerate backward scenario: S identically zero, minor intercept zero,
    // major intercept an exact linear ramp.
    {
        let p = load_preset("example_eg1")?;
        let grid = TimeGrid::new(p.T, 1000);
        let sol = solve_backward_case(&p, grid)?;
        entries.push(entry(
            "degenerate_backward.s_max_abs",
            sol.s_max_abs(),
            1e-12,
        ));
        let exact = sol.backward.as_ref().expect("exact adjoints");
        let mut worst_m0 = 0.0_f64;
        let mut worst_m = 0.0_f64;
        for (t, w) in [(0.1, 0.4), (0.5, -0.9), (0.9, 1.6), (1.0, 0.0)] {
            let (m0, m) = exact.intercepts(t, w)?;
            let reference = degenerate_major_intercept(&p, t);
            worst_m0 = worst_m0.max((m0 - reference).abs() / reference.abs().max(1e-10));
            worst_m = worst_m.max(m.abs());
        }
        entries.push(entry(
            "degenerate_backward.major_intercept_rel",
            worst_m0,
            1e-10,
        ));
        entries.push(entry(
            "degenerate_backward.minor_intercept_abs",
            worst_m,
            1e-12,
        ));
        // Companion corner determinant is identically one.
        let sys = assemble(&p);
        let b = build_b_matrix(&sys, &p)?;
        let mut worst_det = 0.0_f64;
        for t in [0.0, 0.5, 1.0] {
            let e = expm(&b.scale(t))?;
            worst_det = worst_det.max((det(&e.block(3, 3, 2, 2))? - 1.0).abs());
        }
        entries.push(entry(
            "degenerate_backward.corner_det_minus_one",
            worst_det,
            1e-12,
        ));
    }

    // Idempotent backward scenario: the printed 2x3 Riccati block at 20 grid
    // points, the corner determinant path, and the intercepts along simulated
    // common-noise paths.
    {
        let p = load_preset("example_eg4")?;
        let grid = TimeGrid::new(p.T, 2000);
        let sol = solve_backward_case(&p, grid)?;
        let mut worst_s = 0.0_f64;
        for j in 0..=20 {
            let node = j * grid.n_steps / 20;
            let expected = idempotent_s_closed_form(&p, grid.node(node));
            worst_s = worst_s.max(s_block(&sol, node).max_abs_diff(&expected));
        }
        entries.push(entry("idempotent_backward.s_entrywise", worst_s, 1e-8));

        let sys = assemble(&p);
        let b = build_b_matrix(&sys, &p)?;
        let mut worst_det = 0.0_f64;
        for t in [0.0, 0.5, 1.0] {
            let e = expm(&b.scale(t))?;
            let expected = (2.0 * t).exp();
            worst_det = worst_det.max((det(&e.block(3, 3, 2, 2))? - expected).abs() / expected);
        }
        entries.push(entry(
            "idempotent_backward.corner_det_rel",
            worst_det,
            1e-10,
        ));

        let fb = EquilibriumFeedback::build(&sol);
        let mut cfg = SimConfig::new(1, 100, 20240915);
        cfg.collect_paths = true;
        let ensemble = simulate_ensemble(&p, &sol, &fb, &cfg)?;
        let exact = sol.backward.as_ref().expect("exact adjoints");
        let mut worst = 0.0_f64;
        for rep in &ensemble.paths {
            for node in [0, 400, 1000, 1600, 2000] {
                let t = grid.node(node);
                let w = rep.w0[node];
                let (m0, m) = exact.intercepts(t, w)?;
                let (m0_ref, m_ref) = idempotent_intercepts_closed_form(&p, t, w);
                worst = worst.max((m0 - m0_ref).abs() / m0_ref.abs().max(1.0));
                worst = worst.max((m - m_ref).abs() / m_ref.abs().max(1.0));
            }
        }
        entries.push(entry(
            "idempotent_backward.intercepts_on_paths",
            worst,
            1e-8,
        ));
    }

    // Forward scenario: RK4 against the exponential representation.
    {
        let p = load_preset("forward_cz")?;
        let grid = TimeGrid::new(p.T, 2000);
        let sol = solve(&p, grid)?;
        let sys = assemble(&p);
        let a_hat = build_a_hat(&sys, &p)?;
        let mut worst = 0.0_f64;
        for j in 0..=20 {
            let node = j * grid.n_steps / 20;
            let tau = p.T - grid.node(node);
            let e = expm(&a_hat.scale(tau))?;
            let corner = e.block(2, 2, 3, 3);
            let left = e.block(2, 0, 3, 2);
            let s_repr = -&solve_lu(&corner, &left)?;
            worst = worst.max(sol.node(node).s.block(2, 0, 3, 2).max_abs_diff(&s_repr));
        }
        entries.push(entry(
            "forward.rk4_vs_exponential_representation",
            worst,
            1e-6,
        ));
    }

    let all_pass = entries.iter().all(|e| e.pass);
    Ok(ExamplesReport { entries, all_pass })
}
