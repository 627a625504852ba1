//! Closed-form oracles for the solver pipeline: the degenerate and idempotent
//! backward scenarios, the forward matrix-exponential representation, the
//! scalar Riccati residuals, and the companion-equation terminal identities.

use mmfg::assembly::{assemble, build_a_hat};
use mmfg::model::{load_preset, ModelParams, TerminalCondition};
use mmfg::numerics::{expm, solve_lu, Mat, TimeGrid};
use mmfg::solver::{check_conditions, s_block, solve, solve_backward_case, EquilibriumFeedback};

/// Printed 2x3 Riccati block of the idempotent backward scenario:
/// -[[s, -mu4 s, mu2_0 e^{-(T-t)} s], [0, 0, s]] with s = 1 - e^{-(T-t)}.
fn eg4_s_expected(p: &ModelParams, t: f64) -> Mat {
    let e = (-(p.T - t)).exp();
    let s = 1.0 - e;
    Mat::from_rows(&[&[-s, p.mu4 * s, -p.mu2_0 * e * s], &[0.0, 0.0, -s]])
}

/// Closed-form intercepts of the idempotent backward scenario (f2 = 0):
/// both intercepts load on exp(-t/2 + W0_t) with moments of the terminal
/// data under the unit exponential martingale.
fn eg4_intercepts_expected(p: &ModelParams, t: f64, w: f64) -> (f64, f64) {
    let chi0 = p.xi0.unit_martingale_moment(p.T);
    let chi1 = p.xi.unit_martingale_moment(p.T);
    let two_a = 1.0 / (1.0 - p.mu3 - p.mu2_0 * p.mu4);
    let e_t = (-p.T).exp();
    let carrier = (-0.5 * t + w).exp();
    let m0 = -two_a
        * carrier
        * e_t
        * ((1.0 - p.mu3) * chi0 + p.mu2_0 * (e_t + p.mu3 * (1.0 - e_t)) * chi1);
    let m = -two_a * carrier * e_t * chi1;
    (m0, m)
}

/// The same intercepts written as conditional-expectation expressions
/// E[exp(-3T/2 + W0_T) (...)], evaluated through the moment identities.
fn eg4_intercepts_expectation_form(p: &ModelParams, t: f64, w: f64) -> (f64, f64) {
    let weighted = |xi: &TerminalCondition| (-p.T).exp() * xi.unit_martingale_moment(p.T);
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

#[test]
fn degenerate_backward_scenario_s_is_identically_zero() {
    let p = load_preset("example_eg1").unwrap();
    let grid = TimeGrid::new(p.T, 500);
    let sol = solve_backward_case(&p, grid).unwrap();
    assert!(sol.s_max_abs() < 1e-12, "max |S| = {}", sol.s_max_abs());
}

#[test]
fn degenerate_backward_scenario_intercepts_are_linear_in_time() {
    let p = load_preset("example_eg1").unwrap();
    let grid = TimeGrid::new(p.T, 500);
    let sol = solve_backward_case(&p, grid).unwrap();
    let exact = sol.backward.as_ref().expect("exact adjoints available");

    // L_0 resolves on the rank-degenerate branch: L0 = rho Upsilon_0.
    let ups0 = sol.upsilon(0, &[]);
    let rho_ups = [2.0 * p.gamma0 * ups0[0], 0.0, 2.0 * p.gamma * ups0[1]];
    for j in 0..3 {
        assert!((sol.lbar0[j] - rho_ups[j]).abs() < 1e-12);
    }

    let slope =
        -p.f8 * p.f6_0 * p.gamma0 / p.R0 * (p.xi0.mean(p.T) + p.f6_0 * p.T * p.xi.mean(p.T));
    for (t, w) in [(0.0, 0.3), (0.25, -1.0), (0.5, 2.0), (1.0, 0.0)] {
        let (m0, m) = exact.intercepts(t, w).unwrap();
        let expected = slope * t;
        assert!(
            (m0 - expected).abs() <= 1e-10 * expected.abs().max(1e-10),
            "t={t}: m0={m0}, expected {expected}"
        );
        assert!(m.abs() < 1e-14, "minor intercept must vanish, got {m}");
    }
    // With the documented unit choices the major intercept is exactly -t.
    assert_eq!(p.R0, 1.0);
    assert_eq!(p.f8, 1.0);
    assert_eq!(p.f6_0, 1.0);
    assert_eq!(p.gamma0, 1.0);
    assert_eq!(p.xi0.mean(p.T), 1.0);
    assert_eq!(p.xi.mean(p.T), 0.0);
    let (m0, _) = exact.intercepts(0.75, 1.3).unwrap();
    assert!((m0 + 0.75).abs() < 1e-10);
}

#[test]
fn idempotent_backward_scenario_matches_printed_riccati_block() {
    let p = load_preset("example_eg4").unwrap();
    // dt = 5e-4 over the unit horizon.
    let grid = TimeGrid::new(p.T, 2000);
    let sol = solve_backward_case(&p, grid).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=grid.n_steps {
        let expected = eg4_s_expected(&p, grid.node(i));
        worst = worst.max(s_block(&sol, i).max_abs_diff(&expected));
    }
    assert!(worst < 1e-8, "worst S deviation {worst}");
}

#[test]
fn idempotent_backward_scenario_intercepts_match_closed_forms() {
    let p = load_preset("example_eg4").unwrap();
    let grid = TimeGrid::new(p.T, 400);
    let sol = solve_backward_case(&p, grid).unwrap();
    let exact = sol.backward.as_ref().expect("exact adjoints");
    for (t, w) in [(0.0, 0.0), (0.2, 0.7), (0.5, -0.4), (0.8, 1.9), (1.0, -2.5)] {
        let (m0, m) = exact.intercepts(t, w).unwrap();
        let (e0, e) = eg4_intercepts_expected(&p, t, w);
        let (f0, f) = eg4_intercepts_expectation_form(&p, t, w);
        assert!(
            (m0 - e0).abs() <= 1e-10 * e0.abs().max(1.0),
            "m0 {m0} vs {e0}"
        );
        assert!((m - e).abs() <= 1e-10 * e.abs().max(1.0), "m {m} vs {e}");
        assert!((e0 - f0).abs() <= 1e-12 * f0.abs().max(1.0));
        assert!((e - f).abs() <= 1e-12 * f.abs().max(1.0));
    }
}

#[test]
fn forward_riccati_matches_matrix_exponential_representation() {
    let p = load_preset("forward_cz").unwrap();
    let grid = TimeGrid::new(p.T, 2000);
    let sol = solve(&p, grid).unwrap();
    let sys = assemble(&p);
    let a_hat = build_a_hat(&sys, &p).unwrap();
    let mut worst = 0.0_f64;
    for i in (0..=grid.n_steps).step_by(100) {
        let tau = p.T - grid.node(i);
        let e = expm(&a_hat.scale(tau)).unwrap();
        let corner = e.block(2, 2, 3, 3);
        let left = e.block(2, 0, 3, 2);
        let s_repr = -&solve_lu(&corner, &left).unwrap();
        let s_rk4 = sol.node(i).s.block(2, 0, 3, 2);
        worst = worst.max(s_rk4.max_abs_diff(&s_repr));
    }
    assert!(worst < 1e-6, "worst forward S deviation {worst}");
    // The forward case carries no intercepts.
    let fb = EquilibriumFeedback::build(&sol);
    for i in [0, 500, 1000, 2000] {
        assert!(fb.m0(i, [0.0; 3], &sol.upsilon(i, &[])).abs() < 1e-14);
        assert!(fb.m_direct(i, [0.0; 3], &sol.upsilon(i, &[])).abs() < 1e-14);
        assert_eq!(sol.lbar0, [0.0; 3]);
    }
}

#[test]
fn sigma_terminates_at_zero_and_satisfies_the_scalar_riccati() {
    let p = load_preset("forward_cz").unwrap();
    let grid = TimeGrid::new(p.T, 2000);
    let sol = solve(&p, grid).unwrap();
    let sigma = sol.sigma_path();
    assert_eq!(sigma[grid.n_steps], 0.0);
    // Central-difference residual of Sigma' + 2 b1 Sigma + b2^2 Sigma^2 / (2R) - 2Q.
    let dt = grid.dt();
    let mut worst = 0.0_f64;
    for i in 1..grid.n_steps {
        let d = (sigma[i + 1] - sigma[i - 1]) / (2.0 * dt);
        let s = sigma[i];
        let residual = d + 2.0 * p.b1 * s + 0.5 * p.b2 * p.b2 / p.R * s * s - 2.0 * p.Q;
        worst = worst.max(residual.abs());
    }
    assert!(worst < 1e-6, "worst Riccati residual {worst}");
}

#[test]
fn sigma_exponential_representation_agrees_with_direct_rk4() {
    let p = load_preset("mixed_generic").unwrap();
    let grid = TimeGrid::new(p.T, 2000);
    let sol = solve(&p, grid).unwrap();
    // Independent route: backward RK4 of the scalar Riccati itself.
    let rhs = |_t: f64, y: &Mat| {
        let s = y[(0, 0)];
        Ok(Mat::from_rows(&[&[-(2.0 * p.b1 * s
            + 0.5 * p.b2 * p.b2 / p.R * s * s
            - 2.0 * p.Q)]]))
    };
    let direct = mmfg::numerics::integrate_backward(rhs, Mat::from_rows(&[&[0.0]]), grid).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=grid.n_steps {
        worst = worst.max((sol.node(i).sigma - direct.at_node(i)[(0, 0)]).abs());
    }
    assert!(worst < 1e-8, "worst Sigma route difference {worst}");
}

#[test]
fn q_zero_makes_sigma_vanish() {
    let mut p = load_preset("forward_cz").unwrap();
    p.Q = 0.0;
    let grid = TimeGrid::new(p.T, 200);
    let sol = solve(&p, grid).unwrap();
    assert!(sol.sigma_path().iter().all(|&s| s == 0.0));
}

#[test]
fn zero_terminal_data_gives_zero_upsilon_in_both_specializations() {
    // Forward: no intensity couplings survive, so the companion equation is
    // homogeneous with zero terminal.
    let p = load_preset("forward_cz").unwrap();
    let grid = TimeGrid::new(p.T, 300);
    let sol = solve(&p, grid).unwrap();
    for i in [0, 150, 300] {
        assert_eq!(Mat::row_vec(&sol.upsilon(i, &[])).norm_max(), 0.0);
    }
    // Backward with zeroed terminal offsets.
    let mut pb = load_preset("backward_generic").unwrap();
    pb.xi0 = TerminalCondition::DeterministicConstant { c: 0.0 };
    pb.xi = TerminalCondition::DeterministicConstant { c: 0.0 };
    let solb = solve_backward_case(&pb, grid).unwrap();
    for i in [0, 150, 300] {
        let u = solb.upsilon(i, &[]);
        assert!(Mat::row_vec(&u).norm_max() < 1e-15);
    }
}

#[test]
fn upsilon_terminal_reproduces_realized_terminal_data_pathwise() {
    let p = load_preset("example_eg4").unwrap();
    let grid = TimeGrid::new(p.T, 100);
    let sol = solve_backward_case(&p, grid).unwrap();
    // Along a handful of realized common-noise endpoints, the factor ansatz
    // at t = T must reproduce (xi0, E_T[xi], 0, 0, 0) exactly.
    for w_t in [-1.7, -0.2, 0.0, 0.9, 2.4] {
        let efac: Vec<f64> = sol
            .factors
            .iter()
            .map(|f| (f.a * w_t - 0.5 * f.a * f.a * p.T).exp())
            .collect();
        let ups = sol.upsilon(grid.n_steps, &efac);
        let xi0 = p.xi0.realized(w_t, p.T);
        let xi1 = p.xi.realized(w_t, p.T);
        assert!((ups[0] - xi0).abs() <= 1e-12 * xi0.abs().max(1.0));
        assert!((ups[1] - xi1).abs() <= 1e-12 * xi1.abs().max(1.0));
        for j in 2..5 {
            assert_eq!(ups[j], 0.0);
        }
    }
}

#[test]
fn terminal_nodes_are_set_exactly_not_integrated() {
    let p = load_preset("mixed_generic").unwrap();
    let grid = TimeGrid::new(p.T, 50);
    let sol = solve(&p, grid).unwrap();
    let sys = assemble(&p);
    let i_minus_g1 = &Mat::identity(5) - &sys.G1;
    let expected = solve_lu(&i_minus_g1, &sys.G2).unwrap();
    assert_eq!(sol.node(grid.n_steps).s.max_abs_diff(&expected), 0.0);
    assert_eq!(sol.node(grid.n_steps).sigma, 0.0);
}

#[test]
fn condition_report_passes_on_shipped_presets_and_localizes_failures() {
    for name in [
        "example_eg1",
        "example_eg4",
        "forward_cz",
        "backward_generic",
        "mixed_generic",
    ] {
        let p = load_preset(name).unwrap();
        let report = check_conditions(&p, TimeGrid::new(p.T, 200)).unwrap();
        assert!(report.all_pass(), "{name}: {report:?}");
    }
    // The idempotent backward scenario has corner determinant e^{2t}.
    let p = load_preset("example_eg4").unwrap();
    let grid = TimeGrid::new(p.T, 200);
    let report = check_conditions(&p, grid).unwrap();
    let corner = report.backward_corner.expect("corner check applies");
    for (i, v) in corner.values.iter().enumerate() {
        let expected = (2.0 * grid.node(i)).exp();
        assert!((v - expected).abs() < 1e-10 * expected, "node {i}");
    }
    // The degenerate scenario has corner determinant identically one.
    let p1 = load_preset("example_eg1").unwrap();
    let report1 = check_conditions(&p1, grid).unwrap();
    let corner1 = report1.backward_corner.expect("corner check applies");
    assert!(corner1.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn pi_kernel_is_one_on_the_diagonal_and_multiplicative() {
    let p = load_preset("mixed_generic").unwrap();
    let grid = TimeGrid::new(p.T, 400);
    let sol = solve(&p, grid).unwrap();
    for i in [0, 100, 399] {
        assert_eq!(sol.pi(i, i), 1.0);
    }
    let lhs = sol.pi(0, 400);
    let rhs = sol.pi(0, 200) * sol.pi(200, 400);
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
}

#[test]
fn decoupled_terminal_identity_holds_for_the_mixed_scenario() {
    // (Ybar, Pbar) at T from the decoupling equals the raw terminal map
    // for any stacked state and factor realization.
    let p = load_preset("mixed_generic").unwrap();
    let grid = TimeGrid::new(p.T, 100);
    let sol = solve(&p, grid).unwrap();
    let sys = assemble(&p);
    let xbar = [0.7, -0.3];
    let lbar = [0.2, -0.5, 1.1];
    let v = sol.ybar_pbar(grid.n_steps, xbar, lbar, &[]);
    let a78 = &sys.A7 + &sys.A8;
    let c1112 = &sys.C11 + &sys.C12;
    let xi_det0 = match p.xi0 {
        TerminalCondition::DeterministicConstant { c } => c,
        _ => unreachable!(),
    };
    let xi_det1 = match p.xi {
        TerminalCondition::DeterministicConstant { c } => c,
        _ => unreachable!(),
    };
    let y_expect = [
        a78[(0, 0)] * xbar[0] + a78[(0, 1)] * xbar[1] + xi_det0,
        a78[(1, 0)] * xbar[0] + a78[(1, 1)] * xbar[1] + xi_det1,
    ];
    for j in 0..2 {
        assert!((v[j] - y_expect[j]).abs() < 1e-12, "Y slot {j}");
    }
    for i in 0..3 {
        let p_expect: f64 = (0..3).map(|j| c1112[(i, j)] * lbar[j]).sum();
        assert!((v[2 + i] - p_expect).abs() < 1e-12, "P slot {i}");
    }
}

#[test]
fn backward_feedback_state_rows_vanish() {
    // In the backward specialization the state-feedback rows and the
    // integral-term row vanish along the whole grid, and Sigma is zero.
    let p = load_preset("backward_generic").unwrap();
    let grid = TimeGrid::new(p.T, 150);
    let sol = solve_backward_case(&p, grid).unwrap();
    let fb = EquilibriumFeedback::build(&sol);
    for node in &fb.nodes {
        assert_eq!(node.a01, [0.0; 2]);
        assert_eq!(node.a1, [0.0; 2]);
        assert_eq!(node.c1, [0.0; 2]);
        assert_eq!(node.sigma_gain, 0.0);
    }
}
