//! The two backward scenarios with printed closed forms: the degenerate one
//! (S vanishes, the major plays a linear ramp) and the idempotent one (the
//! companion matrix is idempotent and everything is explicit).
//!
//! Run: cargo run --release --example backward_closed_forms

use mmfg::harness::oracles::{
    degenerate_major_intercept, idempotent_intercepts_closed_form, idempotent_s_closed_form,
};
use mmfg::model::load_preset;
use mmfg::numerics::TimeGrid;
use mmfg::solver::{s_block, solve_backward_case};

fn main() {
    // Degenerate scenario.
    let p1 = load_preset("example_eg1").unwrap();
    let grid = TimeGrid::new(p1.T, 1000);
    let sol1 = solve_backward_case(&p1, grid).unwrap();
    println!("degenerate backward scenario:");
    println!(
        "  max |S| = {:.2e} (vanishes identically)",
        sol1.s_max_abs()
    );
    let exact1 = sol1.backward.as_ref().unwrap();
    for t in [0.25, 0.5, 1.0] {
        let (m0, m) = exact1.intercepts(t, 0.7).unwrap();
        println!(
            "  t={t:.2}: M0 = {m0:+.6} (ramp {:+.6}), M = {m:+.1e}",
            degenerate_major_intercept(&p1, t)
        );
    }

    // Idempotent scenario.
    let p4 = load_preset("example_eg4").unwrap();
    let grid4 = TimeGrid::new(p4.T, 2000);
    let sol4 = solve_backward_case(&p4, grid4).unwrap();
    println!("idempotent backward scenario:");
    let mut worst = 0.0_f64;
    for i in (0..=grid4.n_steps).step_by(100) {
        let expected = idempotent_s_closed_form(&p4, grid4.node(i));
        worst = worst.max(s_block(&sol4, i).max_abs_diff(&expected));
    }
    println!("  Riccati sweep vs printed S: {worst:.2e}");
    let exact4 = sol4.backward.as_ref().unwrap();
    for (t, w) in [(0.3, 0.5), (0.8, -1.0)] {
        let (m0, m) = exact4.intercepts(t, w).unwrap();
        let (m0_ref, m_ref) = idempotent_intercepts_closed_form(&p4, t, w);
        println!(
            "  (t={t:.1}, W0={w:+.1}): M0 = {m0:+.6} (closed form {m0_ref:+.6}), \
             M = {m:+.6} (closed form {m_ref:+.6})"
        );
    }
    let corner = sol4.conditions.backward_corner.as_ref().unwrap();
    println!(
        "  companion corner determinant at t=T: {:.6} (e^2 = {:.6})",
        corner.values[grid4.n_steps],
        (2.0_f64).exp()
    );
}
