//! Unilateral-deviation experiments under common random numbers: a zero
//! shift (exactly zero gap), a constant shift (a strict loss), and playing
//! the limiting control instead of the realized-state feedback (a loss that
//! vanishes as the population grows).
//!
//! Run: cargo run --release --example deviation_gap

use mmfg::model::load_preset;
use mmfg::numerics::TimeGrid;
use mmfg::sim::{deviation_gap_from_ensemble, simulate_ensemble, Deviation, SimConfig};
use mmfg::solver::{solve, EquilibriumFeedback};

fn gap(n_agents: usize, deviation: Deviation) -> mmfg::sim::DeviationGap {
    let p = load_preset("forward_cz").unwrap();
    let grid = TimeGrid::new(p.T, 128);
    let sol = solve(&p, grid).unwrap();
    let fb = EquilibriumFeedback::build(&sol);
    let mut cfg = SimConfig::new(n_agents, 4000, 31);
    cfg.deviation = Some(deviation.clone());
    let out = simulate_ensemble(&p, &sol, &fb, &cfg).unwrap();
    deviation_gap_from_ensemble(&p, &sol, &fb, &out, &deviation).unwrap()
}

fn main() {
    let zero = gap(64, Deviation::MajorShift(0.0));
    println!(
        "zero shift:        gap = {:+.1e} (exact zero by construction)",
        zero.gap
    );

    let shift = gap(64, Deviation::MajorShift(0.1));
    println!(
        "major shift 0.1:   gap = {:+.4e} +- {:.1e} (negative: the shift hurts)",
        shift.gap, shift.se
    );

    println!("major plays the limiting control instead of realized-state feedback:");
    for n in [4, 16, 64, 256] {
        let g = gap(n, Deviation::MajorLimitControl);
        println!("  N = {n:>3}: gap = {:+.4e} +- {:.1e}", g.gap, g.se);
    }
}
