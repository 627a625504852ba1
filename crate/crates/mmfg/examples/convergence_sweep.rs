//! Sweep the population size, measure propagation and payoff gaps against
//! the co-simulated limit, and fit the rates.
//!
//! Run: cargo run --release --example convergence_sweep

use mmfg::harness::convergence::run_converge;
use mmfg::harness::{RunConfig, Scenario};

fn main() {
    let config = RunConfig {
        scenario: Scenario::Preset("forward_cz".to_string()),
        steps: 256,
        paths: 4000,
        agents: vec![4, 8, 16, 32, 64, 128, 256],
        seed: 7,
        out_dir: None,
    };
    let report = run_converge(&config).unwrap();
    println!(
        "{:>5} {:>14} {:>14} {:>14}",
        "N", "state gap", "payoff gap", "gap*sqrt(N)"
    );
    for row in &report.rows {
        println!(
            "{:>5} {:>14.4e} {:>+14.4e} {:>14.4e}",
            row.n_agents, row.state_gap_minor, row.payoff_gap_major, row.scaled_payoff_gap
        );
    }
    println!(
        "state-gap log-log slope: {:.3} (pass <= -0.8: {})",
        report.state_fit.slope, report.state_gap_pass
    );
    println!(
        "scaled payoff-gap trend: {:.4} +- {:.4} (flat: {})",
        report.scaled_payoff_fit.slope, report.scaled_payoff_fit.se_slope, report.payoff_flat_pass
    );
    if let Some(n) = report.inconclusive_at {
        println!("inconclusive at N={n}: Monte Carlo error dominates the gap");
    }
}
