//! Build a model from scratch, validate it, write it to the JSON config
//! format, and solve it from the file — the full configuration round trip.
//!
//! Run: cargo run --release --example custom_model

use mmfg::model::{ModelParams, TerminalCondition};
use mmfg::numerics::TimeGrid;
use mmfg::solver::{check_conditions, solve};

fn main() {
    let mut params = ModelParams::zeroed();
    params.T = 0.8;
    params.x0_major = 1.0;
    params.x0_minor = 0.4;
    params.b1_0 = -0.2;
    params.b2_0 = 1.0;
    params.b1 = -0.5;
    params.b2 = 1.0;
    params.b3 = 0.4;
    params.b5 = 0.3;
    params.sigma0 = 0.2;
    params.sigma = 0.3;
    params.Q0 = 0.8;
    params.Q = 1.2;
    params.mu1 = 0.5;
    params.mu2 = 0.2;
    params.gamma0 = 0.3;
    params.f6_0 = 0.2;
    params.f2 = 0.1;
    params.xi0 = TerminalCondition::DeterministicConstant { c: 0.4 };

    let report = params.validate();
    println!("violations: {:?}", report.violations);
    assert!(report.is_valid());

    // The config file format: one JSON object, symbol-named fields.
    let path = std::env::temp_dir().join("mmfg_custom_model.json");
    std::fs::write(&path, serde_json::to_string_pretty(&params).unwrap()).unwrap();
    println!("wrote {}", path.display());

    let text = std::fs::read_to_string(&path).unwrap();
    let loaded: ModelParams = serde_json::from_str(&text).unwrap();
    assert_eq!(loaded, params);

    let grid = TimeGrid::new(loaded.T, 800);
    let conditions = check_conditions(&loaded, grid).unwrap();
    println!("solvability checks pass: {}", conditions.all_pass());
    let sol = solve(&loaded, grid).unwrap();
    println!("max |S| = {:.5}", sol.s_max_abs());
    println!("initial recursive pair Y0 = {:?}", sol.ybar0);
    println!("initial adjoints L0 = {:?}", sol.lbar0);
}
