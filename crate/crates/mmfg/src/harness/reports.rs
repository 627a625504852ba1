//! Report and file emission: JSON summaries and RFC-4180 CSV tables, all
//! embedding the run configuration so every output is reproducible from its
//! own header. Nothing time- or host-dependent is written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::sim::{
    deviation_gap_from_ensemble, evaluate_payoffs, simulate_ensemble, ClosureEvaluation, Deviation,
    DeviationGap, PayoffRecord, SimConfig,
};
use crate::solver::{
    check_conditions, solve, solve_backward_case, EquilibriumFeedback, MeanFieldSolution,
};

use super::{git_revision, HarnessError, RunConfig};

/// RFC-4180 CSV: comma separator, LF line endings, quotes only when needed.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut c = Csv { buf: String::new() };
        c.row_str(header);
        c
    }

    pub fn row_str(&mut self, fields: &[&str]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            if f.contains(',') || f.contains('"') || f.contains('\n') {
                self.buf.push('"');
                self.buf.push_str(&f.replace('"', "\"\""));
                self.buf.push('"');
            } else {
                self.buf.push_str(f);
            }
        }
        self.buf.push('\n');
    }

    pub fn row(&mut self, fields: &[f64]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            // Shortest round-trip decimal representation, '.' decimal point.
            let _ = write!(self.buf, "{f}");
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, HarnessError> {
    let dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    // The CSV tables are keyed by this sibling file; the JSON reports embed
    // the configuration themselves.
    write_json(&dir.join("run_config.json"), config)?;
    Ok(dir)
}

/// Solves the scenario and writes the condition report, the solution table,
/// the feedback-kernel table, and a JSON summary. Returns the summary.
pub fn run_solve(config: &RunConfig) -> Result<serde_json::Value, HarnessError> {
    let params = config.load_params()?;
    let grid = config.grid(&params);
    let sol = if params.is_backward_specialization() {
        solve_backward_case(&params, grid)?
    } else {
        solve(&params, grid)?
    };
    let feedback = EquilibriumFeedback::build(&sol);
    let conditions = check_conditions(&params, grid)?;
    let dir = out_dir(config)?;

    fs::write(dir.join("solution.csv"), solution_csv(&sol))?;
    fs::write(dir.join("feedback.csv"), feedback_csv(&sol, &feedback))?;
    write_json(
        &dir.join("condition_report.json"),
        &json!({
            "config": config,
            "conditions": conditions,
        }),
    )?;
    write_json(
        &dir.join("assembled_blocks.json"),
        &json!({
            "config": config,
            "blocks": sol.sys.dump_json(),
        }),
    )?;

    let sigma_max = sol.sigma_path().iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let summary = json!({
        "config": config,
        "git_revision": git_revision(),
        "S_max_abs": sol.s_max_abs(),
        "Sigma_max_abs": sigma_max,
        "L0": sol.lbar0,
        "Y0": sol.ybar0,
        "P0": sol.pbar0,
        "conditions_pass": conditions.all_pass(),
        "n_martingale_factors": sol.n_factors(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn solution_csv(sol: &MeanFieldSolution) -> String {
    let mut header: Vec<String> = vec!["t".to_string()];
    for i in 0..5 {
        for j in 0..5 {
            header.push(format!("S{i}{j}"));
        }
    }
    header.push("Sigma".to_string());
    for j in 0..5 {
        header.push(format!("Upsilon_phi{j}"));
    }
    for k in 0..sol.n_factors() {
        for j in 0..5 {
            header.push(format!("Upsilon_psi{k}_{j}"));
        }
    }
    for j in 0..5 {
        header.push(format!("p_alpha{j}"));
    }
    header.push("p_beta0".to_string());
    for k in 0..sol.n_factors() {
        header.push(format!("p_beta{k}"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&header_refs);
    for (i, node) in sol.nodes.iter().enumerate() {
        let mut row = vec![sol.grid.node(i)];
        row.extend(node.s.data().iter().copied());
        row.push(node.sigma);
        row.extend(node.phi.iter().copied());
        for psi in &node.psi {
            row.extend(psi.iter().copied());
        }
        row.extend(node.alpha_p.iter().copied());
        row.push(node.beta0);
        row.extend(node.beta_mart.iter().copied());
        csv.row(&row);
    }
    csv.into_string()
}

fn feedback_csv(sol: &MeanFieldSolution, fb: &EquilibriumFeedback) -> String {
    let mut header: Vec<String> = vec![
        "t",
        "A01_x0",
        "A01_xbar1",
        "A1_xbar0",
        "A1_xbar1",
        "sigma_gain",
        "C1_x0",
        "C1_xbar1",
    ]
    .into_iter()
    .map(str::to_string)
    .collect();
    for j in 0..3 {
        header.push(format!("C2_l{j}"));
    }
    for j in 0..3 {
        header.push(format!("M0_l{j}"));
    }
    for j in 0..3 {
        header.push(format!("M_l{j}"));
    }
    header.push("major_const".to_string());
    header.push("minor_const".to_string());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&header_refs);
    for (i, node) in fb.nodes.iter().enumerate() {
        let mut row = vec![
            sol.grid.node(i),
            node.a01[0],
            node.a01[1],
            node.a1[0],
            node.a1[1],
            node.sigma_gain,
            node.c1[0],
            node.c1[1],
        ];
        row.extend(node.c2.iter().copied());
        row.extend(node.m0_l.iter().copied());
        row.extend(node.m_l.iter().copied());
        row.push(node.major.constant);
        row.push(node.minor.constant);
        csv.row(&row);
    }
    csv.into_string()
}

/// Simulates a finite ensemble, writes the payoff record and optionally the
/// trajectory table of the first replication.
pub fn run_simulate(config: &RunConfig, collect_paths: bool) -> Result<PayoffRecord, HarnessError> {
    let params = config.load_params()?;
    let grid = config.grid(&params);
    let sol = if params.is_backward_specialization() {
        solve_backward_case(&params, grid)?
    } else {
        solve(&params, grid)?
    };
    let feedback = EquilibriumFeedback::build(&sol);
    let n = *config
        .agents
        .first()
        .ok_or_else(|| HarnessError::Config("simulate needs one agent count".to_string()))?;
    let mut sim_cfg = SimConfig::new(n, config.paths, config.seed);
    sim_cfg.collect_paths = collect_paths;
    let ensemble = simulate_ensemble(&params, &sol, &feedback, &sim_cfg)?;
    let record = evaluate_payoffs(
        &params,
        &sol,
        &feedback,
        &ensemble,
        &ClosureEvaluation::AffineRecursion,
    )?;
    let dir = out_dir(config)?;
    write_json(
        &dir.join("payoffs.json"),
        &json!({
            "config": config,
            "record": record,
        }),
    )?;
    if collect_paths {
        // One trajectory table per retained replication, capped to keep the
        // directory small.
        for (r, rep) in ensemble.paths.iter().take(8).enumerate() {
            let shown = rep.minors.len().min(4);
            let mut header = vec![
                "t".to_string(),
                "X0".to_string(),
                "X_avg".to_string(),
                "u0".to_string(),
                "u_avg".to_string(),
            ];
            for i in 0..shown {
                header.push(format!("X{i}"));
            }
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let mut csv = Csv::new(&header_refs);
            for k in 0..rep.x_major.len() {
                let mut row = vec![
                    grid.node(k),
                    rep.x_major[k],
                    rep.x_avg[k],
                    rep.u_major[k],
                    rep.u_avg[k],
                ];
                for i in 0..shown {
                    row.push(rep.minors[i][k]);
                }
                csv.row(&row);
            }
            fs::write(
                dir.join(format!("trajectory_rep{r:03}.csv")),
                csv.into_string(),
            )?;
        }
    }
    Ok(record)
}

/// Runs a unilateral-deviation experiment and writes its report.
pub fn run_deviate(config: &RunConfig, deviation: Deviation) -> Result<DeviationGap, HarnessError> {
    let params = config.load_params()?;
    let grid = config.grid(&params);
    let sol = if params.is_backward_specialization() {
        solve_backward_case(&params, grid)?
    } else {
        solve(&params, grid)?
    };
    let feedback = EquilibriumFeedback::build(&sol);
    let n = *config
        .agents
        .first()
        .ok_or_else(|| HarnessError::Config("deviate needs one agent count".to_string()))?;
    let mut sim_cfg = SimConfig::new(n, config.paths, config.seed);
    sim_cfg.deviation = Some(deviation.clone());
    let ensemble = simulate_ensemble(&params, &sol, &feedback, &sim_cfg)?;
    let gap = deviation_gap_from_ensemble(&params, &sol, &feedback, &ensemble, &deviation)?;
    let dir = out_dir(config)?;
    write_json(
        &dir.join("deviation.json"),
        &json!({
            "config": config,
            "gap": gap,
        }),
    )?;
    Ok(gap)
}

/// Writes the convergence report and its plot-ready table.
pub fn write_convergence(
    config: &RunConfig,
    report: &super::convergence::ConvergenceReport,
) -> Result<(), HarnessError> {
    let dir = out_dir(config)?;
    write_json(&dir.join("convergence.json"), report)?;
    let mut csv = Csv::new(&[
        "N",
        "state_gap_minor",
        "se_state_gap_minor",
        "state_gap_major",
        "payoff_gap_major",
        "se_payoff_gap_major",
        "payoff_gap_minor",
        "se_payoff_gap_minor",
        "scaled_payoff_gap",
    ]);
    for row in &report.rows {
        csv.row(&[
            row.n_agents as f64,
            row.state_gap_minor,
            row.se_state_gap_minor,
            row.state_gap_major,
            row.payoff_gap_major,
            row.se_payoff_gap_major,
            row.payoff_gap_minor,
            row.se_payoff_gap_minor,
            row.scaled_payoff_gap,
        ]);
    }
    fs::write(dir.join("convergence.csv"), csv.into_string())?;
    Ok(())
}
