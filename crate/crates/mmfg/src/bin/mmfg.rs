//! Thin command-line front end over the library: validate parameters, solve
//! the limiting system, simulate ensembles, run convergence sweeps, check
//! closed-form oracles, and estimate deviation gaps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmfg::harness::{
    configure_threads, convergence, oracles, reports, HarnessError, RunConfig, Scenario,
};
use mmfg::model::PRESET_NAMES;
use mmfg::sim::Deviation;

#[derive(Parser)]
#[command(
    name = "mmfg",
    about = "Major-minor LQG mean-field game solver and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Shipped scenario name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Time steps of the shared grid.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    /// Agent counts, comma separated (a sweep for `converge`).
    #[arg(long, default_value = "8", value_delimiter = ',')]
    agents: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn run_config(&self) -> Result<RunConfig, HarnessError> {
        let scenario = match (&self.preset, &self.config) {
            (Some(name), None) => Scenario::Preset(name.clone()),
            (None, Some(path)) => Scenario::ConfigFile(path.clone()),
            _ => {
                return Err(HarnessError::Config(format!(
                    "pass exactly one of --preset (one of {PRESET_NAMES:?}) or --config"
                )))
            }
        };
        if self.agents.is_empty() {
            return Err(HarnessError::Config(
                "--agents must be nonempty".to_string(),
            ));
        }
        Ok(RunConfig {
            scenario,
            steps: self.steps,
            paths: self.paths,
            agents: self.agents.clone(),
            seed: self.seed,
            out_dir: self.out.clone(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the model parameters and report every violated constraint.
    Validate(ScenarioArgs),
    /// Solve the limiting consistency system and export its tables.
    Solve(ScenarioArgs),
    /// Simulate the finite-N ensemble and evaluate payoffs.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also write the first replication's trajectory table.
        #[arg(long)]
        traj: bool,
    },
    /// Sweep agent counts and fit the convergence rates.
    Converge(ScenarioArgs),
    /// Verify every closed-form oracle shipped with the presets.
    Examples {
        /// Output directory for the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a unilateral-deviation payoff gap under common random numbers.
    Deviate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Constant control shift of the deviating agent.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Deviating agent: "major", "major-limit" (play the limiting optimal
        /// control), or "minor".
        #[arg(long, default_value = "major")]
        agent: String,
    },
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Validate(args) => {
            let config = args.run_config()?;
            // Load without the validity gate so the report can be printed.
            let params = match &config.scenario {
                Scenario::Preset(name) => mmfg::model::load_preset(name)?,
                Scenario::ConfigFile(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                    serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
                }
            };
            let report = params.validate();
            if report.is_valid() {
                println!("valid");
                Ok(())
            } else {
                for v in &report.violations {
                    println!("violation: {v}");
                }
                Err(HarnessError::Config(report.violations.join("; ")))
            }
        }
        Command::Solve(args) => {
            let config = args.run_config()?;
            let summary = reports::run_solve(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            Ok(())
        }
        Command::Simulate { scenario, traj } => {
            let config = scenario.run_config()?;
            let record = reports::run_simulate(&config, traj)?;
            println!("{}", serde_json::to_string_pretty(&record).unwrap());
            Ok(())
        }
        Command::Converge(args) => {
            let config = args.run_config()?;
            let report = convergence::run_converge(&config)?;
            reports::write_convergence(&config, &report)?;
            println!(
                "state-gap slope {:.3} (pass: {}), scaled payoff trend {:.3} +- {:.3} (pass: {}){}",
                report.state_fit.slope,
                report.state_gap_pass,
                report.scaled_payoff_fit.slope,
                report.scaled_payoff_fit.se_slope,
                report.payoff_flat_pass,
                match report.inconclusive_at {
                    Some(n) => format!(", inconclusive at N={n}"),
                    None => String::new(),
                }
            );
            Ok(())
        }
        Command::Examples { out } => {
            let report = oracles::run_examples()?;
            for e in &report.entries {
                println!(
                    "{} {}: {:.3e} (tol {:.1e})",
                    if e.pass { "pass" } else { "FAIL" },
                    e.name,
                    e.max_deviation,
                    e.tolerance
                );
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                reports::write_json(&dir.join("examples.json"), &report)?;
            }
            report.into_result().map(|_| ())
        }
        Command::Deviate {
            scenario,
            delta,
            agent,
        } => {
            let config = scenario.run_config()?;
            let deviation = match agent.as_str() {
                "major" => Deviation::MajorShift(delta),
                "major-limit" => Deviation::MajorLimitControl,
                "minor" => Deviation::MinorShift {
                    stream_key: 0,
                    delta,
                },
                other => {
                    return Err(HarnessError::Config(format!(
                        "unknown deviating agent '{other}'"
                    )))
                }
            };
            let gap = reports::run_deviate(&config, deviation)?;
            println!("{}", serde_json::to_string_pretty(&gap).unwrap());
            Ok(())
        }
    }
}
