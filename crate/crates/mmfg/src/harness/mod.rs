//! Experiment orchestration: run configurations, convergence-rate sweeps and
//! fits, closed-form oracle checks, and report/file emission.

pub mod convergence;
pub mod oracles;
pub mod reports;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SimError, SolverError};
use crate::model::{load_preset, ModelParams};
use crate::numerics::TimeGrid;

/// Where the scenario comes from: a shipped preset or a JSON parameter file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Preset(String),
    ConfigFile(PathBuf),
}

/// A fully serializable run description; every output file embeds it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Time steps of the shared solver/simulator grid.
    pub steps: usize,
    /// Monte Carlo replications.
    pub paths: usize,
    /// Agent counts of the sweep (single entry for plain simulation).
    pub agents: Vec<usize>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Self {
        RunConfig {
            scenario: Scenario::Preset(name.to_string()),
            steps: 2000,
            paths: 1000,
            agents: vec![8],
            seed: 1,
            out_dir: None,
        }
    }

    pub fn load_params(&self) -> Result<ModelParams, HarnessError> {
        match &self.scenario {
            Scenario::Preset(name) => Ok(load_preset(name)?),
            Scenario::ConfigFile(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                let params: ModelParams = serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                params.validated().map_err(HarnessError::from)
            }
        }
    }

    pub fn grid(&self, params: &ModelParams) -> TimeGrid {
        TimeGrid::new(params.T, self.steps)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Numerics(#[from] crate::error::NumericsError),
    #[error("oracle deviation: {0}")]
    Oracle(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 0 ok, 1 numerical failure, 2 configuration
    /// error, 3 oracle failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Model(_) | HarnessError::Io(_) => 2,
            HarnessError::Solver(_) | HarnessError::Sim(_) | HarnessError::Numerics(_) => 1,
            HarnessError::Oracle(_) => 3,
        }
    }
}

/// Best-effort git revision for report metadata.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Applies the worker-count cap from the environment (`RMM_THREADS`).
pub fn configure_threads() {
    if let Ok(v) = std::env::var("RMM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
