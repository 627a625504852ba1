//! Finite-N and limiting recursive payoffs with Monte Carlo errors.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::ModelParams;
use crate::solver::{EquilibriumFeedback, MeanFieldSolution};

use super::closure::{build_closure, DiscreteClosure, MajorMode};
use super::engine::EnsembleState;
use super::picard::{self, PicardOptions};
use super::rng::{mean, std_error};

/// How the recursive values Y_0 are evaluated.
#[derive(Clone, Debug)]
pub enum ClosureEvaluation {
    AffineRecursion,
    PicardRegression(PicardOptions),
}

/// Payoffs of the finite-N game and its limit, with per-term decomposition
/// and standard errors. All quantities are reproducible from
/// (params, seed, grid, N, M) alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PayoffRecord {
    pub n_agents: usize,
    pub n_reps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Initial recursive values (deterministic under the affine closure).
    pub y0_major: f64,
    pub y0_minor: f64,
    pub se_y0_major: f64,
    pub se_y0_minor: f64,
    /// Gamma terms -gamma |Y_0|^2.
    pub gamma_term_major: f64,
    pub gamma_term_minor: f64,
    /// Running-cost contributions (always <= 0 for admissible weights).
    pub integral_term_major: f64,
    pub integral_term_minor: f64,
    pub j0_n: f64,
    pub ji_n: f64,
    pub j0: f64,
    pub ji: f64,
    pub se_j0_n: f64,
    pub se_ji_n: f64,
    /// Paired finite-minus-limit payoff gaps and their errors.
    pub gap_j0: f64,
    pub gap_ji: f64,
    pub se_gap_j0: f64,
    pub se_gap_ji: f64,
}

/// Evaluates the payoffs of a simulated ensemble.
pub fn evaluate_payoffs(
    params: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    ensemble: &EnsembleState,
    evaluation: &ClosureEvaluation,
) -> Result<PayoffRecord, SimError> {
    let closure = build_closure(params, sol, feedback, &MajorMode::Equilibrium)?;
    let (y0_major, y0_minor, se_y0_major, se_y0_minor) = match evaluation {
        ClosureEvaluation::AffineRecursion => {
            let (y0, yi) = closure.initial_values(params, sol);
            (y0, yi, 0.0, 0.0)
        }
        ClosureEvaluation::PicardRegression(opts) => {
            let est = picard::solve(params, sol, feedback, &closure, ensemble, opts)?;
            (est.y0_major, est.y0_minor, est.se_y0_major, est.se_y0_minor)
        }
    };
    Ok(assemble_record(
        params,
        ensemble,
        y0_major,
        y0_minor,
        se_y0_major,
        se_y0_minor,
    ))
}

pub(crate) fn assemble_record(
    params: &ModelParams,
    ensemble: &EnsembleState,
    y0_major: f64,
    y0_minor: f64,
    se_y0_major: f64,
    se_y0_minor: f64,
) -> PayoffRecord {
    let int_major: Vec<f64> = ensemble.stats.iter().map(|s| s.int_major_fin).collect();
    let int_minor: Vec<f64> = ensemble.stats.iter().map(|s| s.int_minor_fin).collect();
    let int_major_lim: Vec<f64> = ensemble.stats.iter().map(|s| s.int_major_lim).collect();
    let int_minor_lim: Vec<f64> = ensemble.stats.iter().map(|s| s.int_minor_lim).collect();
    let d_major: Vec<f64> = int_major
        .iter()
        .zip(&int_major_lim)
        .map(|(a, b)| a - b)
        .collect();
    let d_minor: Vec<f64> = int_minor
        .iter()
        .zip(&int_minor_lim)
        .map(|(a, b)| a - b)
        .collect();

    let gamma_term_major = -params.gamma0 * y0_major * y0_major;
    let gamma_term_minor = -params.gamma * y0_minor * y0_minor;
    let integral_term_major = -mean(&int_major);
    let integral_term_minor = -mean(&int_minor);
    let j0_n = gamma_term_major + integral_term_major;
    let ji_n = gamma_term_minor + integral_term_minor;
    let j0 = gamma_term_major - mean(&int_major_lim);
    let ji = gamma_term_minor - mean(&int_minor_lim);

    PayoffRecord {
        n_agents: ensemble.n_agents,
        n_reps: ensemble.n_reps,
        dt: ensemble.grid.dt(),
        seed: ensemble.seed,
        y0_major,
        y0_minor,
        se_y0_major,
        se_y0_minor,
        gamma_term_major,
        gamma_term_minor,
        integral_term_major,
        integral_term_minor,
        j0_n,
        ji_n,
        j0,
        ji,
        se_j0_n: std_error(&int_major),
        se_ji_n: std_error(&int_minor),
        gap_j0: -mean(&d_major),
        gap_ji: -mean(&d_minor),
        se_gap_j0: std_error(&d_major),
        se_gap_ji: std_error(&d_minor),
    }
}

/// Outcome of a unilateral-deviation experiment under common random numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationGap {
    /// Estimated payoff improvement of the deviating agent.
    pub gap: f64,
    pub se: f64,
    pub baseline: f64,
    pub deviated: f64,
    pub n_agents: usize,
    pub n_reps: usize,
    pub seed: u64,
}

/// Estimates the deviating agent's payoff gain from an already-simulated
/// ensemble carrying a deviated copy. The Gamma terms come from the exact
/// closures of the baseline and deviated systems; for minor deviations (whose
/// closure loses exchangeability) the recursive weight must vanish.
pub fn deviation_gap_from_ensemble(
    params: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    ensemble: &EnsembleState,
    deviation: &super::engine::Deviation,
) -> Result<DeviationGap, SimError> {
    use super::engine::Deviation;
    let base_closure = build_closure(params, sol, feedback, &MajorMode::Equilibrium)?;
    let (base_y0, base_yi) = base_closure.initial_values(params, sol);

    let (major_side, dev_gamma_term, base_gamma_term) = match deviation {
        Deviation::MajorShift(_) | Deviation::MajorLimitControl => {
            let mode = deviation.major_mode(sol.grid.n_nodes());
            let dev_closure = build_closure(params, sol, feedback, &mode)?;
            let (y0d, _) = dev_closure.initial_values(params, sol);
            (
                true,
                -params.gamma0 * y0d * y0d,
                -params.gamma0 * base_y0 * base_y0,
            )
        }
        Deviation::MinorShift { .. } => {
            if params.gamma != 0.0 {
                return Err(SimError::MinorDeviationNeedsZeroGamma {
                    gamma: params.gamma,
                });
            }
            let _ = base_yi;
            (false, 0.0, 0.0)
        }
    };

    let diffs: Vec<f64> = ensemble
        .stats
        .iter()
        .map(|s| {
            if major_side {
                -(s.int_major_dev - s.int_major_fin)
            } else {
                -(s.int_minor_dev - s.int_minor_fin)
            }
        })
        .collect();
    let base_int: Vec<f64> = ensemble
        .stats
        .iter()
        .map(|s| {
            if major_side {
                s.int_major_fin
            } else {
                s.int_minor_fin
            }
        })
        .collect();
    let dev_int: Vec<f64> = ensemble
        .stats
        .iter()
        .map(|s| {
            if major_side {
                s.int_major_dev
            } else {
                s.int_minor_dev
            }
        })
        .collect();
    let baseline = base_gamma_term - mean(&base_int);
    let deviated = dev_gamma_term - mean(&dev_int);
    let gap = (dev_gamma_term - base_gamma_term) + mean(&diffs);
    Ok(DeviationGap {
        gap,
        se: std_error(&diffs),
        baseline,
        deviated,
        n_agents: ensemble.n_agents,
        n_reps: ensemble.n_reps,
        seed: ensemble.seed,
    })
}

/// Convenience: the per-path closure intercept process delta_t of the minor
/// closure, reported for diagnostics.
pub fn closure_intercept(closure: &DiscreteClosure, node: usize, kappa: &[f64]) -> f64 {
    let row = &closure.minor[node];
    let mut d = row[closure.layout.one()];
    for (j, k) in kappa.iter().enumerate() {
        d += row[super::closure::KAP + j] * k;
    }
    d
}
