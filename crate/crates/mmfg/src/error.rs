//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("non-finite values in {context}")]
    NonFinite { context: String },
    #[error("singular system (pivot {pivot:.3e}, condition estimate {condition_estimate:.3e})")]
    SingularSystem { pivot: f64, condition_estimate: f64 },
    #[error("linear solve residual too large: {residual:.3e}")]
    ResidualTooLarge { residual: f64 },
    #[error("blow-up at t={t:.6}")]
    BlowUp { t: f64 },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid model parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("solvability check failed at t={t:.6}: (I + S rho~) {detail}")]
    SolvabilityFailure { t: f64, detail: String },
    #[error("terminal condition failure: I - G1 is singular")]
    TerminalConditionFailure,
    #[error("positivity condition violated at t={t:.6}: det = {det:.3e}")]
    DeterminantNotPositive { t: f64, det: f64 },
    #[error("backward specialization violated: {0}")]
    NotBackward(String),
    #[error("forward specialization violated: {0}")]
    NotForward(String),
    #[error("closed-form shortcut unavailable: {0}")]
    ClosedFormUnavailable(String),
    #[error("initial adjoint fixed point is singular: {0}")]
    AdjointFixedPoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("state blow-up at node {node}, replication {replication}")]
    StateBlowUp { node: usize, replication: usize },
    #[error("Picard iteration did not converge: last relative update {residual:.3e} after {sweeps} sweeps")]
    PicardDiverged { residual: f64, sweeps: usize },
    #[error("affine closure requires deterministic-constant terminal offsets")]
    ClosureNeedsDeterministicTerminal,
    #[error("minor-side deviation gaps require gamma = 0; got gamma = {gamma}")]
    MinorDeviationNeedsZeroGamma { gamma: f64 },
    #[error("this evaluation needs retained trajectories; rerun with path collection enabled")]
    PathsNotCollected,
}
