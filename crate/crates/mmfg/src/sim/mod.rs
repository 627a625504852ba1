//! Finite-population simulation under the decentralized feedback, recursive
//! payoff evaluation, the limiting benchmark system, and unilateral-deviation
//! experiments.

pub mod closure;
pub mod engine;
pub mod payoffs;
pub mod picard;
pub mod rng;

pub use closure::{build_closure, BasisLayout, DiscreteClosure, MajorMode};
pub use engine::{simulate_ensemble, Deviation, EnsembleState, RepPaths, RepStats, SimConfig};
pub use payoffs::{
    deviation_gap_from_ensemble, evaluate_payoffs, ClosureEvaluation, DeviationGap, PayoffRecord,
};
pub use picard::{PicardEstimate, PicardOptions};
pub use rng::{mean, pairwise_sum, std_error, NoiseStream};
