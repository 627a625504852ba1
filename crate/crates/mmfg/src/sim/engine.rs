//! Forward simulation of the finite-population system under the decentralized
//! feedback, co-simulated with its mean-field limit on shared noise.
//!
//! Each replication carries: the W0-adapted kernel state (conditional-mean
//! pair, adjoint vector, martingale factors), the finite-N agents, the
//! limiting representative minors driven by the same idiosyncratic noises,
//! and optionally a deviated copy of the finite-N system under common random
//! numbers. Replications are independent given their noise streams and are
//! reduced in replication order, so results are bit-identical for any worker
//! count.

use rayon::prelude::*;

use crate::error::SimError;
use crate::model::ModelParams;
use crate::numerics::TimeGrid;
use crate::solver::{EquilibriumFeedback, MeanFieldSolution};

use super::closure::MajorMode;
use super::rng::NoiseStream;

/// Unilateral deviation from the candidate equilibrium.
#[derive(Clone, Debug)]
pub enum Deviation {
    /// The major shifts her control by a constant.
    MajorShift(f64),
    /// The major plays the limiting optimal control process instead of the
    /// realized-state feedback.
    MajorLimitControl,
    /// One tagged minor shifts its control by a constant.
    MinorShift { stream_key: u64, delta: f64 },
}

impl Deviation {
    pub fn major_mode(&self, n_nodes: usize) -> MajorMode {
        match self {
            Deviation::MajorShift(d) => MajorMode::Shifted(vec![*d; n_nodes]),
            Deviation::MajorLimitControl => MajorMode::LimitControl,
            Deviation::MinorShift { .. } => MajorMode::Equilibrium,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub deviation: Option<Deviation>,
    /// Retain per-node trajectories (limits memory to small runs).
    pub collect_paths: bool,
    /// Stream key assigned to each minor slot; identity when absent.
    pub stream_of_slot: Option<Vec<u64>>,
}

impl SimConfig {
    pub fn new(n_agents: usize, n_reps: usize, seed: u64) -> Self {
        SimConfig {
            n_agents,
            n_reps,
            seed,
            deviation: None,
            collect_paths: false,
            stream_of_slot: None,
        }
    }
}

/// Per-replication trajectory record (populated when `collect_paths`).
#[derive(Clone, Debug, Default)]
pub struct RepPaths {
    pub w0: Vec<f64>,
    pub x_major: Vec<f64>,
    pub x_avg: Vec<f64>,
    pub u_major: Vec<f64>,
    pub u_avg: Vec<f64>,
    /// One path per minor slot.
    pub minors: Vec<Vec<f64>>,
    /// Kernel vector per node (kappa).
    pub kernel: Vec<Vec<f64>>,
    /// Limiting representative-minor paths (same idiosyncratic noise).
    pub minors_limit: Vec<Vec<f64>>,
    /// Per-minor controls at every node (small runs only).
    pub u_minors: Vec<Vec<f64>>,
    /// Common-noise increments per step.
    pub dw0: Vec<f64>,
}

/// One replication's scalar outputs.
#[derive(Clone, Debug, Default)]
pub struct RepStats {
    /// Running integrals of the quadratic payoff integrands.
    pub int_major_fin: f64,
    pub int_minor_fin: f64,
    pub int_major_lim: f64,
    pub int_minor_lim: f64,
    /// Deviated finite-N integrals (same noise), when a deviation is set.
    pub int_major_dev: f64,
    pub int_minor_dev: f64,
    /// sup_t |X^{i,N}_t - X^i_t|^2, averaged over minors, and its max.
    pub gap_minor_mean: f64,
    pub gap_minor_max: f64,
    /// sup_t |X^{0,N}_t - Xbar^0_t|^2.
    pub gap_major: f64,
    /// Consistency check: max over nodes of |recomputed average - tracked|.
    pub avg_recheck: f64,
}

/// Finite-N ensemble simulation output.
pub struct EnsembleState {
    pub n_agents: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub stream_of_slot: Vec<u64>,
    pub stats: Vec<RepStats>,
    pub paths: Vec<RepPaths>,
}

struct SlotMap {
    stream_of_slot: Vec<u64>,
    slot_of_key: Vec<usize>,
}

impl SlotMap {
    fn new(n: usize, assignment: &Option<Vec<u64>>) -> Self {
        let stream_of_slot: Vec<u64> = match assignment {
            Some(v) => {
                assert_eq!(v.len(), n, "one stream key per minor slot");
                v.clone()
            }
            None => (0..n as u64).collect(),
        };
        let mut slot_of_key = vec![usize::MAX; n];
        for (slot, &key) in stream_of_slot.iter().enumerate() {
            assert!(
                (key as usize) < n && slot_of_key[key as usize] == usize::MAX,
                "stream keys must be a permutation of 0..N"
            );
            slot_of_key[key as usize] = slot;
        }
        SlotMap {
            stream_of_slot,
            slot_of_key,
        }
    }

    /// Mean over minors taken in stream-key order: invariant under slot
    /// permutations bit for bit.
    fn key_ordered_mean(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &slot in &self.slot_of_key {
            acc += values[slot];
        }
        acc / values.len() as f64
    }

    fn representative_slot(&self) -> usize {
        self.slot_of_key[0]
    }
}

/// Simulates the ensemble, returning per-replication statistics (and paths
/// when requested).
pub fn simulate_ensemble(
    params: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    cfg: &SimConfig,
) -> Result<EnsembleState, SimError> {
    let grid = sol.grid;
    let n = cfg.n_agents;
    assert!(n >= 1, "need at least one minor");
    let slots = SlotMap::new(n, &cfg.stream_of_slot);
    let channels = n as u64 + 1;

    let results: Result<Vec<(RepStats, RepPaths)>, SimError> = (0..cfg.n_reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(params, sol, feedback, cfg, &slots, channels, rep))
        .collect();
    let results = results?;
    let (stats, paths): (Vec<RepStats>, Vec<RepPaths>) = results.into_iter().unzip();
    Ok(EnsembleState {
        n_agents: n,
        n_reps: cfg.n_reps,
        seed: cfg.seed,
        grid,
        stream_of_slot: slots.stream_of_slot.clone(),
        stats,
        paths: if cfg.collect_paths { paths } else { Vec::new() },
    })
}

#[allow(clippy::too_many_lines)]
fn run_replication(
    p: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    cfg: &SimConfig,
    slots: &SlotMap,
    channels: u64,
    rep: u64,
) -> Result<(RepStats, RepPaths), SimError> {
    let grid = sol.grid;
    let n = cfg.n_agents;
    let dt = grid.dt();
    let sq_dt = dt.sqrt();
    let n_steps = grid.n_steps;
    let rep_slot = slots.representative_slot();

    let mut w0_stream = NoiseStream::for_channel(cfg.seed, rep, channels, 0);
    let mut minor_streams: Vec<NoiseStream> = (0..n)
        .map(|slot| {
            NoiseStream::for_channel(cfg.seed, rep, channels, 1 + slots.stream_of_slot[slot])
        })
        .collect();

    // Kernel state.
    let nf = sol.n_factors();
    let mut kappa = vec![0.0; 5 + nf];
    kappa[0] = p.x0_major;
    kappa[1] = p.x0_minor;
    kappa[2] = sol.lbar0[0];
    kappa[3] = sol.lbar0[1];
    kappa[4] = sol.lbar0[2];
    for k in 0..nf {
        kappa[5 + k] = 1.0;
    }
    let c34 = sol.sys.c34();
    let c56 = sol.sys.c56();

    // Finite-N states plus the limiting minors on shared noise.
    let mut x0 = p.x0_major;
    let mut xs = vec![p.x0_minor; n];
    let mut xs_lim = vec![p.x0_minor; n];
    let deviated = cfg.deviation.is_some();
    let mut x0_dev = x0;
    let mut xs_dev = xs.clone();

    let mut stats = RepStats::default();
    let mut paths = RepPaths::default();
    let collect = cfg.collect_paths;
    if collect {
        paths.minors = vec![Vec::with_capacity(n_steps + 1); n];
        paths.minors_limit = vec![Vec::with_capacity(n_steps + 1); n];
        paths.u_minors = vec![Vec::with_capacity(n_steps + 1); n];
    }

    let mut w0 = 0.0;
    let mut dws = vec![0.0; n];
    for k in 0..=n_steps {
        let x_avg = slots.key_ordered_mean(&xs);
        // Cross-check the tracked population average against a recomputation.
        let recheck = {
            let plain: f64 = xs.iter().sum::<f64>() / n as f64;
            (plain - x_avg).abs()
        };
        stats.avg_recheck = stats.avg_recheck.max(recheck);

        let fb = feedback.node(k);
        let u0_lim = fb.major.eval(kappa[0], &kappa);
        let u_bar = fb.minor.eval(kappa[1], &kappa);
        let u0 = fb.major.eval(x0, &kappa);
        let u_avg = fb.minor.eval(x_avg, &kappa);
        let u_rep = fb.minor.eval(xs[rep_slot], &kappa);
        let u_rep_lim = fb.minor.eval(xs_lim[rep_slot], &kappa);

        // Deviated controls under common random numbers.
        let (u0_dev, x_avg_dev) = if deviated {
            let x_avg_dev = slots.key_ordered_mean(&xs_dev);
            let u0_dev = match cfg.deviation.as_ref().unwrap() {
                Deviation::MajorShift(d) => fb.major.eval(x0_dev, &kappa) + d,
                Deviation::MajorLimitControl => u0_lim,
                Deviation::MinorShift { .. } => fb.major.eval(x0_dev, &kappa),
            };
            (u0_dev, x_avg_dev)
        } else {
            (0.0, 0.0)
        };

        // Running payoff integrands (left-point rule, interior nodes only).
        if k < n_steps {
            let q0 = p.Q0 * sq(x0 - p.mu1_0 * x_avg) + p.R0 * sq(u0 - p.mu2_0 * u_avg);
            let qi = p.Q * sq(xs[rep_slot] - p.mu1 * x_avg - p.mu2 * x0)
                + p.R * sq(u_rep - p.mu3 * u_avg - p.mu4 * u0);
            stats.int_major_fin += dt * q0;
            stats.int_minor_fin += dt * qi;
            let q0l =
                p.Q0 * sq(kappa[0] - p.mu1_0 * kappa[1]) + p.R0 * sq(u0_lim - p.mu2_0 * u_bar);
            let qil = p.Q * sq(xs_lim[rep_slot] - p.mu1 * kappa[1] - p.mu2 * kappa[0])
                + p.R * sq(u_rep_lim - p.mu3 * u_bar - p.mu4 * u0_lim);
            stats.int_major_lim += dt * q0l;
            stats.int_minor_lim += dt * qil;
            if deviated {
                let dev = cfg.deviation.as_ref().unwrap();
                let u_avg_dev = fb.minor.eval(x_avg_dev, &kappa)
                    + match dev {
                        Deviation::MinorShift { delta, .. } => delta / n as f64,
                        _ => 0.0,
                    };
                let (watched_slot, watched_shift) = match dev {
                    Deviation::MinorShift { stream_key, delta } => {
                        (slots.slot_of_key[*stream_key as usize], *delta)
                    }
                    _ => (rep_slot, 0.0),
                };
                let u_watch = fb.minor.eval(xs_dev[watched_slot], &kappa) + watched_shift;
                let q0d = p.Q0 * sq(x0_dev - p.mu1_0 * x_avg_dev)
                    + p.R0 * sq(u0_dev - p.mu2_0 * u_avg_dev);
                let qid = p.Q * sq(xs_dev[watched_slot] - p.mu1 * x_avg_dev - p.mu2 * x0_dev)
                    + p.R * sq(u_watch - p.mu3 * u_avg_dev - p.mu4 * u0_dev);
                stats.int_major_dev += dt * q0d;
                stats.int_minor_dev += dt * qid;
            }
        }

        // Propagation-gap running suprema.
        let mut gap_sum = 0.0;
        let mut gap_max = 0.0_f64;
        for i in 0..n {
            let g = sq(xs[i] - xs_lim[i]);
            gap_sum += g;
            gap_max = gap_max.max(g);
        }
        stats.gap_minor_mean = stats.gap_minor_mean.max(gap_sum / n as f64);
        stats.gap_minor_max = stats.gap_minor_max.max(gap_max);
        stats.gap_major = stats.gap_major.max(sq(x0 - kappa[0]));

        if collect {
            paths.w0.push(w0);
            paths.x_major.push(x0);
            paths.x_avg.push(x_avg);
            paths.u_major.push(u0);
            paths.u_avg.push(u_avg);
            paths.kernel.push(kappa.clone());
            for i in 0..n {
                paths.minors[i].push(xs[i]);
                paths.minors_limit[i].push(xs_lim[i]);
                paths.u_minors[i].push(fb.minor.eval(xs[i], &kappa));
            }
        }

        if k == n_steps {
            break;
        }

        // Draw the step noise.
        let dw0 = sq_dt * w0_stream.standard_normal();
        for (i, s) in minor_streams.iter_mut().enumerate() {
            dws[i] = sq_dt * s.standard_normal();
        }
        if collect {
            paths.dw0.push(dw0);
        }

        // Finite-N updates.
        let x0_new = x0
            + dt * (p.b1_0 * x0 + p.b2_0 * u0 + p.b3_0 * x_avg + p.b4_0 * u_avg)
            + p.sigma0 * dw0;
        for i in 0..n {
            let ui = fb.minor.eval(xs[i], &kappa);
            xs[i] += dt
                * (p.b1 * xs[i] + p.b2 * ui + p.b3 * x0 + p.b4 * u0 + p.b5 * x_avg + p.b6 * u_avg)
                + p.sigma * dws[i];
        }
        x0 = x0_new;

        // Limiting minors on the same idiosyncratic noise.
        for i in 0..n {
            let ui = fb.minor.eval(xs_lim[i], &kappa);
            xs_lim[i] += dt
                * (p.b1 * xs_lim[i]
                    + p.b2 * ui
                    + p.b3 * kappa[0]
                    + p.b4 * u0_lim
                    + p.b5 * kappa[1]
                    + p.b6 * u_bar)
                + p.sigma * dws[i];
        }

        // Deviated copy.
        if deviated {
            let dev = cfg.deviation.as_ref().unwrap();
            let u_avg_dev = fb.minor.eval(x_avg_dev, &kappa)
                + match dev {
                    Deviation::MinorShift { delta, .. } => delta / n as f64,
                    _ => 0.0,
                };
            let x0d_new = x0_dev
                + dt * (p.b1_0 * x0_dev
                    + p.b2_0 * u0_dev
                    + p.b3_0 * x_avg_dev
                    + p.b4_0 * u_avg_dev)
                + p.sigma0 * dw0;
            for i in 0..n {
                let mut ui = fb.minor.eval(xs_dev[i], &kappa);
                if let Deviation::MinorShift { stream_key, delta } = dev {
                    if i == slots.slot_of_key[*stream_key as usize] {
                        ui += delta;
                    }
                }
                xs_dev[i] += dt
                    * (p.b1 * xs_dev[i]
                        + p.b2 * ui
                        + p.b3 * x0_dev
                        + p.b4 * u0_dev
                        + p.b5 * x_avg_dev
                        + p.b6 * u_avg_dev)
                    + p.sigma * dws[i];
            }
            x0_dev = x0d_new;
        }

        // Kernel updates: Euler for the mean pair and adjoints, exact
        // exponentials for the martingale factors.
        let k0_new = kappa[0]
            + dt * (p.b1_0 * kappa[0] + p.b2_0 * u0_lim + p.b3_0 * kappa[1] + p.b4_0 * u_bar)
            + p.sigma0 * dw0;
        let k1_new = kappa[1]
            + dt * (p.b1 * kappa[1]
                + p.b2 * u_bar
                + p.b3 * kappa[0]
                + p.b4 * u0_lim
                + p.b5 * kappa[1]
                + p.b6 * u_bar);
        let l = [kappa[2], kappa[3], kappa[4]];
        for r in 0..3 {
            let drift: f64 = (0..3).map(|c| c34[(r, c)] * l[c]).sum();
            let vol: f64 = (0..3).map(|c| c56[(r, c)] * l[c]).sum();
            kappa[2 + r] = l[r] + dt * drift + vol * dw0;
        }
        kappa[0] = k0_new;
        kappa[1] = k1_new;
        for (kk, f) in sol.factors.iter().enumerate() {
            kappa[5 + kk] *= (f.a * dw0 - 0.5 * f.a * f.a * dt).exp();
        }
        w0 += dw0;

        if !x0.is_finite() || !kappa[0].is_finite() || xs.iter().any(|v| !v.is_finite()) {
            return Err(SimError::StateBlowUp {
                node: k + 1,
                replication: rep as usize,
            });
        }
    }

    Ok((stats, paths))
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}
