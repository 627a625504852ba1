//! Least-squares Monte Carlo oracle for the finite-population payoff BSDEs.
//!
//! Backward induction Y_k = E_k[Y_{k+1}] + dt * driver with conditional
//! expectations estimated by cross-sectional regression on the affine basis,
//! intensity components identified by increment regression
//! E_k[Y_{k+1} dW0]/dt, and the coupling through the population averages
//! iterated to a fixed point. Independent of the closure derivation: the only
//! shared ingredients are the simulated paths and the driver coefficients.

use crate::error::SimError;
use crate::model::ModelParams;
use crate::solver::{EquilibriumFeedback, MeanFieldSolution};

use super::closure::DiscreteClosure;
use super::engine::EnsembleState;
use super::rng::{mean, std_error};

#[derive(Clone, Debug)]
pub struct PicardOptions {
    /// Relative fixed-point tolerance on the average paths.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Replication batches for the standard-error estimate.
    pub n_batches: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-8,
            max_sweeps: 50,
            n_batches: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardEstimate {
    pub y0_major: f64,
    pub y0_minor: f64,
    pub se_y0_major: f64,
    pub se_y0_minor: f64,
    pub sweeps: usize,
    /// Mean absolute difference between regression-identified minor intensity
    /// values and the closure-identified ones, for the two-route check.
    pub z_route_diff: f64,
}

/// Runs the regression oracle on a path-collecting ensemble.
pub fn solve(
    params: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    closure: &DiscreteClosure,
    ensemble: &EnsembleState,
    opts: &PicardOptions,
) -> Result<PicardEstimate, SimError> {
    if ensemble.paths.is_empty() {
        return Err(SimError::PathsNotCollected);
    }
    let n_batches = opts.n_batches.max(1).min(ensemble.n_reps);
    let mut y0_major = Vec::new();
    let mut y0_minor = Vec::new();
    let mut sweeps = 0usize;
    let mut z_diff_acc = 0.0;
    let bounds: Vec<(usize, usize)> = (0..n_batches)
        .map(|b| {
            let lo = b * ensemble.n_reps / n_batches;
            let hi = (b + 1) * ensemble.n_reps / n_batches;
            (lo, hi)
        })
        .collect();
    for &(lo, hi) in &bounds {
        let est = solve_batch(params, sol, feedback, closure, ensemble, lo, hi, opts)?;
        y0_major.push(est.0);
        y0_minor.push(est.1);
        sweeps = sweeps.max(est.2);
        z_diff_acc += est.3;
    }
    Ok(PicardEstimate {
        y0_major: mean(&y0_major),
        y0_minor: mean(&y0_minor),
        se_y0_major: std_error(&y0_major),
        se_y0_minor: std_error(&y0_minor),
        sweeps,
        z_route_diff: z_diff_acc / n_batches as f64,
    })
}

#[allow(clippy::too_many_lines)]
fn solve_batch(
    p: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    closure: &DiscreteClosure,
    ensemble: &EnsembleState,
    rep_lo: usize,
    rep_hi: usize,
    opts: &PicardOptions,
) -> Result<(f64, f64, usize, f64), SimError> {
    let grid = ensemble.grid;
    let n_steps = grid.n_steps;
    let dt = grid.dt();
    let n_minor = ensemble.n_agents;
    let reps = rep_hi - rep_lo;
    let paths = &ensemble.paths[rep_lo..rep_hi];
    let kd = sol.n_factors() + 5;

    // Regression features at (rep, node): [1, x0, xN, kappa...], the minor
    // adds its own state. Constant or collinear columns are dropped by the
    // normal-equations pivot.
    let feat_dim = 3 + kd;
    let features = |r: usize, k: usize, out: &mut Vec<f64>| {
        let path = &paths[r];
        out.clear();
        out.push(1.0);
        out.push(path.x_major[k]);
        out.push(path.x_avg[k]);
        out.extend_from_slice(&path.kernel[k]);
    };

    // State value tables.
    let idx = |r: usize, i: usize| r * n_minor + i;
    let mut y_minor = vec![vec![0.0; reps * n_minor]; n_steps + 1];
    let mut y_major = vec![vec![0.0; reps]; n_steps + 1];
    // Fixed-point iterate of the recursive-state average path.
    let mut ybar = vec![vec![0.0; reps]; n_steps + 1];
    let mut z_route_diff = 0.0_f64;

    // Terminal values from realized terminal data.
    for r in 0..reps {
        let path = &paths[r];
        let w_t = path.w0[n_steps];
        let xi0 = p.xi0.realized(w_t, p.T);
        let xi1 = p.xi.realized(w_t, p.T);
        y_major[n_steps][r] =
            p.Phi1_0 * path.x_major[n_steps] + p.Phi2_0 * path.x_avg[n_steps] + xi0;
        for i in 0..n_minor {
            y_minor[n_steps][idx(r, i)] = p.Phi1 * path.minors[i][n_steps]
                + p.Phi2 * path.x_major[n_steps]
                + p.Phi3 * path.x_avg[n_steps]
                + xi1;
        }
    }

    let mut sweeps_used = opts.max_sweeps;
    let mut last_residual = f64::INFINITY;
    for sweep in 0..opts.max_sweeps {
        z_route_diff = 0.0_f64;
        let mut feat = Vec::with_capacity(feat_dim);
        for k in (0..n_steps).rev() {
            // Design matrices: minors pooled over (rep, agent), major per rep.
            let mut design_major = Vec::with_capacity(reps * feat_dim);
            let mut design_minor = Vec::with_capacity(reps * n_minor * (feat_dim + 1));
            for r in 0..reps {
                features(r, k, &mut feat);
                design_major.extend_from_slice(&feat);
                for i in 0..n_minor {
                    design_minor.extend_from_slice(&feat);
                    design_minor.push(paths[r].minors[i][k]);
                }
            }
            let reg_major = Regression::fit(&design_major, feat_dim, reps);
            let reg_minor = Regression::fit(&design_minor, feat_dim + 1, reps * n_minor);

            // Intensity identification by increment regression.
            let to_z = |y_next: f64, r: usize| y_next * paths[r].dw0[k] / dt;
            let z_major_t: Vec<f64> = (0..reps).map(|r| to_z(y_major[k + 1][r], r)).collect();
            let z_minor_t: Vec<f64> = (0..reps)
                .flat_map(|r| (0..n_minor).map(move |i| (r, i)))
                .map(|(r, i)| to_z(y_minor[k + 1][idx(r, i)], r))
                .collect();
            let z0_fit = reg_major.predict(&z_major_t);
            let zi_fit = reg_minor.predict(&z_minor_t);
            // Conditional expectations of the next values.
            let ey_major = reg_major.predict(&y_major[k + 1]);
            let ey_minor = reg_minor.predict(&y_minor[k + 1]);

            // Cross-route check against the closure-identified intensities.
            if sweep == 0 {
                let zrow = &closure.z_minor[k];
                let mut acc = 0.0;
                let mut basis = vec![0.0; closure.layout.m];
                for r in 0..reps {
                    let path = &paths[r];
                    for i in 0..n_minor {
                        basis[super::closure::XI] = path.minors[i][k];
                        basis[super::closure::X0] = path.x_major[k];
                        basis[super::closure::XN] = path.x_avg[k];
                        basis[super::closure::KAP..super::closure::KAP + kd]
                            .copy_from_slice(&path.kernel[k]);
                        basis[closure.layout.one()] = 1.0;
                        acc += (zi_fit[idx(r, i)] - DiscreteClosure::eval(zrow, &basis)).abs();
                    }
                }
                z_route_diff = z_route_diff.max(acc / (reps * n_minor) as f64);
            }

            for r in 0..reps {
                let path = &paths[r];
                let x0 = path.x_major[k];
                let x_avg = path.x_avg[k];
                let kappa = &path.kernel[k];
                // Controls along the path.
                let fbk = feedback.node(k);
                let u0 = fbk.major.eval(x0, kappa);
                let u_avg = fbk.minor.eval(x_avg, kappa);
                let zn0 = {
                    // Population intensity average: idiosyncratic states load
                    // no common noise, so the fitted minor intensities are
                    // agent-independent up to regression noise; average them.
                    let mut acc = 0.0;
                    for i in 0..n_minor {
                        acc += zi_fit[idx(r, i)];
                    }
                    acc / n_minor as f64
                };
                // Major first: uses the previous iterate's average.
                let drv0 = p.f1_0 * x0
                    + p.f3_0 * z0_fit[r]
                    + p.f4_0 * u0
                    + p.f5_0 * x_avg
                    + p.f6_0 * ybar[k][r]
                    + p.f7_0 * zn0
                    + p.f8_0 * u_avg;
                y_major[k][r] = (ey_major[r] + dt * drv0) / (1.0 - dt * p.f2_0);
                for i in 0..n_minor {
                    let xi = path.minors[i][k];
                    let ui = fbk.minor.eval(xi, kappa);
                    let drv = p.f1 * xi
                        + p.f3 * zi_fit[idx(r, i)]
                        + p.f4 * ui
                        + p.f5 * x0
                        + p.f6 * y_major[k][r]
                        + p.f7 * z0_fit[r]
                        + p.f8 * u0
                        + p.f9 * x_avg
                        + p.f10 * ybar[k][r]
                        + p.f11 * zn0
                        + p.f12 * u_avg;
                    y_minor[k][idx(r, i)] = (ey_minor[idx(r, i)] + dt * drv) / (1.0 - dt * p.f2);
                }
            }
        }
        // Fixed-point update of the average path.
        let mut residual = 0.0_f64;
        let mut scale = 1.0_f64;
        for k in 0..=n_steps {
            for r in 0..reps {
                let mut acc = 0.0;
                for i in 0..n_minor {
                    acc += y_minor[k][idx(r, i)];
                }
                let new = acc / n_minor as f64;
                residual = residual.max((new - ybar[k][r]).abs());
                scale = scale.max(new.abs());
                ybar[k][r] = new;
            }
        }
        last_residual = residual / scale;
        if last_residual < opts.tol {
            sweeps_used = sweep + 1;
            break;
        }
    }
    if last_residual >= opts.tol && last_residual > 1e-8 {
        return Err(SimError::PicardDiverged {
            residual: last_residual,
            sweeps: opts.max_sweeps,
        });
    }

    let y0m = mean(&y_major[0]);
    let y0i = {
        let vals: Vec<f64> = (0..reps)
            .flat_map(|r| (0..n_minor).map(move |i| (r, i)))
            .map(|(r, i)| y_minor[0][idx(r, i)])
            .collect();
        mean(&vals)
    };
    Ok((y0m, y0i, sweeps_used, z_route_diff))
}

/// Ordinary least squares on a row-major design matrix with column
/// standardization, near-constant-column dropping, and a small ridge.
struct Regression {
    cols: usize,
    kept: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    design: Vec<f64>,
    rows: usize,
}

impl Regression {
    fn fit(design: &[f64], cols: usize, rows: usize) -> Regression {
        assert_eq!(design.len(), cols * rows);
        let mut means = vec![0.0; cols];
        let mut scales = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                means[c] += design[r * cols + c];
            }
        }
        for c in 0..cols {
            means[c] /= rows as f64;
        }
        for r in 0..rows {
            for c in 0..cols {
                let d = design[r * cols + c] - means[c];
                scales[c] += d * d;
            }
        }
        let mut kept = vec![0usize]; // intercept always kept
        for c in 1..cols {
            scales[c] = (scales[c] / rows as f64).sqrt();
            if scales[c] > 1e-10 {
                kept.push(c);
            }
        }
        Regression {
            cols,
            kept,
            means,
            scales,
            design: design.to_vec(),
            rows,
        }
    }

    /// Fits against `target` and returns fitted values per row.
    fn predict(&self, target: &[f64]) -> Vec<f64> {
        assert_eq!(target.len(), self.rows);
        let p = self.kept.len();
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut z = vec![0.0; p];
        for r in 0..self.rows {
            for (j, &c) in self.kept.iter().enumerate() {
                z[j] = if c == 0 {
                    1.0
                } else {
                    (self.design[r * self.cols + c] - self.means[c]) / self.scales[c]
                };
            }
            for a in 0..p {
                xty[a] += z[a] * target[r];
                for b in a..p {
                    xtx[a * p + b] += z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[a * p + b] = xtx[b * p + a];
            }
            xtx[a * p + a] += 1e-10 * self.rows as f64;
        }
        let theta = cholesky_solve(&mut xtx, &mut xty, p);
        let mut fitted = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut v = 0.0;
            for (j, &c) in self.kept.iter().enumerate() {
                let zj = if c == 0 {
                    1.0
                } else {
                    (self.design[r * self.cols + c] - self.means[c]) / self.scales[c]
                };
                v += theta[j] * zj;
            }
            fitted[r] = v;
        }
        fitted
    }
}

/// In-place Cholesky solve of a symmetric positive-definite system.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                a[i * n + i] = s.max(1e-300).sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    b.to_vec()
}
