//! Affine closure of the finite-population recursive payoffs.
//!
//! Under the symmetric affine feedback, the linear payoff BSDE system closes
//! on the basis (X_i, X_0, X^(N), kappa, 1), where kappa is the W0-adapted
//! kernel vector of the strategies. The closure coefficients satisfy a
//! deterministic backward recursion obtained by drift matching on the same
//! Euler grid as the simulator, with the Y-couplings implicit at the current
//! node and the intensity terms identified from the one-step noise loadings.
//! The identical coefficient paths evaluate both the finite-N and the
//! limiting systems (the basis changes, the recursion does not), so the two
//! share their time-discretization bias and payoff gaps are pure
//! finite-population effects.

use crate::error::SimError;
use crate::model::{ModelParams, TerminalCondition};
use crate::numerics::TimeGrid;
use crate::solver::{EquilibriumFeedback, MeanFieldSolution};

/// Index layout of the closure basis.
#[derive(Clone, Copy, Debug)]
pub struct BasisLayout {
    /// Number of kernel components (5 + number of martingale factors).
    pub kd: usize,
    /// Total basis length: 3 state slots + kd kernel slots + constant.
    pub m: usize,
}

pub const XI: usize = 0;
pub const X0: usize = 1;
pub const XN: usize = 2;
pub const KAP: usize = 3;

impl BasisLayout {
    pub fn new(n_factors: usize) -> Self {
        let kd = 5 + n_factors;
        BasisLayout { kd, m: 3 + kd + 1 }
    }

    pub fn one(&self) -> usize {
        3 + self.kd
    }
}

/// How the major's control enters the simulated system.
#[derive(Clone, Debug)]
pub enum MajorMode {
    /// The equilibrium feedback map.
    Equilibrium,
    /// Equilibrium plus a deterministic per-node shift.
    Shifted(Vec<f64>),
    /// The limiting optimal control process itself (kernel-driven).
    LimitControl,
}

/// Per-node affine rows (length m) of the three control quantities.
#[derive(Clone, Debug)]
pub struct ControlRows {
    /// Representative minor's control, own state in the XI slot.
    pub minor: Vec<f64>,
    /// Control average across minors, own state in the XN slot.
    pub minor_avg: Vec<f64>,
    /// Major's control as simulated (realized state in the X0 slot).
    pub major: Vec<f64>,
    /// Major's limiting control (kernel slots only).
    pub major_limit: Vec<f64>,
}

/// Closure coefficients for the minor and major recursive states, one row per
/// node, plus the one-step maps they were matched against.
pub struct DiscreteClosure {
    pub layout: BasisLayout,
    pub grid: TimeGrid,
    /// Y^i coefficients per node.
    pub minor: Vec<Vec<f64>>,
    /// Y^0 coefficients per node.
    pub major: Vec<Vec<f64>>,
    /// Z^{i,0} rows per node (identified from noise loadings).
    pub z_minor: Vec<Vec<f64>>,
    /// Z^0 rows per node.
    pub z_major: Vec<Vec<f64>>,
    pub controls: Vec<ControlRows>,
}

impl DiscreteClosure {
    /// Evaluates a coefficient row on basis values.
    pub fn eval(row: &[f64], basis: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), basis.len());
        row.iter().zip(basis).map(|(c, b)| c * b).sum()
    }

    /// Initial basis vector shared by the finite-N and limiting systems.
    pub fn initial_basis(&self, p: &ModelParams, sol: &MeanFieldSolution) -> Vec<f64> {
        let mut b = vec![0.0; self.layout.m];
        b[XI] = p.x0_minor;
        b[X0] = p.x0_major;
        b[XN] = p.x0_minor;
        b[KAP] = p.x0_major;
        b[KAP + 1] = p.x0_minor;
        b[KAP + 2] = sol.lbar0[0];
        b[KAP + 3] = sol.lbar0[1];
        b[KAP + 4] = sol.lbar0[2];
        for k in 0..sol.n_factors() {
            b[KAP + 5 + k] = 1.0;
        }
        b[self.layout.one()] = 1.0;
        b
    }

    /// Initial recursive values (Y^0_0, Y^i_0); deterministic.
    pub fn initial_values(&self, p: &ModelParams, sol: &MeanFieldSolution) -> (f64, f64) {
        let b = self.initial_basis(p, sol);
        (
            Self::eval(&self.major[0], &b),
            Self::eval(&self.minor[0], &b),
        )
    }
}

/// Builds the per-node control rows from the feedback maps.
pub fn control_rows(
    feedback: &EquilibriumFeedback,
    layout: BasisLayout,
    mode: &MajorMode,
    n_nodes: usize,
) -> Vec<ControlRows> {
    let m = layout.m;
    let one = layout.one();
    (0..n_nodes)
        .map(|i| {
            let fb = feedback.node(i);
            let mut minor = vec![0.0; m];
            minor[XI] = fb.minor.on_own_state;
            for (j, c) in fb.minor.on_kappa.iter().enumerate() {
                minor[KAP + j] = *c;
            }
            minor[one] = fb.minor.constant;
            let mut minor_avg = minor.clone();
            minor_avg[XN] = minor_avg[XI];
            minor_avg[XI] = 0.0;

            let mut major_limit = vec![0.0; m];
            for (j, c) in fb.major.on_kappa.iter().enumerate() {
                major_limit[KAP + j] = *c;
            }
            // The limiting major reads the kernel's own mean state.
            major_limit[KAP] += fb.major.on_own_state;
            major_limit[one] = fb.major.constant;

            let major = match mode {
                MajorMode::Equilibrium | MajorMode::Shifted(_) => {
                    let mut row = vec![0.0; m];
                    row[X0] = fb.major.on_own_state;
                    for (j, c) in fb.major.on_kappa.iter().enumerate() {
                        row[KAP + j] = *c;
                    }
                    row[one] = fb.major.constant
                        + match mode {
                            MajorMode::Shifted(d) => d[i],
                            _ => 0.0,
                        };
                    row
                }
                MajorMode::LimitControl => major_limit.clone(),
            };
            ControlRows {
                minor,
                minor_avg,
                major,
                major_limit,
            }
        })
        .collect()
}

/// One-step conditional-mean propagation matrix P and noise-loading matrix Z
/// of the basis: E_k[B_{k+1}] = P B_k and E_k[B_{k+1} dW0]/dt = Z B_k.
fn one_step_maps(
    p: &ModelParams,
    sol: &MeanFieldSolution,
    rows: &ControlRows,
    layout: BasisLayout,
    dt: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = layout.m;
    let one = layout.one();
    let mut prop = vec![vec![0.0; m]; m];
    let mut noise = vec![vec![0.0; m]; m];
    for j in 0..m {
        prop[j][j] = 1.0;
    }
    let add = |target: &mut Vec<f64>, scale: f64, row: &[f64]| {
        for (t, r) in target.iter_mut().zip(row) {
            *t += scale * r;
        }
    };
    let unit = |slot: usize| {
        let mut r = vec![0.0; m];
        r[slot] = 1.0;
        r
    };

    // Minor state.
    {
        let mut drift = vec![0.0; m];
        add(&mut drift, p.b1, &unit(XI));
        add(&mut drift, p.b2, &rows.minor);
        add(&mut drift, p.b3, &unit(X0));
        add(&mut drift, p.b4, &rows.major);
        add(&mut drift, p.b5, &unit(XN));
        add(&mut drift, p.b6, &rows.minor_avg);
        add(&mut prop[XI], dt, &drift);
    }
    // Major state.
    {
        let mut drift = vec![0.0; m];
        add(&mut drift, p.b1_0, &unit(X0));
        add(&mut drift, p.b2_0, &rows.major);
        add(&mut drift, p.b3_0, &unit(XN));
        add(&mut drift, p.b4_0, &rows.minor_avg);
        add(&mut prop[X0], dt, &drift);
        noise[X0][one] = p.sigma0;
    }
    // Population average.
    {
        let mut drift = vec![0.0; m];
        add(&mut drift, p.b1 + p.b5, &unit(XN));
        add(&mut drift, p.b2 + p.b6, &rows.minor_avg);
        add(&mut drift, p.b3, &unit(X0));
        add(&mut drift, p.b4, &rows.major);
        add(&mut prop[XN], dt, &drift);
    }
    // Kernel mean pair; the limiting major control drives both.
    {
        let mut ubar = rows.minor.clone();
        ubar[KAP + 1] += ubar[XI];
        ubar[XI] = 0.0;
        let mut drift0 = vec![0.0; m];
        add(&mut drift0, p.b1_0, &unit(KAP));
        add(&mut drift0, p.b2_0, &rows.major_limit);
        add(&mut drift0, p.b3_0, &unit(KAP + 1));
        add(&mut drift0, p.b4_0, &ubar);
        add(&mut prop[KAP], dt, &drift0);
        noise[KAP][one] = p.sigma0;

        let mut drift1 = vec![0.0; m];
        add(&mut drift1, p.b1 + p.b5, &unit(KAP + 1));
        add(&mut drift1, p.b2 + p.b6, &ubar);
        add(&mut drift1, p.b3, &unit(KAP));
        add(&mut drift1, p.b4, &rows.major_limit);
        add(&mut prop[KAP + 1], dt, &drift1);
    }
    // Adjoint block: Euler of dL = C34 L dt + C56 L dW.
    let c34 = sol.sys.c34();
    let c56 = sol.sys.c56();
    for r in 0..3 {
        for c in 0..3 {
            prop[KAP + 2 + r][KAP + 2 + c] += dt * c34[(r, c)];
            noise[KAP + 2 + r][KAP + 2 + c] = c56[(r, c)];
        }
    }
    // Martingale factors: exact exponential updates are conditionally
    // unbiased with noise loading a_k E_k, in discrete time exactly.
    for (k, f) in sol.factors.iter().enumerate() {
        noise[KAP + 5 + k][KAP + 5 + k] = f.a;
    }
    (prop, noise)
}

fn terminal_row(
    p: &ModelParams,
    sol: &MeanFieldSolution,
    layout: BasisLayout,
    phi_own: f64,
    phi_major: f64,
    phi_avg: f64,
    xi: &TerminalCondition,
) -> Vec<f64> {
    let mut row = vec![0.0; layout.m];
    row[XI] = phi_own;
    row[X0] = phi_major;
    row[XN] = phi_avg;
    let (det, mart) = xi.martingale_decomposition(p.T);
    row[layout.one()] = det;
    if let Some((a, kappa)) = mart {
        let pos = sol
            .factors
            .iter()
            .position(|f| f.a == a)
            .expect("terminal factor registered during the solve");
        row[KAP + 5 + pos] += kappa;
    }
    row
}

/// Computes the closure coefficients by the backward coefficient recursion.
pub fn build_closure(
    p: &ModelParams,
    sol: &MeanFieldSolution,
    feedback: &EquilibriumFeedback,
    mode: &MajorMode,
) -> Result<DiscreteClosure, SimError> {
    let grid = sol.grid;
    let layout = BasisLayout::new(sol.n_factors());
    let m = layout.m;
    let dt = grid.dt();
    let n = grid.n_steps;
    let controls = control_rows(feedback, layout, mode, grid.n_nodes());

    let mut minor = vec![vec![0.0; m]; n + 1];
    let mut major = vec![vec![0.0; m]; n + 1];
    let mut z_minor = vec![vec![0.0; m]; n + 1];
    let mut z_major = vec![vec![0.0; m]; n + 1];
    minor[n] = terminal_row(p, sol, layout, p.Phi1, p.Phi2, p.Phi3, &p.xi);
    major[n] = terminal_row(p, sol, layout, 0.0, p.Phi1_0, p.Phi2_0, &p.xi0);

    for k in (0..n).rev() {
        let rows = &controls[k];
        let (prop, noise) = one_step_maps(p, sol, rows, layout, dt);
        let apply = |coef: &[f64], map: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; m];
            for (ci, row) in coef.iter().zip(map) {
                if *ci != 0.0 {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += ci * r;
                    }
                }
            }
            out
        };
        let zc = apply(&minor[k + 1], &noise);
        let z0 = apply(&major[k + 1], &noise);
        let cond_minor = apply(&minor[k + 1], &prop);
        let cond_major = apply(&major[k + 1], &prop);

        // Known parts of the drivers (everything except the implicit
        // Y-couplings at node k). The population intensity average equals the
        // representative one: idiosyncratic states carry no common-noise
        // loading.
        let mut r_min = cond_minor;
        let mut r_maj = cond_major;
        let bump = |row: &mut Vec<f64>, scale: f64, src: &[f64]| {
            for (t, s) in row.iter_mut().zip(src) {
                *t += dt * scale * s;
            }
        };
        r_min[XI] += dt * p.f1;
        r_min[X0] += dt * p.f5;
        r_min[XN] += dt * p.f9;
        bump(&mut r_min, p.f3 + p.f11, &zc);
        bump(&mut r_min, p.f7, &z0);
        bump(&mut r_min, p.f4, &rows.minor);
        bump(&mut r_min, p.f8, &rows.major);
        bump(&mut r_min, p.f12, &rows.minor_avg);

        r_maj[X0] += dt * p.f1_0;
        r_maj[XN] += dt * p.f5_0;
        bump(&mut r_maj, p.f3_0, &z0);
        bump(&mut r_maj, p.f7_0, &zc);
        bump(&mut r_maj, p.f4_0, &rows.major);
        bump(&mut r_maj, p.f8_0, &rows.minor_avg);

        // Implicit solve, slot by slot: the averaging map sends the XI slot
        // onto XN and couples (minor, major) through f6 / f6_0 / f10.
        let mut cm = vec![0.0; m];
        let mut cj = vec![0.0; m];
        // XI slot first: the major carries no own-minor loading.
        cm[XI] = r_min[XI] / (1.0 - dt * p.f2);
        for j in 0..m {
            if j == XI {
                continue;
            }
            let (extra_min, extra_maj) = if j == XN {
                (dt * p.f10 * cm[XI], dt * p.f6_0 * cm[XI])
            } else {
                (0.0, 0.0)
            };
            // [1 - dt(f2 + f10)] cm[j] - dt f6 cj[j] = r_min[j] + extra_min
            // -dt f6_0 cm[j] + (1 - dt f2_0) cj[j] = r_maj[j] + extra_maj
            let a11 = 1.0 - dt * (p.f2 + p.f10);
            let a12 = -dt * p.f6;
            let a21 = -dt * p.f6_0;
            let a22 = 1.0 - dt * p.f2_0;
            let det = a11 * a22 - a12 * a21;
            let b1 = r_min[j] + extra_min;
            let b2 = r_maj[j] + extra_maj;
            cm[j] = (b1 * a22 - a12 * b2) / det;
            cj[j] = (a11 * b2 - a21 * b1) / det;
        }
        debug_assert_eq!(cj[XI], 0.0);
        minor[k] = cm;
        major[k] = cj;
        z_minor[k] = zc;
        z_major[k] = z0;
    }

    Ok(DiscreteClosure {
        layout,
        grid,
        minor,
        major,
        z_minor,
        z_major,
        controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_preset;
    use crate::solver::solve;

    #[test]
    fn closure_terminal_matches_the_payoff_terminal_exactly() {
        let p = load_preset("mixed_generic").unwrap();
        let grid = TimeGrid::new(p.T, 64);
        let sol = solve(&p, grid).unwrap();
        let fb = EquilibriumFeedback::build(&sol);
        let cl = build_closure(&p, &sol, &fb, &MajorMode::Equilibrium).unwrap();
        let last = &cl.minor[grid.n_steps];
        assert_eq!(last[XI], p.Phi1);
        assert_eq!(last[X0], p.Phi2);
        assert_eq!(last[XN], p.Phi3);
        assert_eq!(last[cl.layout.one()], 0.3); // the minor's deterministic xi
        let last0 = &cl.major[grid.n_steps];
        assert_eq!(last0[X0], p.Phi1_0);
        assert_eq!(last0[XN], p.Phi2_0);
        assert_eq!(last0[XI], 0.0);
    }

    #[test]
    fn driverless_constant_terminal_reproduces_the_constant() {
        // With every driver coefficient zero and xi0 = c, the major's
        // recursive state is identically c and the gamma-part of the payoff
        // is -gamma0 c^2.
        let mut p = ModelParams::zeroed();
        p.gamma0 = 0.7;
        p.xi0 = TerminalCondition::DeterministicConstant { c: 1.3 };
        p.sigma0 = 0.5;
        let grid = TimeGrid::new(p.T, 32);
        let sol = solve(&p, grid).unwrap();
        let fb = EquilibriumFeedback::build(&sol);
        let cl = build_closure(&p, &sol, &fb, &MajorMode::Equilibrium).unwrap();
        let (y0_major, y0_minor) = cl.initial_values(&p, &sol);
        assert!((y0_major - 1.3).abs() < 1e-12);
        assert_eq!(y0_minor, 0.0);
        assert!((-p.gamma0 * y0_major * y0_major + p.gamma0 * 1.69).abs() < 1e-10);
    }
}
