//! Runtime solvability and positivity checks: boundedness of the Riccati
//! resolvent along the grid, positivity of the idiosyncratic flow corner,
//! and (in the specializations) positivity of the exponential-representation
//! corners.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, build_a_hat, build_b_matrix, AssembledSystem};
use crate::error::SolverError;
use crate::model::ModelParams;
use crate::numerics::{det, expm, Lu, Mat, TimeGrid};

use super::general::{self, JointPass, SolveOptions};

/// Per-condition verdict: the extremal value over the grid and the first
/// failing node, when any.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub pass: bool,
    /// Minimum over the grid of the checked quantity.
    pub min_value: f64,
    pub first_failing_node: Option<usize>,
    /// Per-node values of the checked quantity.
    pub values: Vec<f64>,
}

impl ConditionCheck {
    fn from_values(values: Vec<f64>, floor: f64) -> Self {
        let mut min_value = f64::INFINITY;
        let mut first = None;
        for (i, &v) in values.iter().enumerate() {
            if v < min_value {
                min_value = v;
            }
            if v <= floor && first.is_none() {
                first = Some(i);
            }
        }
        ConditionCheck {
            pass: first.is_none(),
            min_value,
            first_failing_node: first,
            values,
        }
    }
}

/// Verdicts of every applicable check, with per-node diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Reciprocal condition of (I + S_t rho~) along the grid.
    pub a5: ConditionCheck,
    /// Corner positivity of the idiosyncratic flow exponential.
    pub a6: ConditionCheck,
    /// Forward specialization: corner determinant of the Hamiltonian
    /// exponential. Skipped (passes vacuously) outside the specialization.
    pub a3_forward: Option<ConditionCheck>,
    /// Backward specialization with scalar intensity loading: corner
    /// determinant of the companion exponential.
    pub backward_corner: Option<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.a5.pass
            && self.a6.pass
            && self.a3_forward.as_ref().map_or(true, |c| c.pass)
            && self.backward_corner.as_ref().map_or(true, |c| c.pass)
    }
}

/// Report-style evaluation: solves what it needs and never hard-errors on a
/// failed condition; numerical breakdown shows up as a failed check at the
/// node where it happened.
pub fn check_conditions(
    params: &ModelParams,
    grid: TimeGrid,
) -> Result<ConditionReport, SolverError> {
    let params = params.clone().validated()?;
    match general::solve_with_options(
        &params,
        grid,
        SolveOptions {
            abort_on_condition_failure: false,
            ..SolveOptions::default()
        },
    ) {
        Ok(sol) => Ok(sol.conditions),
        Err(SolverError::SolvabilityFailure { t, .. }) => {
            // S itself broke down: report the failure node in the a5 slot and
            // still evaluate the exponential-based checks.
            let sys = assemble(&params);
            let node = ((t / grid.dt()).floor().max(0.0)) as usize;
            let mut a5 = ConditionCheck::from_values(vec![0.0], 0.0);
            a5.first_failing_node = Some(node.min(grid.n_steps));
            Ok(ConditionReport {
                a5,
                a6: a6_check(&params, grid)?,
                a3_forward: a3_check(&sys, &params, grid)?,
                backward_corner: backward_corner_check(&sys, &params, grid)?,
            })
        }
        Err(other) => Err(other),
    }
}

pub(crate) fn build_report(
    sys: &AssembledSystem,
    params: &ModelParams,
    grid: TimeGrid,
    pass: &JointPass,
    rcond_min: f64,
) -> ConditionReport {
    let mut rconds = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let s = pass.s_at(i);
        let i_plus = &Mat::identity(5) + &s.matmul(&sys.rho_tilde);
        let rc = match Lu::factor(&i_plus) {
            Ok(f) => f.rcond(),
            Err(_) => 0.0,
        };
        rconds.push(rc);
    }
    ConditionReport {
        a5: ConditionCheck::from_values(rconds, rcond_min),
        a6: a6_check(params, grid).unwrap_or_else(|_| ConditionCheck {
            pass: false,
            min_value: f64::NEG_INFINITY,
            first_failing_node: Some(0),
            values: vec![],
        }),
        a3_forward: a3_check(sys, params, grid).unwrap_or(None),
        backward_corner: backward_corner_check(sys, params, grid).unwrap_or(None),
    }
}

fn a6_check(p: &ModelParams, grid: TimeGrid) -> Result<ConditionCheck, SolverError> {
    let mut values = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let u = general::flow_matrix(p, grid.node(i))?;
        values.push(u[(1, 1)]);
    }
    Ok(ConditionCheck::from_values(values, 0.0))
}

fn a3_check(
    sys: &AssembledSystem,
    p: &ModelParams,
    grid: TimeGrid,
) -> Result<Option<ConditionCheck>, SolverError> {
    if !p.is_forward_specialization() {
        return Ok(None);
    }
    let a_hat = build_a_hat(sys, p)?;
    let mut values = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let e = expm(&a_hat.scale(grid.node(i)))?;
        values.push(det(&e.block(2, 2, 3, 3))?);
    }
    Ok(Some(ConditionCheck::from_values(values, 0.0)))
}

fn backward_corner_check(
    sys: &AssembledSystem,
    p: &ModelParams,
    grid: TimeGrid,
) -> Result<Option<ConditionCheck>, SolverError> {
    if !p.is_backward_specialization() {
        return Ok(None);
    }
    let b = match build_b_matrix(sys, p) {
        Ok(b) => b,
        Err(_) => return Ok(None), // scalar-intensity shortcut not applicable
    };
    let mut values = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let e = expm(&b.scale(grid.node(i)))?;
        values.push(det(&e.block(3, 3, 2, 2))?);
    }
    Ok(Some(ConditionCheck::from_values(values, 0.0)))
}

/// Per-node values of the idiosyncratic positivity determinant, exposed for
/// diagnostics. Within the admissible parameter set (Q >= 0, R > 0) the flow
/// matrix has real eigenvalues and the corner entry stays positive; a
/// sign crossing can only be produced by an inadmissible cooked set.
pub fn a6_determinant_path(p: &ModelParams, grid: TimeGrid) -> Result<Vec<f64>, SolverError> {
    Ok(a6_check(p, grid)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn cooked_inadmissible_set_crosses_zero_and_is_localized() {
        // Q < 0 makes the flow oscillatory, so the corner determinant crosses
        // zero inside the horizon; the scan reports the first crossing node.
        let mut p = ModelParams::zeroed();
        p.b1 = 0.0;
        p.b2 = 1.0;
        p.R = 0.1;
        p.Q = -2.0;
        p.T = 2.0;
        let grid = TimeGrid::new(p.T, 400);
        let values = a6_determinant_path(&p, grid).unwrap();
        let check = ConditionCheck::from_values(values, 0.0);
        assert!(!check.pass);
        let node = check.first_failing_node.unwrap();
        assert!(node > 0 && node < grid.n_steps, "crossing at node {node}");
        // Admissible sets never cross.
        let mut q = ModelParams::zeroed();
        q.b1 = -0.5;
        q.b2 = 2.0;
        q.Q = 5.0;
        q.T = 2.0;
        let ok = ConditionCheck::from_values(a6_determinant_path(&q, grid).unwrap(), 0.0);
        assert!(ok.pass);
    }
}
