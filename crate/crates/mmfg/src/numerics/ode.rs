//! Uniform time grids and classical RK4 sweeps for matrix-valued ODEs.

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::NumericsError;

/// Uniform grid on [0, T]. Node 0 is exactly 0 and node `n_steps` is exactly T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Self {
        assert!(t_end > 0.0, "horizon must be positive");
        assert!(n_steps > 0, "need at least one step");
        TimeGrid { t_end, n_steps }
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        // i/n is exact at the endpoints, so node(0) = 0 and node(n) = T exactly.
        self.t_end * (i as f64 / self.n_steps as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |i| self.node(i))
    }
}

/// A matrix-valued function sampled on a `TimeGrid`, one value per node.
#[derive(Clone, Debug)]
pub struct MatrixFunctionPath {
    pub grid: TimeGrid,
    pub shape: (usize, usize),
    pub values: Vec<Mat>,
}

impl MatrixFunctionPath {
    pub fn new(grid: TimeGrid, values: Vec<Mat>) -> Self {
        assert_eq!(values.len(), grid.n_nodes(), "one value per node");
        let shape = values[0].shape();
        assert!(
            values.iter().all(|m| m.shape() == shape && m.is_finite()),
            "path values must share the shape and be finite"
        );
        MatrixFunctionPath {
            grid,
            shape,
            values,
        }
    }

    pub fn at_node(&self, i: usize) -> &Mat {
        &self.values[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.norm_max()))
    }
}

/// Backward RK4 sweep for `dY/dt = rhs(t, Y)` from `Y(T) = terminal` down to
/// t = 0. Returns the path indexed by node (values[n] == terminal exactly).
///
/// Blow-ups surface as a diagnostic carrying the first bad time, which is how
/// a loss of solvability of the underlying Riccati system shows up here.
pub fn integrate_backward<F>(
    rhs: F,
    terminal: Mat,
    grid: TimeGrid,
) -> Result<MatrixFunctionPath, NumericsError>
where
    F: Fn(f64, &Mat) -> Result<Mat, NumericsError>,
{
    let n = grid.n_steps;
    let dt = grid.dt();
    let mut values = vec![Mat::zeros(terminal.rows(), terminal.cols()); n + 1];
    values[n] = terminal;
    for k in (0..n).rev() {
        let t1 = grid.node(k + 1);
        let y1 = &values[k + 1];
        let step = rk4_step(&rhs, t1, y1, -dt)?;
        if !step.is_finite() {
            return Err(NumericsError::BlowUp { t: grid.node(k) });
        }
        values[k] = step;
    }
    Ok(MatrixFunctionPath::new(grid, values))
}

/// Single RK4 step from (t, y) with signed step h.
pub fn rk4_step<F>(rhs: &F, t: f64, y: &Mat, h: f64) -> Result<Mat, NumericsError>
where
    F: Fn(f64, &Mat) -> Result<Mat, NumericsError>,
{
    let k1 = rhs(t, y)?;
    let mut y2 = y.clone();
    y2.axpy(0.5 * h, &k1);
    let k2 = rhs(t + 0.5 * h, &y2)?;
    let mut y3 = y.clone();
    y3.axpy(0.5 * h, &k2);
    let k3 = rhs(t + 0.5 * h, &y3)?;
    let mut y4 = y.clone();
    y4.axpy(h, &k3);
    let k4 = rhs(t + h, &y4)?;
    let mut out = y.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::expm::expm;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = TimeGrid::new(0.7, 13);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(13), 0.7);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_rhs_keeps_terminal_constant() {
        let terminal = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let grid = TimeGrid::new(1.0, 16);
        let path = integrate_backward(|_, _| Ok(Mat::zeros(2, 2)), terminal.clone(), grid).unwrap();
        for v in &path.values {
            assert_eq!(v, &terminal);
        }
    }

    #[test]
    fn linear_ode_matches_matrix_exponential() {
        // dS/dt = -A S with S(T) = I has S(t) = exp(A (T - t)).
        let a = Mat::from_rows(&[&[0.3, -0.2, 0.0], &[0.1, 0.0, 0.5], &[0.0, 0.4, -0.1]]);
        let grid = TimeGrid::new(1.0, 1000);
        let path = integrate_backward(|_, s| Ok(-&a.matmul(s)), Mat::identity(3), grid).unwrap();
        for &i in &[0usize, 250, 500, 750] {
            let t = grid.node(i);
            let expected = expm(&a.scale(grid.t_end - t)).unwrap();
            assert!(
                path.at_node(i).max_abs_diff(&expected) < 1e-8,
                "node {i}: {}",
                path.at_node(i).max_abs_diff(&expected)
            );
        }
    }

    #[test]
    fn observed_order_is_at_least_three_and_a_half() {
        // Smooth scalar Riccati-type problem; compare dt against dt/2.
        let rhs = |t: f64, y: &Mat| {
            let v = y[(0, 0)];
            Ok(Mat::from_rows(&[&[
                -(0.3 + 0.1 * t) * v - 0.2 * v * v + 1.0
            ]]))
        };
        let terminal = Mat::from_rows(&[&[0.0]]);
        let coarse = integrate_backward(rhs, terminal.clone(), TimeGrid::new(1.0, 50)).unwrap();
        let fine = integrate_backward(rhs, terminal.clone(), TimeGrid::new(1.0, 100)).unwrap();
        let finest = integrate_backward(rhs, terminal, TimeGrid::new(1.0, 200)).unwrap();
        let e1 = (coarse.at_node(0)[(0, 0)] - finest.at_node(0)[(0, 0)]).abs();
        let e2 = (fine.at_node(0)[(0, 0)] - finest.at_node(0)[(0, 0)]).abs();
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn blow_up_is_diagnosed_with_a_time() {
        // dy/dt = -y^2 backward from y(T) = 2 blows up before t = 0 (T = 1).
        let rhs = |_t: f64, y: &Mat| {
            let v = y[(0, 0)];
            Ok(Mat::from_rows(&[&[-v * v]]))
        };
        let err = integrate_backward(rhs, Mat::from_rows(&[&[2.0]]), TimeGrid::new(1.0, 4000))
            .unwrap_err();
        match err {
            NumericsError::BlowUp { t } => assert!(t > 0.0 && t < 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
