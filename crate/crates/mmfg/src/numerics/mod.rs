//! Fixed-size dense linear algebra, matrix exponential, and backward ODE
//! integration shared by the solvers.

pub mod expm;
pub mod linsolve;
pub mod mat;
pub mod ode;

pub use expm::expm;
pub use linsolve::{det, inverse, solve_checked, solve_lu, Lu};
pub use mat::Mat;
pub use ode::{integrate_backward, rk4_step, MatrixFunctionPath, TimeGrid};
