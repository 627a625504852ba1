pub mod assembly;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod sim;
pub mod solver;
