//! Learning-accelerated collision-free inverse kinematics.
//!
//! A numerical two-stage solver (TCP projection, then nullspace descent on
//! the collision and posture costs) seeded by a twin-headed network that is
//! trained directly on the IK objective.

#[cfg(test)]
#[macro_use]
mod testutil;

pub mod error;
pub mod eval;
pub mod kin;
pub mod net;
pub mod objective;
pub mod par;
pub mod presets;
pub mod robot_file;
pub mod solver;
pub mod train;
pub mod world;

pub use error::{Error, Result};
pub use kin::{Dim, JointConfig, Pose, RobotModel};
pub use objective::{IkProblem, ObjectiveWeights};
pub use par::Execution;
pub use solver::{solve, IkResult, SolverConfig};
