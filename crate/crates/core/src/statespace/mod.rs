//! Linear discrete-time systems, their simulation, and discretization of
//! continuous-time models.

mod discretize;
mod simulate;
mod system;

pub use discretize::{discretize, expm, DiscretizationMethod};
pub use simulate::{simulate, Trajectory, TrajectoryPoint};
pub use system::{ContinuousLti, LinearDiscreteSystem};
