use serde::{Deserialize, Serialize};

use super::system::LinearDiscreteSystem;
use crate::error::Result;

/// One sample of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub measurement: Vec<f64>,
}

/// Samples `k = 1, 2, ...` of a run; the initial state is not included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.state.as_slice())
    }

    pub fn measurements(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.measurement.as_slice())
    }
}

/// Runs the system from `x0` over `inputs`.
///
/// Without a seed the run is noise-free; with one, step `k` draws its noise
/// from sub-streams `(seed, k, ·)` exactly as [`LinearDiscreteSystem::step_noisy`].
pub fn simulate(
    sys: &LinearDiscreteSystem,
    x0: &[f64],
    inputs: &[Vec<f64>],
    seed: Option<u64>,
) -> Result<Trajectory> {
    sys.check_state("simulate initial state", x0)?;
    let mut x = x0.to_vec();
    let mut points = Vec::with_capacity(inputs.len());
    for (i, u) in inputs.iter().enumerate() {
        let k = i as u64 + 1;
        let (next, y) = match seed {
            Some(seed) => sys.step_noisy(&x, u, seed, k)?,
            None => {
                let next = sys.step(&x, u)?;
                let y = sys.measure(&next)?;
                (next, y)
            }
        };
        points.push(TrajectoryPoint {
            k,
            state: next.clone(),
            input: u.clone(),
            measurement: y,
        });
        x = next;
    }
    Ok(Trajectory { points })
}
