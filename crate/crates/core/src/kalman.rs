//! The Kalman filter recursion: prediction, gain, measurement update and the
//! combined step.
//!
//! Filtering is value-in/value-out. [`kf_step`] consumes a [`FilterState`]
//! and returns the next one; nothing is mutated in place, so independent
//! filters need no coordination and a state can be checkpointed to JSON at
//! any point.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matgauss::{add_vec, sub_vec, Gaussian, Matrix};
use crate::statespace::LinearDiscreteSystem;

/// Posterior belief `N(mean, covariance)` after step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterStateDocument", into = "FilterStateDocument")]
pub struct FilterState {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub step: u64,
}

/// Checkpoint layout `{"mean":[..],"cov":[[..]],"step":k}`.
#[derive(Serialize, Deserialize)]
struct FilterStateDocument {
    mean: Vec<f64>,
    cov: Matrix,
    step: u64,
}

impl TryFrom<FilterStateDocument> for FilterState {
    type Error = Error;

    fn try_from(d: FilterStateDocument) -> Result<Self> {
        let g = Gaussian::new(d.mean, d.cov)?;
        Ok(FilterState::from_gaussian(&g, d.step))
    }
}

impl From<FilterState> for FilterStateDocument {
    fn from(s: FilterState) -> Self {
        FilterStateDocument {
            mean: s.mean,
            cov: s.covariance,
            step: s.step,
        }
    }
}

impl FilterState {
    /// Initial belief at step 0.
    pub fn prior(belief: &Gaussian) -> Self {
        Self::from_gaussian(belief, 0)
    }

    pub fn from_gaussian(belief: &Gaussian, step: u64) -> Self {
        Self {
            mean: belief.mean().to_vec(),
            covariance: belief.covariance().clone(),
            step,
        }
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), self.covariance.clone())
    }

    /// Belief over a subset of the state, e.g. `&[0]` for heater temperature
    /// alone.
    pub fn marginal(&self, indices: &[usize]) -> Result<Gaussian> {
        self.to_gaussian()?.marginal(indices)
    }
}

/// Belief after the prediction phase of step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedState {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub step: u64,
}

impl PredictedState {
    /// The prediction taken as the posterior, for steps without a measurement.
    pub fn into_filter_state(self) -> FilterState {
        FilterState {
            mean: self.mean,
            covariance: self.covariance,
            step: self.step,
        }
    }
}

/// Everything produced by one measurement update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateResult {
    pub posterior: FilterState,
    /// `K_k`, n×p.
    pub gain: Matrix,
    /// `y_k - C μ̄_k`.
    pub innovation: Vec<f64>,
    /// `S_k = Q + C Σ̄ Cᵀ`.
    pub innovation_covariance: Matrix,
}

fn check_covariance(context: &'static str, cov: &Matrix, n: usize) -> Result<()> {
    if cov.shape() != (n, n) {
        return Err(dim_err(context, format!("{n}x{n}"), format!("{}x{}", cov.rows(), cov.cols())));
    }
    Ok(())
}

/// `μ̄ = B u + A μ`, `Σ̄ = R + A Σ Aᵀ`.
pub fn predict(prev: &FilterState, sys: &LinearDiscreteSystem, u: &[f64]) -> Result<PredictedState> {
    sys.check_state("predict mean", &prev.mean)?;
    check_covariance("predict covariance", &prev.covariance, sys.state_dim())?;
    sys.check_input("predict input", u)?;
    let mean = add_vec(&sys.b().mul_vec(u), &sys.a().mul_vec(&prev.mean));
    let a = sys.a();
    let propagated = &(a * &prev.covariance) * &a.transpose();
    let covariance = (sys.r() + &propagated).symmetrized();
    Ok(PredictedState {
        mean,
        covariance,
        step: prev.step + 1,
    })
}

fn innovation_covariance(pred: &PredictedState, sys: &LinearDiscreteSystem) -> Matrix {
    let c = sys.c();
    (sys.q() + &(&(c * &pred.covariance) * &c.transpose())).symmetrized()
}

fn gain_with(pred: &PredictedState, sys: &LinearDiscreteSystem, s: &Matrix) -> Result<Matrix> {
    // K = Σ̄ Cᵀ S⁻¹, obtained as Kᵀ = S⁻¹ (C Σ̄) since S and Σ̄ are symmetric
    let c_sigma = sys.c() * &pred.covariance;
    let kt = s.solve_spd(&c_sigma).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } | Error::NotSymmetric { .. } => Error::SingularInnovation,
        other => other,
    })?;
    Ok(kt.transpose())
}

/// `K = Σ̄ Cᵀ (Q + C Σ̄ Cᵀ)⁻¹`.
pub fn gain(pred: &PredictedState, sys: &LinearDiscreteSystem) -> Result<Matrix> {
    sys.check_state("gain predicted mean", &pred.mean)?;
    check_covariance("gain predicted covariance", &pred.covariance, sys.state_dim())?;
    gain_with(pred, sys, &innovation_covariance(pred, sys))
}

/// Measurement update: `μ = μ̄ + K (y - C μ̄)`, `Σ = (I - K C) Σ̄`.
pub fn update(pred: &PredictedState, sys: &LinearDiscreteSystem, y: &[f64]) -> Result<UpdateResult> {
    sys.check_state("update predicted mean", &pred.mean)?;
    check_covariance("update predicted covariance", &pred.covariance, sys.state_dim())?;
    sys.check_measurement("update measurement", y)?;
    let s = innovation_covariance(pred, sys);
    let k = gain_with(pred, sys, &s)?;
    let innovation = sub_vec(y, &sys.c().mul_vec(&pred.mean));
    let mean = add_vec(&pred.mean, &k.mul_vec(&innovation));
    let i_minus_kc = &Matrix::identity(sys.state_dim()) - &(&k * sys.c());
    let covariance = (&i_minus_kc * &pred.covariance).symmetrized();
    Ok(UpdateResult {
        posterior: FilterState {
            mean,
            covariance,
            step: pred.step,
        },
        gain: k,
        innovation,
        innovation_covariance: s,
    })
}

/// Predict, then update when a measurement is available.
///
/// Without `y` the prediction becomes the posterior and no update result is
/// returned. The step index advances by one either way.
pub fn kf_step(
    prev: &FilterState,
    sys: &LinearDiscreteSystem,
    u: &[f64],
    y: Option<&[f64]>,
) -> Result<(FilterState, Option<UpdateResult>)> {
    let pred = predict(prev, sys, u)?;
    match y {
        None => Ok((pred.into_filter_state(), None)),
        Some(y) => {
            let res = update(&pred, sys, y)?;
            Ok((res.posterior.clone(), Some(res)))
        }
    }
}
