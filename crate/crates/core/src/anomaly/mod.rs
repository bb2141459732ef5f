//! Innovation-based anomaly detection.
//!
//! Under a correct model the normalized innovation squared `νᵀ S⁻¹ ν` of each
//! measurement update is `χ²(p)`-distributed. A sample above the chosen
//! quantile is an exceedance; an anomaly event opens once M of the last N
//! samples exceed, and closes after a run of in-bound samples.

mod chi2;
mod detector;

pub use chi2::{chi2_cdf, chi2_quantile, ln_gamma, regularized_gamma_p};
pub use detector::{
    detect, events_to_json_lines, open_event_steps, AnomalyEvent, Detector, DetectorConfig, Transition,
};

use crate::error::{Error, Result};
use crate::kalman::UpdateResult;
use crate::matgauss::{forward_substitute, Matrix};

/// Normalized innovation squared of one update.
pub fn nis(u: &UpdateResult) -> Result<f64> {
    normalized_square(&u.innovation, &u.innovation_covariance).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } | Error::NotSymmetric { .. } => Error::SingularInnovation,
        other => other,
    })
}

/// `vᵀ M⁻¹ v` for SPD `M`, via its Cholesky factor.
pub fn normalized_square(v: &[f64], m: &Matrix) -> Result<f64> {
    if v.len() != m.rows() {
        return Err(crate::error::dim_err("normalized_square", m.rows(), v.len()));
    }
    let l = m.cholesky()?;
    let z = forward_substitute(&l, v);
    Ok(z.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::FilterState;

    fn result(innovation: f64, s: f64) -> UpdateResult {
        UpdateResult {
            posterior: FilterState {
                mean: vec![0.0],
                covariance: Matrix::identity(1),
                step: 1,
            },
            gain: Matrix::zeros(1, 1),
            innovation: vec![innovation],
            innovation_covariance: Matrix::from_diagonal(&[s]),
        }
    }

    #[test]
    fn nis_examples() {
        assert_eq!(nis(&result(0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(nis(&result(2.0, 1.0)).unwrap(), 4.0);
        assert_eq!(nis(&result(2.0, 4.0)).unwrap(), 1.0);
    }

    #[test]
    fn nis_singular() {
        assert!(matches!(nis(&result(1.0, 0.0)), Err(Error::SingularInnovation)));
    }

    #[test]
    fn nis_two_dimensional() {
        // diag S: sum of squared standardized components
        let v = [1.0, 3.0];
        let s = Matrix::from_diagonal(&[4.0, 9.0]);
        assert!((normalized_square(&v, &s).unwrap() - (0.25 + 1.0)).abs() < 1e-15);
    }
}
