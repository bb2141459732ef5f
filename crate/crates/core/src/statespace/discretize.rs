use serde::{Deserialize, Serialize};

use super::system::ContinuousLti;
use crate::error::{invalid, Result};
use crate::matgauss::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscretizationMethod {
    /// Zero-order hold via the matrix exponential.
    Exact,
    /// Forward Euler, `A = I + A_c dt`, `B = B_c dt`.
    Euler,
}

/// Order of the diagonal Padé approximant used by [`expm`].
const PADE_ORDER: usize = 6;

/// Matrix exponential by scaling and squaring with a (6,6) Padé approximant.
///
/// The argument is scaled by `2^-s` until its infinity norm is at most 1/2,
/// the rational approximant `D(X)^-1 N(X)` is evaluated, and the result is
/// squared `s` times. At that norm the approximant's truncation error is far
/// below double-precision rounding.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.rows();
    let norm = a.norm_inf();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a.scale(0.5_f64.powi(squarings));

    let mut numer = Matrix::identity(n);
    let mut denom = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    let mut coeff = 1.0;
    let p = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        coeff *= (p - kf + 1.0) / (kf * (2.0 * p - kf + 1.0));
        power = &power * &x;
        let term = power.scale(coeff);
        numer = &numer + &term;
        denom = if k % 2 == 0 { &denom + &term } else { &denom - &term };
    }
    let mut result = denom.solve(&numer)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Discrete `(A, B)` for inputs held constant over each interval of length `dt`.
///
/// The exact method exponentiates the augmented matrix `[[A_c, B_c], [0, 0]] dt`;
/// its top blocks are `exp(A_c dt)` and `∫₀^dt exp(A_c s) ds · B_c`, which
/// works for singular `A_c` as well.
pub fn discretize(c: &ContinuousLti, dt: f64, method: DiscretizationMethod) -> Result<(Matrix, Matrix)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
    }
    let n = c.state_dim();
    let m = c.input_dim();
    match method {
        DiscretizationMethod::Euler => {
            let a = &Matrix::identity(n) + &c.a().scale(dt);
            Ok((a, c.b().scale(dt)))
        }
        DiscretizationMethod::Exact => {
            let mut aug = Matrix::zeros(n + m, n + m);
            aug.set_block(0, 0, &c.a().scale(dt));
            aug.set_block(0, n, &c.b().scale(dt));
            let e = expm(&aug)?;
            Ok((e.block(0, 0, n, n), e.block(0, n, n, m)))
        }
    }
}
