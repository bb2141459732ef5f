//! Dense matrix utilities and multivariate Gaussian primitives.

mod gaussian;
mod matrix;

pub use gaussian::{
    is_psd, mvn_logpdf, mvn_sample, mvn_sample_with, sample_zero_mean, substream, Gaussian,
};
pub(crate) use matrix::{add_vec, sub_vec};
pub use matrix::{backward_substitute_transposed, forward_substitute, Matrix, SYMMETRY_TOL};

/// Lower-triangular `L` with `L Lᵀ = m`; fails if `m` is not positive definite.
pub fn spd_factor(m: &Matrix) -> crate::Result<Matrix> {
    m.cholesky()
}
