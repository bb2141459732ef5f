use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::matrix::{forward_substitute, sub_vec, Matrix, SYMMETRY_TOL};
use crate::error::{dim_err, Error, Result};

/// Multivariate normal belief `N(mean, covariance)`.
///
/// The covariance is kept symmetric and positive semi-definite; strict
/// definiteness is only required by [`mvn_logpdf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct Gaussian {
    mean: Vec<f64>,
    covariance: Matrix,
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    covariance: Matrix,
}

impl TryFrom<RawGaussian> for Gaussian {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        Gaussian::new(raw.mean, raw.covariance)
    }
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if !covariance.is_square() || covariance.rows() != mean.len() {
            return Err(dim_err(
                "Gaussian covariance",
                format!("{0}x{0}", mean.len()),
                format!("{}x{}", covariance.rows(), covariance.cols()),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gaussian mean"));
        }
        // psd_factor checks symmetry and semi-definiteness at SYMMETRY_TOL
        covariance.psd_factor()?;
        Ok(Self {
            mean,
            covariance: covariance.symmetrized(),
        })
    }

    /// Standard normal of dimension `n`.
    pub fn standard(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            covariance: Matrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        mvn_logpdf(x, self)
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        self.logpdf(x).map(f64::exp)
    }

    /// Marginal over the listed coordinates.
    pub fn marginal(&self, indices: &[usize]) -> Result<Gaussian> {
        if indices.is_empty() {
            return Err(dim_err("Gaussian::marginal indices", "at least one", 0));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.dim()) {
            return Err(dim_err("Gaussian::marginal index", format!("< {}", self.dim()), bad));
        }
        let mean = indices.iter().map(|&i| self.mean[i]).collect();
        let k = indices.len();
        let mut cov = Matrix::zeros(k, k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                cov[(a, b)] = self.covariance[(i, j)];
            }
        }
        Gaussian::new(mean, cov)
    }
}

/// Log-density of `x` under `g`, evaluated through the Cholesky factor of the
/// covariance so no determinant or inverse is formed.
pub fn mvn_logpdf(x: &[f64], g: &Gaussian) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(dim_err("mvn_logpdf point", g.dim(), x.len()));
    }
    let l = g.covariance.cholesky()?;
    let z = forward_substitute(&l, &sub_vec(x, &g.mean));
    let mahalanobis: f64 = z.iter().map(|v| v * v).sum();
    let half_log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * mahalanobis - half_log_det - 0.5 * g.dim() as f64 * (2.0 * PI).ln())
}

/// Deterministic draw `mean + L z` with `z` from a ChaCha20 stream seeded by `seed`.
pub fn mvn_sample(g: &Gaussian, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    mvn_sample_with(g, &mut rng)
}

/// Draw from `g` using a caller-provided generator.
pub fn mvn_sample_with<R: Rng + ?Sized>(g: &Gaussian, rng: &mut R) -> Result<Vec<f64>> {
    sample_zero_mean(g.covariance(), rng).map(|noise| {
        g.mean.iter().zip(noise).map(|(m, e)| m + e).collect()
    })
}

/// Draw from `N(0, covariance)`; the covariance only needs to be PSD.
pub fn sample_zero_mean<R: Rng + ?Sized>(covariance: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let l = covariance.psd_factor()?;
    let z: Vec<f64> = (0..l.rows()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(l.mul_vec(&z))
}

/// Generator for the independent noise sub-stream `(seed, index, channel)`.
///
/// Each `(index, channel)` pair selects its own ChaCha stream, so draws do not
/// depend on the order in which steps are evaluated. `channel` must be < 4.
pub fn substream(seed: u64, index: u64, channel: u64) -> ChaCha20Rng {
    debug_assert!(channel < 4);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((index << 2) | channel);
    rng
}

/// Symmetric-PSD check used by invariants: smallest pivot of the
/// semi-definite factorization is within `SYMMETRY_TOL * |m|`.
pub fn is_psd(m: &Matrix) -> bool {
    m.psd_factor().is_ok() && m.asymmetry() <= SYMMETRY_TOL * m.max_abs()
}
