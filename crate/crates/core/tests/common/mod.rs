#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use twinwatch::matgauss::Matrix;
use twinwatch::statespace::LinearDiscreteSystem;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn rand_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `G Gᵀ / n + floor·I`: eigenvalues between `floor` and a few units.
pub fn rand_spd(rng: &mut impl Rng, n: usize, floor: f64) -> Matrix {
    let g = rand_matrix(rng, n, n, 1.0);
    let mut m = (&g * &g.transpose()).scale(1.0 / n as f64);
    for i in 0..n {
        m[(i, i)] += floor;
    }
    m.symmetrized()
}

/// Random system with `‖A‖∞ ≤ 1.05`, SPD `R` and `Q`.
pub fn rand_system(rng: &mut impl Rng, n: usize, m: usize, p: usize) -> LinearDiscreteSystem {
    let a0 = rand_matrix(rng, n, n, 1.0);
    let target = rng.random_range(0.3..1.05);
    let a = a0.scale(target / a0.norm_inf().max(1e-12));
    let b = rand_matrix(rng, n, m, 1.0);
    let c = rand_matrix(rng, p, n, 1.0);
    let r = rand_spd(rng, n, 0.05);
    let q = rand_spd(rng, p, 0.05);
    LinearDiscreteSystem::new(a, b, c, r, q, 1.0).unwrap()
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm_fro() / b.norm_fro().max(1e-300)
}

pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Smallest eigenvalue of a symmetric matrix, computed by nalgebra.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let sym = to_na(&m.symmetrized());
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Classic fourth-order Runge-Kutta for `ẋ = f(x)`.
pub fn rk4<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, &k1, h / 2.0));
        let k3 = f(&axpy(&x, &k2, h / 2.0));
        let k4 = f(&axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}
