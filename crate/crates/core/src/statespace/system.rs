use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::matgauss::{add_vec, sample_zero_mean, substream, Matrix};

/// Noise channel selectors for [`substream`].
pub(crate) const PROCESS_CHANNEL: u64 = 0;
pub(crate) const MEASUREMENT_CHANNEL: u64 = 1;

/// `x_k = A x_{k-1} + B u_k + ε_k`, `y_k = C x_k + δ_k` with
/// `ε_k ~ N(0, R)` and `δ_k ~ N(0, Q)`.
///
/// Noise covariances are constant over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemDocument", into = "SystemDocument")]
pub struct LinearDiscreteSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    r: Matrix,
    q: Matrix,
    dt: f64,
}

/// On-disk layout: `{"A","B","C","R","Q","dt"}`, matrices as arrays of rows.
#[derive(Serialize, Deserialize)]
struct SystemDocument {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Matrix,
    #[serde(rename = "C")]
    c: Matrix,
    #[serde(rename = "R")]
    r: Matrix,
    #[serde(rename = "Q")]
    q: Matrix,
    dt: f64,
}

impl TryFrom<SystemDocument> for LinearDiscreteSystem {
    type Error = crate::Error;

    fn try_from(d: SystemDocument) -> Result<Self> {
        LinearDiscreteSystem::new(d.a, d.b, d.c, d.r, d.q, d.dt)
    }
}

impl From<LinearDiscreteSystem> for SystemDocument {
    fn from(s: LinearDiscreteSystem) -> Self {
        SystemDocument {
            a: s.a,
            b: s.b,
            c: s.c,
            r: s.r,
            q: s.q,
            dt: s.dt,
        }
    }
}

fn check_shape(context: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(())
}

impl LinearDiscreteSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, r: Matrix, q: Matrix, dt: f64) -> Result<Self> {
        let n = a.rows();
        check_shape("A", &a, n, n)?;
        check_shape("B rows", &b, n, b.cols())?;
        check_shape("C columns", &c, c.rows(), n)?;
        check_shape("R", &r, n, n)?;
        check_shape("Q", &q, c.rows(), c.rows())?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        r.psd_factor()?;
        q.psd_factor()?;
        Ok(Self {
            a,
            b,
            c,
            r: r.symmetrized(),
            q: q.symmetrized(),
            dt,
        })
    }

    /// Same dynamics with no process or measurement noise.
    pub fn noise_free(a: Matrix, b: Matrix, c: Matrix, dt: f64) -> Result<Self> {
        let n = a.rows();
        let p = c.rows();
        Self::new(a, b, c, Matrix::zeros(n, n), Matrix::zeros(p, p), dt)
    }

    pub fn with_noise(&self, r: Matrix, q: Matrix) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), r, q, self.dt)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Measurement dimension p.
    pub fn measurement_dim(&self) -> usize {
        self.c.rows()
    }

    pub(crate) fn check_state(&self, context: &'static str, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(dim_err(context, self.state_dim(), x.len()));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, context: &'static str, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(dim_err(context, self.input_dim(), u.len()));
        }
        Ok(())
    }

    pub(crate) fn check_measurement(&self, context: &'static str, y: &[f64]) -> Result<()> {
        if y.len() != self.measurement_dim() {
            return Err(dim_err(context, self.measurement_dim(), y.len()));
        }
        Ok(())
    }

    /// `A x_prev + B u`.
    pub fn step(&self, x_prev: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_state("step state", x_prev)?;
        self.check_input("step input", u)?;
        Ok(add_vec(&self.a.mul_vec(x_prev), &self.b.mul_vec(u)))
    }

    /// `C x`.
    pub fn measure(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state("measure state", x)?;
        Ok(self.c.mul_vec(x))
    }

    /// One noisy transition for step index `k`.
    ///
    /// Process noise comes from sub-stream `(seed, k, 0)` and measurement
    /// noise from `(seed, k, 1)`.
    pub fn step_noisy(&self, x_prev: &[f64], u: &[f64], seed: u64, k: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = self.step(x_prev, u)?;
        let eps = sample_zero_mean(&self.r, &mut substream(seed, k, PROCESS_CHANNEL))?;
        let x_next = add_vec(&mean, &eps);
        let delta = sample_zero_mean(&self.q, &mut substream(seed, k, MEASUREMENT_CHANNEL))?;
        let y = add_vec(&self.c.mul_vec(&x_next), &delta);
        Ok((x_next, y))
    }
}

/// `dx/dt = A_c x + B_c u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLti {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Matrix,
}

impl ContinuousLti {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        check_shape("continuous A", &a, a.rows(), a.rows())?;
        check_shape("continuous B rows", &b, a.rows(), b.cols())?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Right-hand side `A_c x + B_c u`.
    pub fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        add_vec(&self.a.mul_vec(x), &self.b.mul_vec(u))
    }
}
