//! Reference estimators for the incubator scenarios and the batch MAP
//! solution that the Kalman recursion must reproduce.
//!
//! When the state is known exactly, estimation is plain simulation
//! ([`crate::statespace::simulate`]) and has no separate entry point here.

use crate::error::{dim_err, invalid, Error, Result};
use crate::matgauss::{Gaussian, Matrix};
use crate::statespace::LinearDiscreteSystem;

/// Most likely state trajectory without measurements: the dynamics applied to
/// the belief mean. For linear systems the mean does not depend on the
/// covariance, so the result is exact.
pub fn propagate_mean_openloop(
    x0_belief: &Gaussian,
    sys: &LinearDiscreteSystem,
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    sys.check_state("open-loop initial mean", x0_belief.mean())?;
    let mut x = x0_belief.mean().to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for u in inputs {
        x = sys.step(&x, u)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Recovers the hidden heater temperature `T_h0` of a two-state system with
/// `C = [0 1]` from the known box temperature `T_b0`, the first input and the
/// first (noise-free) measurement `y1`:
///
/// `T_h0 = (y1 - A22 T_b0 - B21 u1[0] - B22 u1[1]) / A21`
///
/// Returns `(x0, x1)` where `x1 = A x0 + B u1`. The measured coordinate of
/// `x1` is set to `y1`, which is what it equals algebraically.
pub fn backsolve_hidden_state(
    sys: &LinearDiscreteSystem,
    t_b0: f64,
    u1: &[f64],
    y1: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sys.state_dim() != 2 || sys.measurement_dim() != 1 {
        return Err(dim_err(
            "backsolve system",
            "2 states, 1 measurement",
            format!("{} states, {} measurements", sys.state_dim(), sys.measurement_dim()),
        ));
    }
    if sys.c().as_slice() != [0.0, 1.0] {
        return Err(invalid("C", "back-solve needs the selector C = [0 1]"));
    }
    sys.check_input("backsolve input", u1)?;
    let a = sys.a();
    let b = sys.b();
    let a21 = a[(1, 0)];
    let input_term: f64 = b.row(1).iter().zip(u1).map(|(bij, uj)| bij * uj).sum();
    let t_h0 = (y1 - a[(1, 1)] * t_b0 - input_term) / a21;
    if a21 == 0.0 || !t_h0.is_finite() {
        return Err(Error::Unobservable { a21 });
    }
    let x0 = vec![t_h0, t_b0];
    let mut x1 = sys.step(&x0, u1)?;
    x1[1] = y1;
    Ok((x0, x1))
}

/// Joint MAP estimate of `x_0..x_k` given a prior on `x_0`, inputs `u_1..u_k`
/// and measurements `y_1..y_k`.
///
/// The negative log-posterior
///
/// ```text
/// ½|x_0 - μ_0|²_{P_0⁻¹} + Σ_j ½|x_j - A x_{j-1} - B u_j|²_{R⁻¹} + ½|y_j - C x_j|²_{Q⁻¹}
/// ```
///
/// is quadratic, so its minimizer solves the normal equations `H x = g` with
/// a block-tridiagonal Hessian `H`. The system is assembled densely and solved
/// by Cholesky. The returned Gaussian is the last state's MAP value with the
/// matching diagonal block of `H⁻¹` as covariance.
///
/// Requires SPD `R`, `Q` and prior covariance.
pub fn batch_map_oracle(
    sys: &LinearDiscreteSystem,
    prior: &Gaussian,
    inputs: &[Vec<f64>],
    measurements: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Gaussian)> {
    let horizon = inputs.len();
    if horizon == 0 {
        return Err(invalid("inputs", "horizon must be at least one step"));
    }
    if measurements.len() != horizon {
        return Err(dim_err("batch_map_oracle measurements", horizon, measurements.len()));
    }
    let n = sys.state_dim();
    sys.check_state("batch_map_oracle prior", prior.mean())?;
    for (u, y) in inputs.iter().zip(measurements) {
        sys.check_input("batch_map_oracle input", u)?;
        sys.check_measurement("batch_map_oracle measurement", y)?;
    }

    let r_inv = spd_inverse(sys.r())?;
    let q_inv = spd_inverse(sys.q())?;
    let p0_inv = spd_inverse(prior.covariance())?;
    let a = sys.a();
    let at_rinv = &a.transpose() * &r_inv;
    let at_rinv_a = &at_rinv * a;
    let rinv_a = &r_inv * a;
    let ct_qinv = &sys.c().transpose() * &q_inv;
    let ct_qinv_c = &ct_qinv * sys.c();

    let size = (horizon + 1) * n;
    let mut hessian = Matrix::zeros(size, size);
    let mut rhs = Matrix::zeros(size, 1);

    hessian.add_block(0, 0, &p0_inv);
    rhs.add_block(0, 0, &Matrix::column(&p0_inv.mul_vec(prior.mean())));

    for j in 1..=horizon {
        let cur = j * n;
        let prev = (j - 1) * n;
        let drive = sys.b().mul_vec(&inputs[j - 1]);

        hessian.add_block(cur, cur, &r_inv);
        hessian.add_block(prev, prev, &at_rinv_a);
        hessian.add_block(cur, prev, &(-&rinv_a));
        hessian.add_block(prev, cur, &(-&at_rinv));
        rhs.add_block(cur, 0, &Matrix::column(&r_inv.mul_vec(&drive)));
        rhs.add_block(prev, 0, &Matrix::column(&at_rinv.mul_vec(&drive)).scale(-1.0));

        hessian.add_block(cur, cur, &ct_qinv_c);
        rhs.add_block(cur, 0, &Matrix::column(&ct_qinv.mul_vec(&measurements[j - 1])));
    }

    let solution = hessian.solve_spd(&rhs).map_err(|_| Error::Singular)?;
    let trajectory: Vec<Vec<f64>> = (0..=horizon)
        .map(|j| (0..n).map(|i| solution[(j * n + i, 0)]).collect())
        .collect();

    // last block column of H⁻¹
    let mut selector = Matrix::zeros(size, n);
    selector.set_block(horizon * n, 0, &Matrix::identity(n));
    let cols = hessian.solve_spd(&selector).map_err(|_| Error::Singular)?;
    let final_cov = cols.block(horizon * n, 0, n, n).symmetrized();
    let final_belief = Gaussian::new(trajectory[horizon].clone(), final_cov)?;
    Ok((trajectory, final_belief))
}

fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    m.solve_spd(&Matrix::identity(m.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::simulate;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]]).unwrap()
    }

    fn two_state(a21: f64, a22: f64, b21: f64, b22: f64) -> LinearDiscreteSystem {
        LinearDiscreteSystem::noise_free(
            Matrix::from_rows(&[[0.95, 0.03], [a21, a22]]).unwrap(),
            Matrix::from_rows(&[[0.1, 0.0], [b21, b22]]).unwrap(),
            Matrix::from_rows(&[[0.0, 1.0]]).unwrap(),
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn openloop_with_identity_is_constant() {
        let sys = LinearDiscreteSystem::noise_free(Matrix::identity(2), Matrix::zeros(2, 1), Matrix::identity(2), 1.0).unwrap();
        let belief = Gaussian::new(vec![2.0, 3.0], Matrix::identity(2)).unwrap();
        let out = propagate_mean_openloop(&belief, &sys, &vec![vec![9.0]; 4]).unwrap();
        assert!(out.iter().all(|x| x == &vec![2.0, 3.0]));
    }

    #[test]
    fn openloop_with_point_belief_is_simulation() {
        let sys = two_state(0.2, 0.9, 0.0, 0.05);
        let belief = Gaussian::new(vec![30.0, 20.0], Matrix::zeros(2, 2)).unwrap();
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 2) as f64, 20.0]).collect();
        let means = propagate_mean_openloop(&belief, &sys, &inputs).unwrap();
        let traj = simulate(&sys, &[30.0, 20.0], &inputs, None).unwrap();
        assert_eq!(means, traj.states().map(<[f64]>::to_vec).collect::<Vec<_>>());
    }

    #[test]
    fn backsolve_hand_example() {
        let sys = two_state(0.2, 0.9, 0.0, 0.05);
        let (x0, x1) = backsolve_hidden_state(&sys, 20.0, &[0.0, 20.0], 20.0).unwrap();
        assert!((x0[0] - 5.0).abs() < 1e-12);
        assert_eq!(x0[1], 20.0);
        assert_eq!(x1[1], 20.0);
    }

    #[test]
    fn backsolve_direct_observation() {
        let sys = two_state(1.0, 0.0, 0.0, 0.0);
        let (x0, _) = backsolve_hidden_state(&sys, 12.0, &[1.0, 21.0], 33.5).unwrap();
        assert_eq!(x0[0], 33.5);
    }

    #[test]
    fn backsolve_round_trip() {
        let sys = two_state(0.02, 0.97, 0.001, 0.01);
        let x0 = [47.25, 30.5];
        let u = [1.0, 21.0];
        let y1 = sys.measure(&sys.step(&x0, &u).unwrap()).unwrap()[0];
        let (rec, x1) = backsolve_hidden_state(&sys, x0[1], &u, y1).unwrap();
        assert!((rec[0] - x0[0]).abs() < 1e-12);
        let truth = sys.step(&x0, &u).unwrap();
        assert!((x1[0] - truth[0]).abs() < 1e-12);
    }

    #[test]
    fn backsolve_rejects_unobservable_and_wrong_shape() {
        let sys = two_state(0.0, 0.9, 0.0, 0.05);
        assert!(matches!(
            backsolve_hidden_state(&sys, 20.0, &[0.0, 20.0], 20.0),
            Err(Error::Unobservable { .. })
        ));
        let scalar_sys = LinearDiscreteSystem::noise_free(scalar(1.0), scalar(1.0), scalar(1.0), 1.0).unwrap();
        assert!(backsolve_hidden_state(&scalar_sys, 0.0, &[0.0], 0.0).is_err());
    }

    #[test]
    fn map_single_scalar_step_matches_hand_kalman() {
        // prior N(3, 0.5) pushed through A = 1 with R = 0.5 gives the predicted
        // belief N(3, 1); conditioning on y = 4 with Q = 1 gives N(3.5, 0.5)
        let sys = LinearDiscreteSystem::new(scalar(1.0), scalar(0.0), scalar(1.0), scalar(0.5), scalar(1.0), 1.0).unwrap();
        let prior = Gaussian::new(vec![3.0], scalar(0.5)).unwrap();
        let (traj, fin) = batch_map_oracle(&sys, &prior, &[vec![0.0]], &[vec![4.0]]).unwrap();
        assert_eq!(traj.len(), 2);
        assert!((fin.mean()[0] - 3.5).abs() < 1e-12);
        assert!((fin.covariance()[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn map_rejects_bad_horizons() {
        let sys = LinearDiscreteSystem::new(scalar(1.0), scalar(0.0), scalar(1.0), scalar(1.0), scalar(1.0), 1.0).unwrap();
        let prior = Gaussian::standard(1);
        assert!(batch_map_oracle(&sys, &prior, &[], &[]).is_err());
        assert!(batch_map_oracle(&sys, &prior, &[vec![0.0]], &[]).is_err());
        let singular = sys.with_noise(scalar(0.0), scalar(1.0)).unwrap();
        assert!(batch_map_oracle(&singular, &prior, &[vec![0.0]], &[vec![0.0]]).is_err());
    }
}
