//! Dense linear algebra and integration kernel.
//!
//! Matrices are `nalgebra` dense types. Everything here is a pure function of
//! its inputs, so repeated calls on one platform give bit-identical results.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Relative asymmetry accepted by [`eig_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SymmetricDecomposition {
    pub eigenvalues: DenseVector,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DenseMatrix,
}

pub(crate) fn check_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn relative_asymmetry(m: &DenseMatrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / scale
}

pub fn eig_symmetric(m: &DenseMatrix) -> Result<SymmetricDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, "eigendecomposition input")?;
    let asymmetry = relative_asymmetry(m);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues = DenseVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymmetricDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn eigenvalues_general(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, "eigenvalue input")?;
    let balanced = balance(m);
    // the QR deflation test sometimes stalls at machine epsilon; loosen it a little at a time
    for eps in [1.0, 4.0, 16.0, 64.0, 256.0].map(|k| k * f64::EPSILON) {
        if let Some(schur) = Schur::try_new(balanced.clone(), eps, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::EigenNonConvergence)
}

/// Diagonal similarity `D⁻¹ m D` with power-of-two entries that evens out
/// row and column norms (Parlett–Reinsch). Eigenvalues are unchanged.
pub fn balance(m: &DenseMatrix) -> DenseMatrix {
    let n = m.nrows();
    let mut b = m.clone();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                c += b[(j, i)].abs();
                r += b[(i, j)].abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * total {
                converged = false;
                b.row_mut(i).scale_mut(1.0 / f);
                b.column_mut(i).scale_mut(f);
            }
        }
    }
    b
}

/// Solve `m x = rhs` by partial-pivot LU.
pub fn solve(m: &DenseMatrix, rhs: &DenseVector) -> Result<DenseVector> {
    if !m.is_square() || m.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch(format!(
            "solve with {}x{} matrix and rhs of length {}",
            m.nrows(),
            m.ncols(),
            rhs.len()
        )));
    }
    check_finite(m, "solve matrix")?;
    // column equilibration so the pivot test is scale-free
    let scale = DenseVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.amax()));
    if scale.iter().any(|&s| s == 0.0) {
        return Err(Error::Singular);
    }
    let mut scaled = m.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= scale[j];
    }
    let lu = scaled.lu();
    let u = lu.u();
    let max_pivot = u.diagonal().iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let min_pivot = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
    if max_pivot == 0.0 || min_pivot <= 1e-14 * max_pivot {
        return Err(Error::Singular);
    }
    let y = lu.solve(rhs).ok_or(Error::Singular)?;
    Ok(y.component_div(&scale))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_spd(m: &DenseMatrix) -> Result<DenseMatrix> {
    let chol = m.clone().cholesky().ok_or(Error::Singular)?;
    Ok(chol.inverse())
}

/// A sampled trajectory; `times` includes both endpoints.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseVector>,
}

/// Classical fixed-step RK4. The last step is shortened to land exactly on `t1`.
pub fn rk4_integrate<F>(
    mut deriv: F,
    x0: &DenseVector,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory>
where
    F: FnMut(f64, &DenseVector) -> DenseVector,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonpositiveStep(dt));
    }
    if t1 < t0 {
        return Err(Error::DimensionMismatch(format!(
            "integration window [{t0}, {t1}] is reversed"
        )));
    }
    let full_steps = ((t1 - t0) / dt).floor() as usize;
    let mut times = Vec::with_capacity(full_steps + 2);
    let mut states = Vec::with_capacity(full_steps + 2);
    let mut x = x0.clone();
    let mut t = t0;
    times.push(t0);
    states.push(x.clone());

    let mut k = 0usize;
    loop {
        let next = t0 + (k + 1) as f64 * dt;
        // Snap a final sliver onto t1 rather than taking a near-zero step.
        let (t_next, h) = if next >= t1 - 1e-9 * dt {
            (t1, t1 - t)
        } else {
            (next, next - t)
        };
        if h <= 0.0 {
            break;
        }
        let k1 = deriv(t, &x);
        let k2 = deriv(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = deriv(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = deriv(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t = t_next;
        times.push(t);
        states.push(x.clone());
        if t >= t1 {
            break;
        }
        k += 1;
    }
    Ok(Trajectory { times, states })
}

/// Composite trapezoid approximation of `∫ ‖y(t) − reference‖² dt`.
pub fn l2_norm_squared(
    times: &[f64],
    values: &[DenseVector],
    reference: &DenseVector,
) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sample times for {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 2 {
        return Err(Error::TooFewSamples(times.len()));
    }
    let sq: Vec<f64> = values
        .iter()
        .map(|v| (v - reference).norm_squared())
        .collect();
    Ok(times
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum())
}

/// Frobenius norm of `AᵀX + XA + CᵀC`.
pub fn lyapunov_residual(a: &DenseMatrix, x: &DenseMatrix, c: &DenseMatrix) -> Result<f64> {
    let n = a.nrows();
    if !a.is_square() || x.shape() != (n, n) || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov residual with A {:?}, X {:?}, C {:?}",
            a.shape(),
            x.shape(),
            c.shape()
        )));
    }
    Ok((a.transpose() * x + x * a + c.transpose() * c).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let d = eig_symmetric(&DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!(d.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);

        let m = DenseMatrix::from_diagonal(&DenseVector::from_vec(vec![3.0, 1.0, 2.0]));
        let d = eig_symmetric(&m).unwrap();
        assert_eq!(d.eigenvalues.as_slice(), &[1.0, 2.0, 3.0]);
        // eigenvectors are the permuted unit vectors
        for (col, row) in [(0, 1), (1, 2), (2, 0)] {
            assert!((d.eigenvectors[(row, col)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eig_reconstruction_random_20() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_symmetric(&mut rng, 20);
        let d = eig_symmetric(&m).unwrap();
        let v = &d.eigenvectors;
        let resid = (&m * v - v * DenseMatrix::from_diagonal(&d.eigenvalues)).norm();
        assert!(resid <= 1e-9 * m.norm(), "residual {resid}");
        let orth = (v.transpose() * v - DenseMatrix::identity(20, 20)).norm();
        assert!(orth <= 1e-10);
        assert!(d.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eig_symmetric(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn solve_examples() {
        let rhs = DenseVector::from_vec(vec![0.3, -2.0, 5.0]);
        assert_eq!(solve(&DenseMatrix::identity(3, 3), &rhs).unwrap(), rhs);

        let m = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve(&m, &DenseVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DenseMatrix::from_fn(10, 10, |i, j| {
            rng.random_range(-1.0..1.0) + if i == j { 10.0 } else { 0.0 }
        });
        let rhs = DenseVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let x = solve(&m, &rhs).unwrap();
        let resid = (&m * &x - &rhs).norm();
        assert!(resid <= 1e-9 * (m.norm() * x.norm() + rhs.norm()));
    }

    #[test]
    fn balance_keeps_spectrum() {
        let m = DenseMatrix::from_row_slice(3, 3, &[1.0, 1e8, 0.0, 1e-8, 2.0, 1e6, 0.0, 1e-6, 3.0]);
        let b = balance(&m);
        assert!(b.norm() < 1e-3 * m.norm());
        let mut ev: Vec<f64> = eigenvalues_general(&m)
            .unwrap()
            .iter()
            .map(|z| z.re)
            .collect();
        ev.sort_by(f64::total_cmp);
        let trace: f64 = ev.iter().sum();
        assert!((trace - 6.0).abs() < 1e-9);
    }

    #[test]
    fn solve_badly_scaled_columns() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 1e-15, -1.0, 0.0]);
        let x = solve(&m, &DenseVector::from_vec(vec![1.0, -2.0])).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] + 1e15).abs() < 1e3);
    }

    #[test]
    fn solve_singular() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve(&m, &DenseVector::from_vec(vec![1.0, 1.0])),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn rk4_constant_and_exponential() {
        let c = DenseVector::from_vec(vec![1.5, -2.0]);
        let traj = rk4_integrate(|_, x| DenseVector::zeros(x.len()), &c, 0.0, 1.0, 0.1).unwrap();
        assert!(traj.states.iter().all(|x| *x == c));
        assert_eq!(*traj.times.first().unwrap(), 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);

        let x0 = DenseVector::from_vec(vec![1.0]);
        let traj = rk4_integrate(|_, x| -x, &x0, 0.0, 1.0, 1e-3).unwrap();
        let end = traj.states.last().unwrap()[0];
        assert!((end - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_partial_last_step() {
        let x0 = DenseVector::from_vec(vec![0.0]);
        let traj =
            rk4_integrate(|_, _| DenseVector::from_vec(vec![1.0]), &x0, 0.0, 1.05, 0.1).unwrap();
        assert_eq!(traj.times.len(), 12);
        assert_eq!(*traj.times.last().unwrap(), 1.05);
        assert!((traj.states.last().unwrap()[0] - 1.05).abs() < 1e-14);
    }

    #[test]
    fn rk4_fourth_order() {
        // harmonic oscillator, exact solution (cos t, -sin t)
        let x0 = DenseVector::from_vec(vec![1.0, 0.0]);
        let err = |dt: f64| {
            let traj = rk4_integrate(
                |_, x| DenseVector::from_vec(vec![x[1], -x[0]]),
                &x0,
                0.0,
                2.0,
                dt,
            )
            .unwrap();
            let end = traj.states.last().unwrap();
            ((end[0] - 2f64.cos()).powi(2) + (end[1] + 2f64.sin()).powi(2)).sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_rejects_bad_step() {
        let x0 = DenseVector::zeros(1);
        assert!(matches!(
            rk4_integrate(|_, x| x.clone(), &x0, 0.0, 1.0, 0.0),
            Err(Error::NonpositiveStep(_))
        ));
        assert!(rk4_integrate(|_, x| x.clone(), &x0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn l2_examples() {
        let r = DenseVector::from_vec(vec![2.0]);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let vals = vec![r.clone(); times.len()];
        assert_eq!(l2_norm_squared(&times, &vals, &r).unwrap(), 0.0);

        let dt = 1e-3;
        let times: Vec<f64> = (0..=20_000).map(|k| k as f64 * dt).collect();
        let vals: Vec<DenseVector> = times
            .iter()
            .map(|t| DenseVector::from_vec(vec![(-t).exp()]))
            .collect();
        let zero = DenseVector::zeros(1);
        let v = l2_norm_squared(&times, &vals, &zero).unwrap();
        assert!((v - 0.5).abs() < 1e-4, "{v}");

        let scaled: Vec<DenseVector> = vals.iter().map(|x| x * 3.0).collect();
        let v3 = l2_norm_squared(&times, &scaled, &zero).unwrap();
        assert!((v3 - 9.0 * v).abs() < 1e-12 * v3);

        assert!(matches!(
            l2_norm_squared(&[0.0], std::slice::from_ref(&zero), &zero),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn trapezoid_second_order() {
        let f = |dt: f64| {
            let k = (1.0 / dt).round() as usize;
            let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
            let vals: Vec<DenseVector> = times
                .iter()
                .map(|t| DenseVector::from_vec(vec![t.sin()]))
                .collect();
            let exact = 0.5 - (2.0f64).sin() / 4.0;
            (l2_norm_squared(&times, &vals, &DenseVector::zeros(1)).unwrap() - exact).abs()
        };
        let ratio = f(0.02) / f(0.01);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn lyapunov_residual_examples() {
        let a = DenseMatrix::identity(3, 3) * -0.5;
        let c = DenseMatrix::identity(3, 3);
        let x = DenseMatrix::identity(3, 3);
        assert_eq!(lyapunov_residual(&a, &x, &c).unwrap(), 0.0);

        let eps = 1e-3;
        let xp = &x + DenseMatrix::identity(3, 3) * eps;
        let r = lyapunov_residual(&a, &xp, &c).unwrap();
        // AᵀεI + εIA = -εI, Frobenius norm ε√3
        assert!((r - eps * 3f64.sqrt()).abs() < 1e-15);

        assert!(lyapunov_residual(&a, &DenseMatrix::identity(2, 2), &c).is_err());
    }

    #[test]
    fn general_eigenvalues_complex_pair() {
        let m = DenseMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -2.0, 0.0]);
        let mut ev = eigenvalues_general(&m).unwrap();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0].re + 1.0).abs() < 1e-12 && (ev[0].im + 1.0).abs() < 1e-12);
        assert!((ev[1].re + 1.0).abs() < 1e-12 && (ev[1].im - 1.0).abs() < 1e-12);
    }
}
