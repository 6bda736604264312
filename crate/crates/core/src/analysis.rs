//! Stability and L2 performance of the linearized closed loop.
//!
//! Two independent witnesses of stability are provided: the eigenvalues of
//! `Â` and an explicit Lyapunov certificate `X = X₁ + X₂`. The closed-form
//! norms depend on the graph only through `ω_uᵀ L† ω_u` and on the controller
//! only through `a` and `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralData;
use crate::numerics::{
    eig_symmetric, eigenvalues_general, inverse_spd, l2_norm_squared, DenseMatrix, DenseVector,
};
use crate::ode::{
    build_full_system, build_reduced_system, default_step, simulate_ode, Gains, OdeTrace,
    ReducedSystem,
};

/// Relative tolerance on the Lyapunov residuals.
pub const LYAPUNOV_REL_TOL: f64 = 1e-9;

/// Empirical norms integrate to this many time constants `1/|σ|`.
pub const HORIZON_FACTOR: f64 = 30.0;

/// Tail fraction above which an empirical norm is flagged as truncated.
pub const TAIL_WARN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzCheck {
    pub is_hurwitz: bool,
    /// Largest real part among the eigenvalues.
    pub spectral_abscissa: f64,
    pub tolerance: f64,
}

pub fn hurwitz_check(a_hat: &DenseMatrix) -> Result<HurwitzCheck> {
    let eigenvalues = eigenvalues_general(a_hat)?;
    let spectral_abscissa = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = 1e-10 * a_hat.norm();
    Ok(HurwitzCheck {
        is_hurwitz: spectral_abscissa < -tolerance,
        spectral_abscissa,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// `‖ω − ω_ss‖²`
    pub freq_dev_norm_sq: f64,
    /// `‖δ‖²`
    pub occupancy_norm_sq: f64,
    /// `ω_uᵀ L† ω_u`
    pub quadratic_form: f64,
    pub a: f64,
    pub b: f64,
}

pub fn predicted_performance(
    sd: &SpectralData,
    gains: &Gains,
    omega_u: &DenseVector,
) -> Result<PerformanceReport> {
    if omega_u.len() != sd.n() {
        return Err(Error::DimensionMismatch(format!(
            "omega_u has length {}, graph has {} nodes",
            omega_u.len(),
            sd.n()
        )));
    }
    // L†1 = 0, so only the zero-mean part contributes; dropping the mean first
    // keeps a large common frequency from swamping small deviations.
    let centered = omega_u.add_scalar(-omega_u.mean());
    let quadratic_form = centered.dot(&(&sd.pseudo_inverse * &centered)).max(0.0);
    Ok(report_from_quadratic_form(quadratic_form, gains))
}

fn report_from_quadratic_form(quadratic_form: f64, gains: &Gains) -> PerformanceReport {
    let (a, b) = (gains.a(), gains.b());
    let freq_dev_norm_sq = quadratic_form / (2.0 * a);
    PerformanceReport {
        freq_dev_norm_sq,
        occupancy_norm_sq: freq_dev_norm_sq / b,
        quadratic_form,
        a,
        b,
    }
}

/// `ω_u = base·1 + α(e_i − e_j)`, for which `ω_uᵀ L† ω_u = α² R_ij`.
pub fn two_node_perturbation(
    sd: &SpectralData,
    gains: &Gains,
    i: usize,
    j: usize,
    alpha: f64,
    base_freq: f64,
) -> Result<(DenseVector, PerformanceReport)> {
    let n = sd.n();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    if i == j {
        return Err(Error::validation(
            "frequencies.perturbation",
            "nodes i and j must differ",
        ));
    }
    let omega_u = perturbed_frequencies(n, i, j, alpha, base_freq);
    let r = sd.resistance_distance(i, j)?;
    Ok((
        omega_u,
        report_from_quadratic_form(alpha * alpha * r, gains),
    ))
}

pub fn perturbed_frequencies(
    n: usize,
    i: usize,
    j: usize,
    alpha: f64,
    base_freq: f64,
) -> DenseVector {
    let mut omega_u = DenseVector::from_element(n, base_freq);
    omega_u[i] += alpha;
    omega_u[j] -= alpha;
    omega_u
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub omega_u: DenseVector,
    /// `γ² / λ₂`
    pub attained: f64,
    pub lambda2: f64,
    /// The maximizer is not unique when `λ₂` is repeated.
    pub degenerate: bool,
}

/// Maximizer of `ω_uᵀ L† ω_u` over `‖ω_u‖ ≤ γ`.
pub fn worst_case_frequency(sd: &SpectralData, gamma: f64) -> Result<WorstCase> {
    if !(gamma > 0.0) {
        return Err(Error::validation(
            "gamma",
            format!("must be positive, got {gamma}"),
        ));
    }
    let f = sd.fiedler_vector();
    Ok(WorstCase {
        omega_u: &f.vector * gamma,
        attained: gamma * gamma / f.lambda2,
        lambda2: f.lambda2,
        degenerate: f.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    #[serde(skip)]
    pub x1: DenseMatrix,
    #[serde(skip)]
    pub x2: DenseMatrix,
    /// `‖ÂᵀX₁ + X₁Â + Ĉ₁ᵀĈ₁‖_F`
    pub residual1: f64,
    pub residual2: f64,
    /// Residual of the stacked equation with `X = X₁ + X₂` and `Ĉ`.
    pub residual_sum: f64,
    /// Residuals divided by the Frobenius norm of the matching `ĈᵀĈ`.
    pub relative1: f64,
    pub relative2: f64,
    pub relative_sum: f64,
    /// Smallest eigenvalue of the diagonally scaled `X₁`, `X₂`, `X` (sign matches the unscaled matrix).
    pub min_eig_x1: f64,
    pub min_eig_x2: f64,
    pub min_eig_x: f64,
    /// Smallest eigenvalue of the Schur complement of the upper-left block of `X₁`.
    pub schur_min_eig: f64,
}

impl LyapunovCertificate {
    pub fn within_tolerance(&self, rel_tol: f64) -> bool {
        self.relative1 <= rel_tol && self.relative2 <= rel_tol && self.relative_sum <= rel_tol
    }
}

/// Smallest eigenvalue of `D^{-1/2} M D^{-1/2}` with `D = diag(M)`; same inertia as `M`.
fn scaled_min_eigenvalue(m: &DenseMatrix) -> Result<f64> {
    let d = m.diagonal();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Ok(d.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let s = d.map(|x| 1.0 / x.sqrt());
    let scaled = DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i] * s[j]);
    let sym = (&scaled + scaled.transpose()) * 0.5;
    Ok(eig_symmetric(&sym)?.eigenvalues[0])
}

fn residual(a: &DenseMatrix, x: &DenseMatrix, c: &DenseMatrix) -> (f64, f64) {
    let ctc = c.transpose() * c;
    let r = (a.transpose() * x + x * a + &ctc).norm();
    let scale = ctc.norm();
    (r, if scale > 0.0 { r / scale } else { r })
}

/// Explicit solutions `X₁`, `X₂` of the Lyapunov equations for `(Â, Ĉ₁)` and `(Â, Ĉ₂)`.
pub fn build_lyapunov_certificate(
    reduced: &ReducedSystem,
    sd: &SpectralData,
    gains: &Gains,
) -> Result<LyapunovCertificate> {
    let (a, b) = (gains.a(), gains.b());
    let k = sd.n() - 1;
    let lhat = &sd.reduced_laplacian;
    let lhat_inv = inverse_spd(lhat)?;
    let eye = DenseMatrix::identity(k, k);

    let top_left = lhat * (a / 2.0) + &eye * (b / (2.0 * a));
    let off = &eye * (-b / 2.0);
    let bottom_right = &lhat_inv * (b * b / (2.0 * a));
    let mut x1 = DenseMatrix::zeros(2 * k, 2 * k);
    x1.view_mut((0, 0), (k, k)).copy_from(&top_left);
    x1.view_mut((0, k), (k, k)).copy_from(&off);
    x1.view_mut((k, 0), (k, k)).copy_from(&off);
    x1.view_mut((k, k), (k, k)).copy_from(&bottom_right);

    let mut x2 = DenseMatrix::zeros(2 * k, 2 * k);
    x2.view_mut((0, 0), (k, k))
        .copy_from(&(&eye * (1.0 / (2.0 * a))));
    x2.view_mut((k, k), (k, k))
        .copy_from(&(&lhat_inv * (b / (2.0 * a))));

    let x = &x1 + &x2;
    let (residual1, relative1) = residual(&reduced.a_hat, &x1, &reduced.c1_hat);
    let (residual2, relative2) = residual(&reduced.a_hat, &x2, &reduced.c2_hat);
    let (residual_sum, relative_sum) = residual(&reduced.a_hat, &x, &reduced.c_hat);

    // Schur complement: (b²/2a) L̂⁻¹ − (b/2)² ((a/2) L̂ + (b/2a) I)⁻¹
    let schur = &bottom_right - inverse_spd(&top_left)? * (b * b / 4.0);
    let schur = (&schur + schur.transpose()) * 0.5;
    let schur_min_eig = scaled_min_eigenvalue(&schur)?;

    let min_eig_x1 = scaled_min_eigenvalue(&x1)?;
    let min_eig_x2 = scaled_min_eigenvalue(&x2)?;
    let min_eig_x = scaled_min_eigenvalue(&x)?;
    for (which, min_eigenvalue) in [
        ("X1", min_eig_x1),
        ("X2", min_eig_x2),
        ("X1 + X2", min_eig_x),
    ] {
        if !(min_eigenvalue > 0.0) {
            return Err(Error::PositivityViolation {
                which,
                min_eigenvalue,
            });
        }
    }

    Ok(LyapunovCertificate {
        x1,
        x2,
        residual1,
        residual2,
        residual_sum,
        relative1,
        relative2,
        relative_sum,
        min_eig_x1,
        min_eig_x2,
        min_eig_x,
        schur_min_eig,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNorms {
    pub freq_dev_norm_sq: f64,
    pub occupancy_norm_sq: f64,
    /// Estimated contribution of `[t_end, ∞)` relative to each integral (the larger of the two).
    pub tail_fraction: f64,
    pub insufficient_horizon: bool,
}

/// Trapezoid quadrature of `∫‖ω − ω_ss‖²` and `∫‖δ‖²` over the trace window.
///
/// The tail beyond the window is estimated assuming the integrand decays like
/// `e^{2σt}` with `σ = spectral_abscissa`.
pub fn empirical_norms(
    trace: &OdeTrace,
    omega_ss: &DenseVector,
    spectral_abscissa: f64,
) -> Result<EmpiricalNorms> {
    let freq = l2_norm_squared(&trace.times, &trace.omega, omega_ss)?;
    let m = trace.delta.first().map(|d| d.len()).unwrap_or(0);
    let occ = l2_norm_squared(&trace.times, &trace.delta, &DenseVector::zeros(m))?;

    let rate = 2.0 * spectral_abscissa.abs();
    let last = trace.times.len() - 1;
    let tail = |integral: f64, end_value: f64| {
        if integral <= 0.0 {
            0.0
        } else if rate > 0.0 {
            end_value / rate / integral
        } else {
            f64::INFINITY
        }
    };
    let tail_fraction = tail(freq, (&trace.omega[last] - omega_ss).norm_squared())
        .max(tail(occ, trace.delta[last].norm_squared()));
    let insufficient_horizon = tail_fraction > TAIL_WARN_FRACTION;
    if insufficient_horizon {
        log::warn!(
            "empirical norm horizon too short: tail estimate {:.3}% of integral",
            100.0 * tail_fraction
        );
    }
    Ok(EmpiricalNorms {
        freq_dev_norm_sq: freq,
        occupancy_norm_sq: occ,
        tail_fraction,
        insufficient_horizon,
    })
}

/// Integrates the full ODE from rest to `HORIZON_FACTOR / |σ|` and evaluates the norms.
#[derive(Debug, Clone)]
pub struct EmpiricalRun {
    pub hurwitz: HurwitzCheck,
    pub t_end: f64,
    pub dt: f64,
    pub norms: EmpiricalNorms,
    pub trace: OdeTrace,
}

pub fn simulate_norms(
    sd: &SpectralData,
    gains: &Gains,
    omega_u: &DenseVector,
) -> Result<EmpiricalRun> {
    let reduced = build_reduced_system(sd, gains);
    let hurwitz = hurwitz_check(&reduced.a_hat)?;
    if !hurwitz.is_hurwitz {
        return Err(Error::validation(
            "controller",
            format!(
                "closed loop is not stable (spectral abscissa {:e})",
                hurwitz.spectral_abscissa
            ),
        ));
    }
    let t_end = HORIZON_FACTOR / hurwitz.spectral_abscissa.abs();
    let dt = default_step(sd, gains);
    let sys = build_full_system(sd, gains);
    let trace = simulate_ode(&sys, omega_u, t_end, dt)?;
    let omega_ss = DenseVector::from_element(sd.n(), omega_u.mean());
    let norms = empirical_norms(&trace, &omega_ss, hurwitz.spectral_abscissa)?;
    Ok(EmpiricalRun {
        hurwitz,
        t_end,
        dt,
        norms,
        trace,
    })
}

/// Number of RK4 steps [`simulate_norms`] would take.
pub fn simulation_cost(sd: &SpectralData, gains: &Gains) -> Result<f64> {
    let reduced = build_reduced_system(sd, gains);
    let h = hurwitz_check(&reduced.a_hat)?;
    Ok(HORIZON_FACTOR / h.spectral_abscissa.abs() / default_step(sd, gains))
}
