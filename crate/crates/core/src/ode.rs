//! Continuous-time linear approximation of the PI-controlled network.
//!
//! State is `x = (θ̄, ξ/ω_c)`; the full `2n` system keeps the drift of the
//! average phase, the reduced `2n − 2` system removes it and is what the
//! stability and performance analysis works on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralData;
use crate::numerics::{rk4_integrate, solve, DenseMatrix, DenseVector};

/// PI gains. `a = k_p`, `b = omega_c * k_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k_p: f64,
    pub k_i: f64,
    pub omega_c: f64,
}

impl Gains {
    pub fn new(k_p: f64, k_i: f64, omega_c: f64) -> Result<Self> {
        let g = Self { k_p, k_i, omega_c };
        if !(g.a() > 0.0 && g.a().is_finite()) {
            return Err(Error::validation(
                "controller.k_p",
                format!("must be positive, got {k_p}"),
            ));
        }
        if !(g.b() > 0.0 && g.b().is_finite()) {
            return Err(Error::validation(
                "controller.k_i",
                format!("omega_c * k_i must be positive, got {}", g.b()),
            ));
        }
        Ok(g)
    }

    /// Skips the positivity checks; used to probe the analysis outside its hypotheses.
    pub fn new_unchecked(k_p: f64, k_i: f64, omega_c: f64) -> Self {
        Self { k_p, k_i, omega_c }
    }

    pub fn a(&self) -> f64 {
        self.k_p
    }

    pub fn b(&self) -> f64 {
        self.omega_c * self.k_i
    }
}

#[derive(Debug, Clone)]
pub struct OdeSystem {
    pub a: DenseMatrix,
    pub b2: DenseMatrix,
    pub c1: DenseMatrix,
    pub d1: DenseMatrix,
    pub c2: DenseMatrix,
}

impl OdeSystem {
    pub fn n(&self) -> usize {
        self.b2.ncols()
    }

    pub fn m(&self) -> usize {
        self.c2.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub a_hat: DenseMatrix,
    pub b2_hat: DenseMatrix,
    pub c1_hat: DenseMatrix,
    pub c2_hat: DenseMatrix,
    /// `[Ĉ₁; Ĉ₂]`
    pub c_hat: DenseMatrix,
    pub u1: DenseMatrix,
    pub gains: Gains,
}

fn block2x2(
    a11: &DenseMatrix,
    a12: &DenseMatrix,
    a21: &DenseMatrix,
    a22: &DenseMatrix,
) -> DenseMatrix {
    let (r1, c1) = a11.shape();
    let (r2, c2) = a22.shape();
    let mut m = DenseMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a11);
    m.view_mut((0, c1), (r1, c2)).copy_from(a12);
    m.view_mut((r1, 0), (r2, c1)).copy_from(a21);
    m.view_mut((r1, c1), (r2, c2)).copy_from(a22);
    m
}

fn hstack(left: &DenseMatrix, right: &DenseMatrix) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    m.columns_mut(0, left.ncols()).copy_from(left);
    m.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    m
}

fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.rows_mut(0, top.nrows()).copy_from(top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    m
}

pub fn build_full_system(sd: &SpectralData, gains: &Gains) -> OdeSystem {
    let n = sd.n();
    let (a, b) = (gains.a(), gains.b());
    let l = &sd.laplacian;
    let eye = DenseMatrix::identity(n, n);
    let zero = DenseMatrix::zeros(n, n);

    let a_mat = block2x2(&(l * -a), &(&eye * b), &(-l), &zero);
    let b2 = vstack(&eye, &zero);
    let c1 = hstack(&(l * -a), &(&eye * b));
    let c2 = hstack(&(-sd.incidence.transpose()), &DenseMatrix::zeros(sd.m(), n));
    OdeSystem {
        a: a_mat,
        b2,
        c1,
        d1: eye,
        c2,
    }
}

pub fn build_reduced_system(sd: &SpectralData, gains: &Gains) -> ReducedSystem {
    let k = sd.n() - 1;
    let (a, b) = (gains.a(), gains.b());
    let lhat = &sd.reduced_laplacian;
    let u1 = &sd.u1;
    let eye = DenseMatrix::identity(k, k);

    let a_hat = block2x2(
        &(lhat * -a),
        &(&eye * b),
        &(-lhat),
        &DenseMatrix::zeros(k, k),
    );
    let b2_hat = vstack(&u1.transpose(), &DenseMatrix::zeros(k, sd.n()));
    let c1_hat = hstack(&(&sd.laplacian * u1 * -a), &(u1 * b));
    let c2_hat = hstack(
        &(-sd.incidence.transpose() * u1),
        &DenseMatrix::zeros(sd.m(), k),
    );
    let c_hat = vstack(&c1_hat, &c2_hat);
    ReducedSystem {
        a_hat,
        b2_hat,
        c1_hat,
        c2_hat,
        c_hat,
        u1: u1.clone(),
        gains: *gains,
    }
}

/// Step resolving the fastest closed-loop mode with a 20× margin.
pub fn default_step(sd: &SpectralData, gains: &Gains) -> f64 {
    let lmax = sd.lambda_max();
    let proportional = 1.0 / (gains.a() * lmax);
    let integral = 1.0 / (gains.b() * lmax).sqrt();
    proportional.min(integral) / 20.0
}

#[derive(Debug, Clone)]
pub struct OdeTrace {
    pub times: Vec<f64>,
    /// `θ̄ = θ − θ⁰` per node.
    pub theta_bar: Vec<DenseVector>,
    /// `ξ / ω_c` per node.
    pub integral: Vec<DenseVector>,
    pub omega: Vec<DenseVector>,
    /// Relative occupancy per edge, in frames.
    pub delta: Vec<DenseVector>,
}

impl OdeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn simulate_ode(
    sys: &OdeSystem,
    omega_u: &DenseVector,
    t_end: f64,
    dt: f64,
) -> Result<OdeTrace> {
    let n = sys.n();
    if omega_u.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "omega_u has length {}, system has {n} nodes",
            omega_u.len()
        )));
    }
    let forcing = &sys.b2 * omega_u;
    let traj = rk4_integrate(
        |_, x| &sys.a * x + &forcing,
        &DenseVector::zeros(2 * n),
        0.0,
        t_end,
        dt,
    )?;

    let mut trace = OdeTrace {
        times: traj.times,
        theta_bar: Vec::with_capacity(traj.states.len()),
        integral: Vec::with_capacity(traj.states.len()),
        omega: Vec::with_capacity(traj.states.len()),
        delta: Vec::with_capacity(traj.states.len()),
    };
    for x in &traj.states {
        trace.theta_bar.push(x.rows(0, n).into_owned());
        trace.integral.push(x.rows(n, n).into_owned());
        trace.omega.push(&sys.c1 * x + &sys.d1 * omega_u);
        trace.delta.push(&sys.c2 * x);
    }
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    /// `[0; −U1ᵀ ω_u / b]`
    pub closed_form: DenseVector,
    /// `−Â⁻¹ B̂₂ ω_u`
    pub solved: DenseVector,
    /// `ω_avg · 1`
    pub omega_ss: DenseVector,
}

impl SteadyState {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.closed_form.norm().max(self.solved.norm());
        if scale == 0.0 {
            0.0
        } else {
            (&self.closed_form - &self.solved).norm() / scale
        }
    }
}

pub fn steady_state(reduced: &ReducedSystem, omega_u: &DenseVector) -> Result<SteadyState> {
    let n = reduced.u1.nrows();
    let k = n - 1;
    if omega_u.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "omega_u has length {}, system has {n} nodes",
            omega_u.len()
        )));
    }
    let mut closed_form = DenseVector::zeros(2 * k);
    closed_form
        .rows_mut(k, k)
        .copy_from(&(reduced.u1.transpose() * omega_u / -reduced.gains.b()));
    let solved = -solve(&reduced.a_hat, &(&reduced.b2_hat * omega_u))?;
    let omega_ss = DenseVector::from_element(n, omega_u.mean());
    Ok(SteadyState {
        closed_form,
        solved,
        omega_ss,
    })
}

/// Trajectory in the coordinates `x = [U1 0 U2 0; 0 U1 0 U2] x̂`.
#[derive(Debug, Clone)]
pub struct DecoupledTrace {
    pub times: Vec<f64>,
    pub x1: Vec<DenseVector>,
    pub x2: Vec<DenseVector>,
    pub x3: Vec<f64>,
    pub x4: Vec<f64>,
}

impl DecoupledTrace {
    /// `x̃ = (x̂₁, x̂₂)` at sample `k`.
    pub fn reduced_state(&self, k: usize) -> DenseVector {
        let d = self.x1[k].len();
        let mut x = DenseVector::zeros(2 * d);
        x.rows_mut(0, d).copy_from(&self.x1[k]);
        x.rows_mut(d, d).copy_from(&self.x2[k]);
        x
    }
}

pub fn decoupled_coordinates(trace: &OdeTrace, sd: &SpectralData) -> DecoupledTrace {
    let u1t = sd.u1.transpose();
    let u2 = sd.u2();
    DecoupledTrace {
        times: trace.times.clone(),
        x1: trace.theta_bar.iter().map(|v| &u1t * v).collect(),
        x2: trace.integral.iter().map(|v| &u1t * v).collect(),
        x3: trace.theta_bar.iter().map(|v| u2.dot(v)).collect(),
        x4: trace.integral.iter().map(|v| u2.dot(v)).collect(),
    }
}
