//! Gaussian moment closure for the measured spin-oscillator.
//!
//! Means of `x = (z, p, J_z)` follow
//!
//! ```text
//! d<x> = A <x> dt + sqrt(8k) c dW,     c = (C_zz, C_zp, C_zJz)
//! ```
//!
//! and, with third and higher cumulants dropped, the symmetrized covariance
//! obeys the deterministic matrix Riccati equation
//!
//! ```text
//! dC/dt = A C + C A^T + D - 8k c c^T,   D = diag(0, 2 hbar^2 k, 0)
//! A = [[0, 1/m, 0], [-m omega^2, 0, -b], [0, 0, 0]]
//! ```
//!
//! `J_z` commutes with both `H` and the measured `z`, so it has no diffusion
//! term of its own.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::params::ModelParams;
use crate::sse::Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl MomentState {
    pub fn new(mean: [f64; 3], cov: Matrix3<f64>) -> Result<Self> {
        check_symmetric(&cov)?;
        Ok(MomentState { mean: Vector3::from(mean), cov })
    }

    /// Coherent motional state at `(z0, p0)` times the x-polarized spin
    /// coherent state.
    pub fn coherent_product(params: &ModelParams, z0: f64, p0: f64) -> Self {
        let cov = Matrix3::from_diagonal(&Vector3::new(
            params.z_g().powi(2),
            params.p_g().powi(2),
            params.j() * params.hbar.powi(2) / 2.0,
        ));
        MomentState { mean: Vector3::new(z0, p0, 0.0), cov }
    }

    pub fn from_observation(o: &Observation) -> Self {
        MomentState {
            mean: Vector3::new(o.z, o.p, o.jz),
            cov: Matrix3::new(
                o.czz, o.czp, o.czjz, //
                o.czp, o.cpp, o.cpjz, //
                o.czjz, o.cpjz, o.cjzjz,
            ),
        }
    }
}

/// Linear drift of `(z, p, J_z)`.
pub fn drift_matrix(params: &ModelParams) -> Matrix3<f64> {
    let (m, w, b) = (params.m, params.omega, params.b);
    Matrix3::new(
        0.0,
        1.0 / m,
        0.0, //
        -m * w * w,
        0.0,
        -b, //
        0.0,
        0.0,
        0.0,
    )
}

pub fn diffusion_matrix(params: &ModelParams) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(0.0, 2.0 * params.hbar.powi(2) * params.k, 0.0))
}

fn asymmetry(c: &Matrix3<f64>) -> f64 {
    (c - c.transpose()).abs().max()
}

fn check_symmetric(c: &Matrix3<f64>) -> Result<()> {
    let a = asymmetry(c);
    if a > 1e-12 * c.abs().max().max(1e-300) {
        return Err(Error::Asymmetric { asymmetry: a });
    }
    Ok(())
}

/// Right-hand side of the covariance Riccati equation.
pub fn covariance_rhs(c: &Matrix3<f64>, params: &ModelParams) -> Result<Matrix3<f64>> {
    check_symmetric(c)?;
    Ok(riccati(c, &drift_matrix(params), &diffusion_matrix(params), params.k))
}

#[inline]
fn riccati(c: &Matrix3<f64>, a: &Matrix3<f64>, d: &Matrix3<f64>, k: f64) -> Matrix3<f64> {
    let ac = a * c;
    let col = c.column(0).into_owned();
    // ac + ac^T is symmetric bit for bit
    ac + ac.transpose() + d - col * col.transpose() * (8.0 * k)
}

/// Classical RK4 step of the covariance.
pub fn covariance_step(c: &Matrix3<f64>, params: &ModelParams, dt: f64) -> Matrix3<f64> {
    let a = drift_matrix(params);
    let d = diffusion_matrix(params);
    let k = params.k;
    let k1 = riccati(c, &a, &d, k);
    let k2 = riccati(&(c + k1 * (dt / 2.0)), &a, &d, k);
    let k3 = riccati(&(c + k2 * (dt / 2.0)), &a, &d, k);
    let k4 = riccati(&(c + k3 * dt), &a, &d, k);
    c + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Stochastic update of the means. The noise kick uses the current
/// covariance; the linear drift is then applied through its exact
/// propagator `exp(A dt)`.
pub fn mean_step(ms: &MomentState, params: &ModelParams, dt: f64, dw: f64) -> Vector3<f64> {
    let prop = (drift_matrix(params) * dt).exp();
    mean_step_with(ms, &prop, params.k, dw)
}

fn mean_step_with(ms: &MomentState, prop: &Matrix3<f64>, k: f64, dw: f64) -> Vector3<f64> {
    let kick = ms.cov.column(0) * ((8.0 * k).sqrt() * dw);
    prop * (ms.mean + kick)
}

/// Enforce positive semidefiniteness: small negative eigenvalues (above
/// `-1e-10 trace`) are clipped, larger ones are an error.
fn enforce_psd(c: &Matrix3<f64>, step: u64) -> Result<Matrix3<f64>> {
    let eig = SymmetricEigen::new(*c);
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(*c);
    }
    let floor = -1e-10 * c.trace().abs();
    if min < floor {
        return Err(Error::NotPositiveSemidefinite { step, min_eig: min });
    }
    log::warn!("clipping covariance eigenvalue {min:.3e} at step {step}");
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let r = eig.eigenvectors * Matrix3::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((r + r.transpose()) * 0.5)
}

/// Time series from [`run_cumulant`].
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSeries {
    pub times: Vec<f64>,
    pub mean: Vec<Vector3<f64>>,
    pub cov: Vec<Matrix3<f64>>,
    /// Record increments accumulated since the previous row.
    pub dy: Vec<f64>,
    pub params: ModelParams,
    pub dt: f64,
}

/// The six covariances in ground-state units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCovariances {
    pub czz: f64,
    pub cpp: f64,
    pub cjzjz: f64,
    pub czp: f64,
    pub czjz: f64,
    pub cpjz: f64,
}

impl CumulantSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `C_zz/z_g^2, C_pp/p_g^2, C_JzJz/hbar^2, C_zp/(z_g p_g),
    /// C_zJz/(hbar z_g), C_pJz/(hbar p_g)` per row.
    pub fn normalized(&self) -> Vec<NormalizedCovariances> {
        let (zg, pg, h) = (self.params.z_g(), self.params.p_g(), self.params.hbar);
        self.cov
            .iter()
            .map(|c| NormalizedCovariances {
                czz: c[(0, 0)] / (zg * zg),
                cpp: c[(1, 1)] / (pg * pg),
                cjzjz: c[(2, 2)] / (h * h),
                czp: c[(0, 1)] / (zg * pg),
                czjz: c[(0, 2)] / (h * zg),
                cpjz: c[(1, 2)] / (h * pg),
            })
            .collect()
    }

    pub fn max_czz(&self) -> f64 {
        self.cov.iter().map(|c| c[(0, 0)]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Integrate means (stochastic, driven by `noise`) and covariance
/// (deterministic, RK4) on the same step grid as the SSE runner.
pub fn run_cumulant(
    initial: &MomentState,
    params: &ModelParams,
    dt: f64,
    t_final: f64,
    noise: &mut NoiseStream,
    sample_stride: u64,
) -> Result<CumulantSeries> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt} and t_final = {t_final} must be positive")));
    }
    check_symmetric(&initial.cov)?;
    let stride = sample_stride.max(1);
    let n_steps = ((t_final / dt).round() as u64).max(1);
    let prop = (drift_matrix(params) * dt).exp();
    let k = params.k;
    let mut series =
        CumulantSeries { times: Vec::new(), mean: Vec::new(), cov: Vec::new(), dy: Vec::new(), params: *params, dt };
    let mut ms = *initial;
    series.times.push(0.0);
    series.mean.push(ms.mean);
    series.cov.push(ms.cov);
    series.dy.push(0.0);
    let mut dy_acc = 0.0;
    for step in 0..n_steps {
        let dw = noise.increment(step, dt);
        if k > 0.0 {
            dy_acc += ms.mean[0] * dt + dw / (8.0 * k).sqrt();
        } else {
            dy_acc += ms.mean[0] * dt;
        }
        let mean = mean_step_with(&ms, &prop, k, dw);
        let cov = covariance_step(&ms.cov, params, dt);
        check_symmetric(&cov)?;
        let cov = enforce_psd(&cov, step)?;
        if !(mean.iter().all(|x| x.is_finite()) && cov.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite { step });
        }
        ms = MomentState { mean, cov };
        let done = step + 1;
        if done % stride == 0 || done == n_steps {
            series.times.push(done as f64 * dt);
            series.mean.push(ms.mean);
            series.cov.push(ms.cov);
            series.dy.push(dy_acc);
            dy_acc = 0.0;
        }
    }
    Ok(series)
}
