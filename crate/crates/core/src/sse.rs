//! Conditioned evolution under continuous position measurement.
//!
//! The unnormalized state obeys
//!
//! ```text
//! d|psi> = { (H/(i hbar) - k z^2) dt + (4k<z> dt + sqrt(2k) dW) z } |psi>
//! ```
//!
//! with measurement record `dy = <z> dt + dW / sqrt(8k)`. Using
//! `4k<z>dt + sqrt(2k)dW = 4k dy` the measurement part of a step is the
//! Gaussian Kraus operator `exp(4k dy z - 2k dt z^2)`, which agrees with the
//! Itô expansion above through `O(dt)`.
//!
//! A step applies the measurement using the state at the start of the step
//! and then the unitary `exp(-i H dt / hbar)`. Alternating measurement and
//! unitary factors this way is a symmetric splitting with its half steps
//! absorbed into the sampling grid, and `dy` depends only on the sampled
//! `<z>`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::hilbert::{Operators, QuantumState};
use crate::krylov::Lanczos;
use crate::noise::NoiseStream;
use crate::params::ModelParams;
use crate::sparse::{dot, norm_sq, CsrMatrix, DiaMatrix, C64};

/// The Hamiltonian and `z`, `z^2` occupy at most five diagonals.
const MAX_DIAGONALS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Gaussian Kraus operator for the measurement.
    Kraus,
    /// Explicit Milstein update of the measurement terms.
    Milstein,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kraus" => Ok(Scheme::Kraus),
            "milstein" => Ok(Scheme::Milstein),
            other => Err(format!("unknown scheme '{other}' (expected kraus or milstein)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Kraus => "kraus",
            Scheme::Milstein => "milstein",
        })
    }
}

/// Integration settings. `dt` is in the time units of [`ModelParams`]; the
/// step is valid while `k dt <z^2>` stays well below one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SseConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub renormalize_every: u64,
    pub tail_check_every: u64,
    pub krylov_tol: f64,
    pub krylov_max_dim: usize,
}

impl Default for SseConfig {
    fn default() -> Self {
        SseConfig {
            dt: 1e-3 * TAU,
            scheme: Scheme::Kraus,
            renormalize_every: 1,
            tail_check_every: 25,
            krylov_tol: 1e-12,
            krylov_max_dim: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub dw: f64,
    pub dy: f64,
    /// `<z>` of the state the measurement acted on.
    pub z_measured: f64,
    /// Departure of the log norm change from its second-cumulant prediction
    /// `8k<z>dy - 4k<z^2>dt + 32k^2 dy^2 Var z`. Small for a healthy step;
    /// grows with dt and with skewed position distributions.
    pub norm_residual: f64,
}

/// Reusable single-trajectory stepper; owns its scratch buffers.
pub struct SseIntegrator<'a> {
    ops: &'a Operators,
    cfg: SseConfig,
    measure_krylov: Lanczos,
    unitary_krylov: Lanczos,
    zpsi: Vec<C64>,
    z2psi: Vec<C64>,
    h_dia: DiaMatrix,
    z_dia: DiaMatrix,
    z2_dia: DiaMatrix,
    /// `c1 z + c2 z^2`, refilled every step.
    generator: DiaMatrix,
}

impl<'a> SseIntegrator<'a> {
    pub fn new(ops: &'a Operators, cfg: SseConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
            return Err(Error::InvalidParams(format!("dt = {} must be positive", cfg.dt)));
        }
        if cfg.renormalize_every == 0 || cfg.tail_check_every == 0 {
            return Err(Error::InvalidParams("step intervals must be at least 1".into()));
        }
        let dim = ops.basis.dim();
        let banded = || Error::InvalidParams("H, z and z^2 must be real and banded".into());
        let h_dia = DiaMatrix::from_csr(&ops.h, MAX_DIAGONALS).ok_or_else(banded)?;
        let (z_dia, z2_dia) = DiaMatrix::pair(&ops.z, &ops.z2, MAX_DIAGONALS).ok_or_else(banded)?;
        let generator = z_dia.clone();
        Ok(SseIntegrator {
            ops,
            cfg,
            measure_krylov: Lanczos::new(cfg.krylov_tol, cfg.krylov_max_dim),
            unitary_krylov: Lanczos::new(cfg.krylov_tol, cfg.krylov_max_dim),
            zpsi: vec![C64::new(0.0, 0.0); dim],
            z2psi: vec![C64::new(0.0, 0.0); dim],
            h_dia,
            z_dia,
            z2_dia,
            generator,
        })
    }

    pub fn config(&self) -> &SseConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams {
        &self.ops.params
    }

    /// Operator applications spent in the measurement and unitary
    /// exponentials so far.
    pub fn krylov_matvecs(&self) -> (u64, u64) {
        (self.measure_krylov.matvecs(), self.unitary_krylov.matvecs())
    }

    /// One step driven by the next increment of `noise`.
    pub fn step(&mut self, state: &mut QuantumState, noise: &mut NoiseStream, step_index: u64) -> Result<StepOutcome> {
        let dw = noise.increment(step_index, self.cfg.dt);
        self.step_with_increment(state, dw, step_index)
    }

    /// One step with an explicit Wiener increment.
    pub fn step_with_increment(&mut self, state: &mut QuantumState, dw: f64, step_index: u64) -> Result<StepOutcome> {
        let dim = self.ops.basis.dim();
        if state.dim() != dim {
            return Err(Error::Dimension { expected: dim, found: state.dim() });
        }
        let p = self.ops.params;
        let dt = self.cfg.dt;
        let k = p.k;
        let n0 = state.refresh_norm();
        if !n0.is_finite() {
            return Err(Error::NonFinite { step: step_index });
        }
        if n0 < 1e-250 {
            return Err(Error::NormUnderflow { step: step_index, norm_sq: n0 });
        }

        self.ops.z.matvec_into(state.amplitudes(), &mut self.zpsi);
        let z_mean = dot(state.amplitudes(), &self.zpsi).re / n0;
        let z_var = (norm_sq(&self.zpsi) / n0 - z_mean * z_mean).max(0.0);
        let dy = if k > 0.0 { z_mean * dt + dw / (8.0 * k).sqrt() } else { z_mean * dt };

        if k > 0.0 {
            match self.cfg.scheme {
                Scheme::Kraus => {
                    let (c1, c2) = (4.0 * k * dy, -2.0 * k * dt);
                    self.generator.set_combination(c1, &self.z_dia, c2, &self.z2_dia);
                    let gen = &self.generator;
                    let mut apply = |x: &[C64], out: &mut [C64]| gen.matvec_into(x, out);
                    self.measure_krylov.expm_apply(&mut apply, state.amplitudes_mut(), Complex64::new(1.0, 0.0));
                }
                Scheme::Milstein => {
                    self.ops.z.matvec_into(&self.zpsi, &mut self.z2psi);
                    let a = 4.0 * k * z_mean * dt + (2.0 * k).sqrt() * dw;
                    let b = k * (dw * dw - 2.0 * dt);
                    for ((x, zx), z2x) in state.amplitudes_mut().iter_mut().zip(&self.zpsi).zip(&self.z2psi) {
                        *x += zx * a + z2x * b;
                    }
                }
            }
        }

        let h = &self.h_dia;
        self.unitary_krylov.expm_apply(
            &mut |x: &[C64], out: &mut [C64]| h.matvec_into(x, out),
            state.amplitudes_mut(),
            Complex64::new(0.0, -dt / p.hbar),
        );

        let n1 = state.refresh_norm();
        if !n1.is_finite() {
            return Err(Error::NonFinite { step: step_index });
        }
        if n1 < 1e-250 {
            return Err(Error::NormUnderflow { step: step_index, norm_sq: n1 });
        }
        let predicted =
            8.0 * k * z_mean * dy - 4.0 * k * (z_mean * z_mean + z_var) * dt + 32.0 * k * k * dy * dy * z_var;
        let norm_residual = ((n1 / n0).ln() - predicted).abs();
        if (step_index + 1).is_multiple_of(self.cfg.renormalize_every) {
            state.normalize();
        }
        if (step_index + 1).is_multiple_of(self.cfg.tail_check_every) {
            state.check_tail(&self.ops.basis)?;
        }
        Ok(StepOutcome { dw, dy, z_measured: z_mean, norm_residual })
    }
}

/// Single step with a fresh integrator; see [`SseIntegrator`] for repeated use.
pub fn sse_step(
    state: &mut QuantumState,
    ops: &Operators,
    cfg: &SseConfig,
    noise: &mut NoiseStream,
    step_index: u64,
) -> Result<StepOutcome> {
    SseIntegrator::new(ops, *cfg)?.step(state, noise, step_index)
}

/// Moments of a state relevant to the record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Observation {
    pub z: f64,
    pub p: f64,
    pub jz: f64,
    pub jx: f64,
    pub jy: f64,
    pub czz: f64,
    pub czp: f64,
    pub cpp: f64,
    pub czjz: f64,
    pub cpjz: f64,
    pub cjzjz: f64,
    /// Third central moments `<(a - <a>)^3>` for `z`, `p`, `J_z`.
    pub k3_z: f64,
    pub k3_p: f64,
    pub k3_jz: f64,
}

impl Observation {
    /// Largest third cumulant in units of the matching `C_aa^{3/2}`. The
    /// variances are floored at `z_g^2`, `p_g^2` and `(hbar/2)^2`: below the
    /// ground-state width, or below the `J_z` level spacing, a Gaussian
    /// description has no meaning and the ratio would only amplify rounding.
    pub fn max_standardized_third(&self, params: &ModelParams) -> f64 {
        let floors = [params.z_g().powi(2), params.p_g().powi(2), (params.hbar / 2.0).powi(2)];
        [(self.k3_z, self.czz), (self.k3_p, self.cpp), (self.k3_jz, self.cjzjz)]
            .iter()
            .zip(floors)
            .map(|(&(k3, c), f)| (k3 / c.max(f).powf(1.5)).abs())
            .fold(0.0, f64::max)
    }
}

/// Means, symmetrized covariances and third cumulants of `(z, p, J_z)`.
pub fn observe(state: &QuantumState, ops: &Operators) -> Observation {
    let psi = state.amplitudes();
    let n = state.norm_sq();
    let dim = psi.len();
    let apply = |op: &CsrMatrix| {
        let mut out = vec![C64::new(0.0, 0.0); dim];
        op.matvec_into(psi, &mut out);
        out
    };
    let (zs, ps, jzs, jxs, jys) = (apply(&ops.z), apply(&ops.p), apply(&ops.jz), apply(&ops.jx), apply(&ops.jy));
    let mean = |v: &[C64]| dot(psi, v).re / n;
    let (z, p, jz, jx, jy) = (mean(&zs), mean(&ps), mean(&jzs), mean(&jxs), mean(&jys));
    // centred vectors u = (A - <A>) psi keep small variances free of cancellation
    let centred = |apsi: &[C64], m: f64| -> Vec<C64> { apsi.iter().zip(psi).map(|(a, x)| a - x * m).collect() };
    let (uz, up, ujz) = (centred(&zs, z), centred(&ps, p), centred(&jzs, jz));
    let cov = |a: &[C64], b: &[C64]| dot(a, b).re / n;
    // third central moment: <u|(A - <A>)|u>
    let third = |op: &CsrMatrix, u: &[C64], m: f64| {
        let mut au = vec![C64::new(0.0, 0.0); dim];
        op.matvec_into(u, &mut au);
        dot(u, &au).re / n - m * crate::sparse::norm_sq(u) / n
    };
    Observation {
        z,
        p,
        jz,
        jx,
        jy,
        czz: cov(&uz, &uz),
        czp: cov(&uz, &up),
        cpp: cov(&up, &up),
        czjz: cov(&uz, &ujz),
        cpjz: cov(&up, &ujz),
        cjzjz: cov(&ujz, &ujz),
        k3_z: third(&ops.z, &uz, z),
        k3_p: third(&ops.p, &up, p),
        k3_jz: third(&ops.jz, &ujz, jz),
    }
}

/// Where and why a trajectory stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: u64,
    pub time: f64,
    pub message: String,
    pub numerical: bool,
}

/// Sampled time series of one measured trajectory. Row 0 is the initial
/// state; every later row holds the state after a sampled step together with
/// the record accumulated since the previous row, so that
/// `dy = z_integral + dw / sqrt(8k)` row by row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub dy: Vec<f64>,
    pub dw: Vec<f64>,
    /// Sum of `<z> dt` over the steps since the previous row.
    pub z_integral: Vec<f64>,
    pub obs: Vec<Observation>,
    pub entropy: Vec<f64>,
    pub norm_residual: Vec<f64>,
    /// `J_z` populations at each row, ascending in `M`.
    pub jz_histogram: Vec<Vec<f64>>,
    pub seed: u64,
    pub trajectory_id: u64,
    pub dt: f64,
    pub sample_stride: u64,
    pub failure: Option<Failure>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn column(&self, f: impl Fn(&Observation) -> f64) -> Vec<f64> {
        self.obs.iter().map(f).collect()
    }

    pub fn z_mean(&self) -> Vec<f64> {
        self.column(|o| o.z)
    }

    fn push_sample(&mut self, t: f64, state: &QuantumState, ops: &Operators, acc: &mut Accum) {
        self.times.push(t);
        self.dy.push(acc.dy);
        self.dw.push(acc.dw);
        self.z_integral.push(acc.z_int);
        self.norm_residual.push(acc.norm_residual);
        self.obs.push(observe(state, ops));
        self.entropy.push(diagnostics::spin_entropy(state, &ops.basis));
        self.jz_histogram.push(diagnostics::jz_histogram(state, &ops.basis));
        *acc = Accum::default();
    }
}

#[derive(Default)]
struct Accum {
    dy: f64,
    dw: f64,
    z_int: f64,
    norm_residual: f64,
}

/// Integrate to `t_final`, sampling every `sample_stride` steps and at the
/// final step. Numerical failures stop the run and are recorded in
/// [`TrajectoryRecord::failure`] alongside the rows produced so far.
pub fn run_trajectory(
    initial: &QuantumState,
    ops: &Operators,
    cfg: &SseConfig,
    noise: &mut NoiseStream,
    t_final: f64,
    sample_stride: u64,
) -> Result<TrajectoryRecord> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidParams(format!("t_final = {t_final} must be positive")));
    }
    let stride = sample_stride.max(1);
    let mut integ = SseIntegrator::new(ops, *cfg)?;
    let n_steps = ((t_final / cfg.dt).round() as u64).max(1);
    let mut state = initial.clone();
    if state.dim() != ops.basis.dim() {
        return Err(Error::Dimension { expected: ops.basis.dim(), found: state.dim() });
    }
    state.normalize();
    let mut rec = TrajectoryRecord {
        seed: noise.seed(),
        trajectory_id: noise.trajectory_id(),
        dt: cfg.dt,
        sample_stride: stride,
        ..Default::default()
    };
    let mut acc = Accum::default();
    rec.push_sample(0.0, &state, ops, &mut acc);
    for step in 0..n_steps {
        match integ.step(&mut state, noise, step) {
            Ok(out) => {
                acc.dy += out.dy;
                acc.dw += out.dw;
                acc.z_int += out.z_measured * cfg.dt;
                acc.norm_residual = acc.norm_residual.max(out.norm_residual);
            }
            Err(e) => {
                rec.failure = Some(Failure {
                    step,
                    time: step as f64 * cfg.dt,
                    numerical: e.is_numerical(),
                    message: e.to_string(),
                });
                return Ok(rec);
            }
        }
        let done = step + 1;
        if done % stride == 0 || done == n_steps {
            if cfg.renormalize_every > 1 {
                state.refresh_norm();
            }
            rec.push_sample(done as f64 * cfg.dt, &state, ops, &mut acc);
        }
    }
    Ok(rec)
}
