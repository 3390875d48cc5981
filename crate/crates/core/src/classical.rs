//! Classical limit: a point particle in the harmonic well with a spin
//! precessing about z.
//!
//! ```text
//! dz/dt = p/m,  dp/dt = -m omega^2 z - b S_z,  dS/dt = b z (z_hat x S)
//! ```
//!
//! `S_z` is conserved, so `(z, p)` move on an exactly solvable shifted
//! oscillator while the transverse spin rotates about z by `b * int z dt`.
//! The step below composes those two exact flows, which makes it symplectic
//! and keeps `|S|` and the energy fixed to rounding error.

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub z: f64,
    pub p: f64,
    /// Angular momentum in the same units as `hbar`.
    pub s: [f64; 3],
}

impl ClassicalState {
    /// Match the quantum initial condition: position and momentum means and a
    /// spin of length `J hbar` along `direction`.
    pub fn matched(params: &ModelParams, z: f64, p: f64, direction: [f64; 3]) -> Result<Self> {
        let n = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParams("spin direction must be a nonzero vector".into()));
        }
        let len = params.j() * params.hbar;
        Ok(ClassicalState { z, p, s: direction.map(|c| c * len / n) })
    }

    pub fn energy(&self, params: &ModelParams) -> f64 {
        self.p * self.p / (2.0 * params.m)
            + 0.5 * params.m * params.omega.powi(2) * self.z * self.z
            + params.b * self.z * self.s[2]
    }

    pub fn spin_length(&self) -> f64 {
        self.s.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Rotate `s` about z by `angle` (counter-clockwise seen from +z).
pub fn precess(s: [f64; 3], angle: f64) -> [f64; 3] {
    let (sin, cos) = angle.sin_cos();
    [cos * s[0] - sin * s[1], sin * s[0] + cos * s[1], s[2]]
}

/// Advance by `dt`.
pub fn classical_step(state: &ClassicalState, params: &ModelParams, dt: f64) -> Result<ClassicalState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt} must be positive")));
    }
    let (m, w, b) = (params.m, params.omega, params.b);
    let center = -b * state.s[2] / (m * w * w);
    let u = state.z - center;
    let (sin, cos) = (w * dt).sin_cos();
    let z = center + u * cos + state.p / (m * w) * sin;
    let p = state.p * cos - m * w * u * sin;
    let z_integral = center * dt + u * sin / w + state.p / (m * w * w) * (1.0 - cos);
    let s = precess(state.s, b * z_integral);
    let next = ClassicalState { z, p, s };
    if !(next.z.is_finite() && next.p.is_finite() && next.s.iter().all(|x| x.is_finite())) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(next)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassicalRecord {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub s: Vec<[f64; 3]>,
}

impl ClassicalRecord {
    fn push(&mut self, t: f64, st: &ClassicalState) {
        self.times.push(t);
        self.z.push(st.z);
        self.p.push(st.p);
        self.s.push(st.s);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrate on the same grid as [`crate::sse::run_trajectory`]: `t_final/dt`
/// steps, sampled every `sample_stride` steps and at the end.
pub fn run_classical(
    initial: &ClassicalState,
    params: &ModelParams,
    dt: f64,
    t_final: f64,
    sample_stride: u64,
) -> Result<ClassicalRecord> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidParams(format!("t_final = {t_final} must be positive")));
    }
    let stride = sample_stride.max(1);
    let n_steps = ((t_final / dt).round() as u64).max(1);
    let mut rec = ClassicalRecord::default();
    let mut st = *initial;
    rec.push(0.0, &st);
    for step in 0..n_steps {
        st = classical_step(&st, params, dt).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { step },
            other => other,
        })?;
        let done = step + 1;
        if done % stride == 0 || done == n_steps {
            rec.push(done as f64 * dt, &st);
        }
    }
    Ok(rec)
}
