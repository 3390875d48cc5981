//! Physical parameters of the spin-oscillator model and the truncated basis.
//!
//! The model is a harmonic oscillator of mass `m` and frequency `omega`
//! whose position couples linearly to the z component of a spin `J`:
//!
//! ```text
//! H = p^2/2m + m omega^2 z^2 / 2 + b z J_z
//! ```
//!
//! Spin sector `M` sees a harmonic well centred at `(M/J) delta_z`, with
//! `b = -m omega^2 delta_z / (J hbar)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Spin magnitude stored as `2J` so that half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub fn from_twice(twice: u32) -> Self {
        Spin { twice }
    }

    /// Fails unless `2j` is a nonnegative integer.
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !j.is_finite() || j < 0.0 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("spin J = {j} is not a nonnegative half-integer")));
        }
        Ok(Spin { twice: twice.round() as u32 })
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    /// Number of `M` states, `2J + 1`.
    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// `M` for a spin index, ascending from `-J`.
    pub fn m_value(self, spin_index: usize) -> f64 {
        spin_index as f64 - self.value()
    }

    pub fn m_values(self) -> impl Iterator<Item = f64> {
        (0..self.dim()).map(move |i| self.m_value(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub omega: f64,
    pub hbar: f64,
    pub spin: Spin,
    /// Force per unit angular momentum.
    pub b: f64,
    /// Measurement strength, 1/(length^2 time).
    pub k: f64,
    pub delta_z: f64,
    /// Action of the initial orbit in units of hbar.
    pub action: f64,
}

impl ModelParams {
    fn check_positive(m: f64, omega: f64, hbar: f64, k: f64, action: f64) -> Result<()> {
        for (name, v, allow_zero) in
            [("m", m, false), ("omega", omega, false), ("hbar", hbar, false), ("k", k, true), ("action", action, true)]
        {
            let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
            if !ok {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Build from the well separation; `b` follows from `b = -m omega^2 delta_z / (J hbar)`.
    pub fn from_delta_z(m: f64, omega: f64, hbar: f64, spin: Spin, k: f64, delta_z: f64, action: f64) -> Result<Self> {
        Self::check_positive(m, omega, hbar, k, action)?;
        if !delta_z.is_finite() {
            return Err(Error::InvalidParams(format!("delta_z = {delta_z}")));
        }
        let b = if spin.twice() == 0 {
            if delta_z != 0.0 {
                return Err(Error::InvalidParams("J = 0 admits no spin-dependent well separation".into()));
            }
            0.0
        } else {
            -m * omega * omega * delta_z / (spin.value() * hbar)
        };
        Ok(ModelParams { m, omega, hbar, spin, b, k, delta_z, action })
    }

    /// Build from the coupling; `delta_z = -b J hbar / (m omega^2)`.
    pub fn from_coupling(m: f64, omega: f64, hbar: f64, spin: Spin, k: f64, b: f64, action: f64) -> Result<Self> {
        Self::check_positive(m, omega, hbar, k, action)?;
        if !b.is_finite() {
            return Err(Error::InvalidParams(format!("b = {b}")));
        }
        let delta_z = -b * spin.value() * hbar / (m * omega * omega);
        Ok(ModelParams { m, omega, hbar, spin, b, k, delta_z, action })
    }

    /// Build with both `b` and `delta_z` given; they must agree.
    #[allow(clippy::too_many_arguments)]
    pub fn from_both(
        m: f64,
        omega: f64,
        hbar: f64,
        spin: Spin,
        k: f64,
        b: f64,
        delta_z: f64,
        action: f64,
    ) -> Result<Self> {
        let p = Self::from_coupling(m, omega, hbar, spin, k, b, action)?;
        let scale = delta_z.abs().max(p.z_g());
        if (p.delta_z - delta_z).abs() > 1e-9 * scale {
            return Err(Error::InvalidParams(format!(
                "b = {b} implies delta_z = {}, inconsistent with delta_z = {delta_z}",
                p.delta_z
            )));
        }
        Ok(p)
    }

    /// Natural units (`hbar = m = omega = 1`) from the dimensionless ratios
    /// used in configuration files.
    pub fn dimensionless(
        spin: Spin,
        delta_z_over_zg: f64,
        k_zg2_over_omega: f64,
        action_over_hbar: f64,
    ) -> Result<Self> {
        let z_g = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_delta_z(1.0, 1.0, 1.0, spin, k_zg2_over_omega / (z_g * z_g), delta_z_over_zg * z_g, action_over_hbar)
    }

    /// Ground-state rms width, `sqrt(hbar / 2 m omega)`.
    pub fn z_g(&self) -> f64 {
        (self.hbar / (2.0 * self.m * self.omega)).sqrt()
    }

    /// Ground-state rms momentum, `sqrt(hbar m omega / 2)`.
    pub fn p_g(&self) -> f64 {
        (self.hbar * self.m * self.omega / 2.0).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn j(&self) -> f64 {
        self.spin.value()
    }

    /// Turning point of the orbit with action `action * hbar`.
    pub fn orbit_amplitude(&self) -> f64 {
        (2.0 * self.action * self.hbar / (self.m * self.omega)).sqrt()
    }

    /// Centre of the harmonic well seen by spin sector `M`.
    pub fn well_center(&self, m_j: f64) -> f64 {
        -self.b * m_j * self.hbar / (self.m * self.omega * self.omega)
    }

    /// Default Fock cutoff: smallest `n >= 4 (I + (dz/z_g)^2 + 10 sqrt(I))`.
    pub fn default_n_max(&self) -> usize {
        let r = self.delta_z / self.z_g();
        let n = 4.0 * (self.action + r * r + 10.0 * self.action.sqrt());
        (n.ceil() as usize).max(8)
    }

    /// Smaller cutoff sized for the standard initial state (orbit turning
    /// point, spin along x) up to time `t_final`. Each spin sector `M` is
    /// weighted by its binomial population and treated as a coherent state
    /// on the orbit about its own well centre, widened by `delta_z` and 15%
    /// in occupation for the pull the record exerts on separated branches
    /// before collapse, plus measurement heating `hbar k t / m omega`. Returns the smallest
    /// multiple of ten for which the weighted Poisson tail beyond the top 5%
    /// of levels stays below `1e-10`. The runtime tail check still applies.
    pub fn weighted_n_max(&self, t_final: f64) -> usize {
        let z0 = self.orbit_amplitude();
        let twice = self.spin.twice() as usize;
        let ln_fact = ln_factorials(twice.max(8192));
        let heating = self.hbar * self.k * t_final.max(0.0) / (self.m * self.omega);
        let sectors: Vec<(f64, f64)> = (0..=twice)
            .map(|i| {
                let m_j = self.spin.m_value(i);
                let ln_w = ln_fact[twice] - ln_fact[i] - ln_fact[twice - i] - twice as f64 * std::f64::consts::LN_2;
                let c = self.well_center(m_j);
                let reach = (z0 - c).abs() + c.abs() + self.delta_z.abs();
                let lambda = 1.15 * (reach / (2.0 * self.z_g())).powi(2) + heating + 10.0;
                (ln_w, lambda)
            })
            .collect();
        let mut n_max = 10;
        while n_max < ln_fact.len() - 1 {
            let start = n_max + 1 - BasisSpec::new(n_max, self.spin).tail_levels();
            let tail: f64 = sectors.iter().map(|&(ln_w, lam)| poisson_tail(start, lam, &ln_fact, ln_w)).sum();
            if tail < 1e-10 {
                return n_max;
            }
            n_max += 10;
        }
        n_max
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// `exp(ln_w) * P(X >= start)` for `X ~ Poisson(lambda)`.
fn poisson_tail(start: usize, lambda: f64, ln_fact: &[f64], ln_w: f64) -> f64 {
    let mut sum = 0.0;
    for n in start..ln_fact.len() {
        let term = (ln_w - lambda + n as f64 * lambda.ln() - ln_fact[n]).exp();
        sum += term;
        if n as f64 > lambda && term < 1e-30 * sum.max(1e-300) {
            break;
        }
    }
    sum
}

/// Truncated product basis. Index layout is
/// `index = fock * spin_dim + spin_index`, spin index ascending in `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    pub n_max: usize,
    pub spin: Spin,
}

impl BasisSpec {
    pub fn new(n_max: usize, spin: Spin) -> Self {
        BasisSpec { n_max, spin }
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn spin_dim(&self) -> usize {
        self.spin.dim()
    }

    pub fn dim(&self) -> usize {
        self.fock_dim() * self.spin_dim()
    }

    pub fn index(&self, fock: usize, spin_index: usize) -> usize {
        fock * self.spin_dim() + spin_index
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.spin_dim(), index % self.spin_dim())
    }

    /// Number of Fock levels that make up the "top 5%" tail.
    pub fn tail_levels(&self) -> usize {
        ((0.05 * self.fock_dim() as f64).ceil() as usize).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_rejects_non_half_integers() {
        assert!(Spin::new(0.4).is_err());
        assert!(Spin::new(-0.5).is_err());
        assert_eq!(Spin::new(2.5).unwrap().dim(), 6);
        assert_eq!(Spin::new(0.5).unwrap().m_value(0), -0.5);
    }

    #[test]
    fn ground_scales_saturate_uncertainty() {
        let p = ModelParams::from_delta_z(2.0, 3.0, 0.7, Spin::new(1.0).unwrap(), 0.1, 1.5, 10.0).unwrap();
        assert!((p.z_g() * p.p_g() - p.hbar / 2.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_and_separation_are_linked() {
        let spin = Spin::new(0.5).unwrap();
        let p = ModelParams::from_delta_z(1.0, 1.0, 1.0, spin, 0.1, 4.0, 10.0).unwrap();
        assert!((p.b + 8.0).abs() < 1e-12);
        // sector M = +J sits at +delta_z
        assert!((p.well_center(0.5) - 4.0).abs() < 1e-12);
        let q = ModelParams::from_coupling(1.0, 1.0, 1.0, spin, 0.1, p.b, 10.0).unwrap();
        assert!((q.delta_z - 4.0).abs() < 1e-12);
        assert!(ModelParams::from_both(1.0, 1.0, 1.0, spin, 0.1, p.b, 4.0, 10.0).is_ok());
        assert!(ModelParams::from_both(1.0, 1.0, 1.0, spin, 0.1, p.b, 5.0, 10.0).is_err());
    }

    #[test]
    fn dimensionless_desk_values() {
        let p = ModelParams::dimensionless(Spin::new(0.5).unwrap(), 8.0, 0.05, 50.0).unwrap();
        assert!((p.k - 0.1).abs() < 1e-12);
        assert!((p.delta_z / p.z_g() - 8.0).abs() < 1e-12);
        assert!((p.orbit_amplitude() - 10.0).abs() < 1e-12);
        assert_eq!(p.default_n_max(), 739);
        let tight = p.weighted_n_max(8.0 * p.period());
        assert!(tight > 400 && tight < 739, "{tight}");
    }

    #[test]
    fn basis_index_round_trip() {
        let b = BasisSpec::new(7, Spin::new(1.5).unwrap());
        assert_eq!(b.dim(), 32);
        for i in 0..b.dim() {
            let (f, s) = b.split(i);
            assert_eq!(b.index(f, s), i);
        }
    }
}
