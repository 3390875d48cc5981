//! Truncated Fock ⊗ spin Hilbert space, model operators and initial states.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{BasisSpec, ModelParams, Spin};
use crate::sparse::{dot, norm_sq, CsrMatrix, C64};

/// Tolerance on the population of the top Fock levels.
pub const TAIL_TOLERANCE: f64 = 1e-8;

const ZERO: C64 = Complex64 { re: 0.0, im: 0.0 };

/// Model operators on the full product space. Immutable once built.
#[derive(Debug, Clone)]
pub struct Operators {
    pub basis: BasisSpec,
    pub params: ModelParams,
    pub z: CsrMatrix,
    pub p: CsrMatrix,
    pub jz: CsrMatrix,
    pub jx: CsrMatrix,
    pub jy: CsrMatrix,
    pub h: CsrMatrix,
    /// `z * z` with both factors truncated.
    pub z2: CsrMatrix,
}

/// Lowering operator on the Fock factor.
pub fn annihilation(fock_dim: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(fock_dim, (1..fock_dim).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))).collect())
}

/// `(J_z, J_x, J_y)` on the `2J+1` spin factor, eigenvalues in units of `hbar`.
pub fn spin_matrices(spin: Spin, hbar: f64) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    let d = spin.dim();
    let j = spin.value();
    let jz = CsrMatrix::diagonal(&spin.m_values().map(|m| C64::new(m * hbar, 0.0)).collect::<Vec<_>>());
    // J+ |M> = hbar sqrt(J(J+1) - M(M+1)) |M+1>
    let mut plus = Vec::new();
    for i in 0..d.saturating_sub(1) {
        let m = spin.m_value(i);
        let c = hbar * (j * (j + 1.0) - m * (m + 1.0)).sqrt();
        plus.push((i + 1, i, C64::new(c, 0.0)));
    }
    let jp = CsrMatrix::from_triplets(d, plus);
    let jm = jp.adjoint();
    let jx = jp.add(&jm).scale(C64::new(0.5, 0.0));
    let jy = jp.sub(&jm).scale(C64::new(0.0, -0.5));
    (jz, jx, jy)
}

/// Build `z, p, J_z, J_x, J_y, H` for the model.
pub fn build_operators(params: &ModelParams, basis: &BasisSpec) -> Result<Operators> {
    if basis.spin != params.spin {
        return Err(Error::Dimension { expected: params.spin.dim(), found: basis.spin.dim() });
    }
    if basis.n_max == 0 {
        return Err(Error::InvalidParams("n_max must be at least 1".into()));
    }
    let nf = basis.fock_dim();
    let (zg, pg) = (params.z_g(), params.p_g());
    let a = annihilation(nf);
    let ad = a.adjoint();
    let z_f = a.add(&ad).scale(C64::new(zg, 0.0));
    let p_f = ad.sub(&a).scale(C64::new(0.0, pg));
    let id_f = CsrMatrix::identity(nf);
    let (jz_s, jx_s, jy_s) = spin_matrices(basis.spin, params.hbar);
    let id_s = CsrMatrix::identity(basis.spin_dim());

    let z = z_f.kron(&id_s);
    let p = p_f.kron(&id_s);
    let jz = id_f.kron(&jz_s);
    let jx = id_f.kron(&jx_s);
    let jy = id_f.kron(&jy_s);
    // hbar omega (n + 1/2) equals p^2/2m + m omega^2 z^2/2 away from the
    // truncation edge.
    let h_osc = CsrMatrix::diagonal(
        &(0..nf).map(|n| C64::new(params.hbar * params.omega * (n as f64 + 0.5), 0.0)).collect::<Vec<_>>(),
    );
    let h = h_osc.kron(&id_s).add(&z_f.kron(&jz_s).scale(C64::new(params.b, 0.0)));
    let z2 = z.mul(&z);
    Ok(Operators { basis: *basis, params: *params, z, p, jz, jx, jy, h, z2 })
}

/// Amplitude vector on the product basis with a cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<C64>,
    norm_sq: f64,
}

impl QuantumState {
    pub fn new(amps: Vec<C64>) -> Self {
        let norm_sq = norm_sq(&amps);
        QuantumState { amps, norm_sq }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Mutable access; the cached norm is refreshed by [`Self::refresh_norm`].
    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn refresh_norm(&mut self) -> f64 {
        self.norm_sq = norm_sq(&self.amps);
        self.norm_sq
    }

    pub fn normalize(&mut self) {
        let n = self.refresh_norm();
        if n > 0.0 {
            let inv = 1.0 / n.sqrt();
            self.amps.iter_mut().for_each(|a| *a *= inv);
            self.norm_sq = norm_sq(&self.amps);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn with_global_phase(&self, phase: f64) -> Self {
        let f = Complex64::from_polar(1.0, phase);
        QuantumState::new(self.amps.iter().map(|a| a * f).collect())
    }

    /// Relative population in the top 5% of Fock levels.
    pub fn tail_population(&self, basis: &BasisSpec) -> f64 {
        let sd = basis.spin_dim();
        let start = basis.fock_dim() - basis.tail_levels();
        let tail = norm_sq(&self.amps[start * sd..]);
        tail / self.norm_sq.max(f64::MIN_POSITIVE)
    }

    pub fn check_tail(&self, basis: &BasisSpec) -> Result<()> {
        let tail = self.tail_population(basis);
        if tail.is_nan() || tail >= TAIL_TOLERANCE {
            return Err(Error::CutoffTooSmall { tail, n_max: basis.n_max, suggested: suggest_n_max(self, basis) });
        }
        Ok(())
    }

    /// Product of a Fock-factor and a spin-factor state.
    pub fn product(motional: &[C64], spin: &[C64]) -> Self {
        let mut amps = Vec::with_capacity(motional.len() * spin.len());
        for m in motional {
            for s in spin {
                amps.push(m * s);
            }
        }
        QuantumState::new(amps)
    }
}

/// Rough cutoff estimate from the mean occupation of the state.
fn suggest_n_max(state: &QuantumState, basis: &BasisSpec) -> usize {
    let sd = basis.spin_dim();
    let total = state.norm_sq.max(f64::MIN_POSITIVE);
    let mean_n: f64 =
        (0..basis.fock_dim()).map(|n| n as f64 * norm_sq(&state.amps[n * sd..(n + 1) * sd])).sum::<f64>() / total;
    let reach = mean_n.sqrt() + 8.0;
    let estimate = (reach * reach / 0.95).ceil() as usize;
    estimate.max(basis.n_max * 3 / 2)
}

/// Fock-factor coherent state with `<z> = z0`, `<p> = p0`, normalized on the
/// truncated space.
pub fn motional_coherent_state(params: &ModelParams, basis: &BasisSpec, z0: f64, p0: f64) -> Result<Vec<C64>> {
    let alpha = C64::new(z0 / (2.0 * params.z_g()), p0 / (2.0 * params.p_g()));
    let nf = basis.fock_dim();
    let (r, theta) = alpha.to_polar();
    let mut out = Vec::with_capacity(nf);
    let mut ln_fact = 0.0;
    for n in 0..nf {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        let amp = if r == 0.0 {
            if n == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_fact).exp()
        };
        out.push(Complex64::from_polar(amp, n as f64 * theta));
    }
    let total = norm_sq(&out);
    let tail_start = nf - basis.tail_levels();
    let tail = norm_sq(&out[tail_start..]) / total;
    // mass lost beyond the truncation is at most the Poisson tail past n_max
    let lost = (1.0 - total).max(0.0);
    if tail >= TAIL_TOLERANCE || lost >= TAIL_TOLERANCE || total == 0.0 {
        let reach = r + 8.0;
        return Err(Error::CutoffTooSmall {
            tail: tail.max(lost),
            n_max: basis.n_max,
            suggested: (reach * reach / 0.95).ceil() as usize,
        });
    }
    let inv = 1.0 / total.sqrt();
    out.iter_mut().for_each(|a| *a *= inv);
    Ok(out)
}

/// Spin-coherent state `exp(-i phi J_z) exp(-i theta J_y) |J, J>` pointing
/// along `direction`, amplitudes ordered by ascending `M`.
pub fn spin_coherent_state(spin: Spin, direction: [f64; 3]) -> Result<Vec<C64>> {
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParams("spin direction must be a nonzero vector".into()));
    }
    let [x, y, z] = direction.map(|c| c / norm);
    let theta = z.clamp(-1.0, 1.0).acos();
    let phi = y.atan2(x);
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let twice = spin.twice() as i64;
    let ln_choose = ln_binomials(twice as u64);
    let amps = (0..spin.dim())
        .map(|i| {
            // i = J + M, so the exponents are J+M and J-M
            let up = i as i32;
            let down = (twice - i as i64) as i32;
            let mag = (0.5 * ln_choose[i]).exp() * c.powi(up) * s.powi(down);
            Complex64::from_polar(mag, -spin.m_value(i) * phi)
        })
        .collect();
    Ok(amps)
}

/// `ln C(n, k)` for `k = 0..=n`.
pub fn ln_binomials(n: u64) -> Vec<f64> {
    let mut ln_fact = vec![0.0; n as usize + 1];
    for i in 1..=n as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    (0..=n as usize).map(|k| ln_fact[n as usize] - ln_fact[k] - ln_fact[n as usize - k]).collect()
}

/// The standard initial condition: motional coherent state at the orbit
/// turning point with zero momentum, spin coherent along x.
pub fn standard_initial_state(params: &ModelParams, basis: &BasisSpec) -> Result<QuantumState> {
    let motional = motional_coherent_state(params, basis, params.orbit_amplitude(), 0.0)?;
    let spin = spin_coherent_state(params.spin, [1.0, 0.0, 0.0])?;
    Ok(QuantumState::product(&motional, &spin))
}

fn raw_expectation(state: &QuantumState, op: &CsrMatrix) -> Result<C64> {
    if state.dim() != op.dim() {
        return Err(Error::Dimension { expected: op.dim(), found: state.dim() });
    }
    let mut tmp = vec![ZERO; op.dim()];
    op.matvec_into(state.amplitudes(), &mut tmp);
    Ok(dot(state.amplitudes(), &tmp) / state.norm_sq())
}

/// `<psi|A|psi> / <psi|psi>` for Hermitian `A`.
pub fn expectation(state: &QuantumState, op: &CsrMatrix) -> Result<f64> {
    let v = raw_expectation(state, op)?;
    if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(Error::NotHermitian { residual: v.im });
    }
    Ok(v.re)
}

/// Symmetrized covariance `(<ab> + <ba>)/2 - <a><b>`.
pub fn covariance(state: &QuantumState, a: &CsrMatrix, b: &CsrMatrix) -> Result<f64> {
    if state.dim() != a.dim() || a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: state.dim() });
    }
    let ab = raw_expectation(state, &a.mul(b))?;
    let ba = raw_expectation(state, &b.mul(a))?;
    let sym = (ab + ba) * 0.5;
    if sym.im.abs() > 1e-10 * sym.re.abs().max(1.0) {
        return Err(Error::NotHermitian { residual: sym.im });
    }
    Ok(sym.re - expectation(state, a)? * expectation(state, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(j: f64, n_max: usize, dz: f64) -> (ModelParams, BasisSpec, Operators) {
        let spin = Spin::new(j).unwrap();
        let params = ModelParams::dimensionless(spin, dz, 0.05, 4.0).unwrap();
        let basis = BasisSpec::new(n_max, spin);
        let ops = build_operators(&params, &basis).unwrap();
        (params, basis, ops)
    }

    #[test]
    fn z_on_two_level_fock_factor() {
        let spin = Spin::new(0.0).unwrap();
        let params = ModelParams::from_coupling(1.0, 1.0, 1.0, spin, 0.1, 0.0, 1.0).unwrap();
        let ops = build_operators(&params, &BasisSpec::new(1, spin)).unwrap();
        let zg = params.z_g();
        assert_abs_diff_eq!(ops.z.get(0, 1).re, zg);
        assert_abs_diff_eq!(ops.z.get(1, 0).re, zg);
        assert_eq!(ops.z.get(0, 0), ZERO);
    }

    #[test]
    fn operators_are_hermitian() {
        let (_, _, ops) = small(1.5, 12, 3.0);
        for op in [&ops.z, &ops.p, &ops.jz, &ops.jx, &ops.jy, &ops.h] {
            assert!(op.hermiticity_error() <= 1e-12);
        }
    }

    #[test]
    fn hamiltonian_matches_product_form_below_the_cutoff() {
        let (params, basis, ops) = small(1.0, 10, 2.0);
        let p2 = ops.p.mul(&ops.p).scale(C64::new(0.5 / params.m, 0.0));
        let z2 = ops.z2.scale(C64::new(0.5 * params.m * params.omega.powi(2), 0.0));
        let coupling = ops.z.mul(&ops.jz).scale(C64::new(params.b, 0.0));
        let h = p2.add(&z2).add(&coupling);
        let edge = basis.n_max * basis.spin_dim();
        for (r, c, v) in h.triplets() {
            if r < edge && c < edge {
                assert!((v - ops.h.get(r, c)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_commutator_except_top_level() {
        let (params, basis, ops) = small(0.5, 9, 1.0);
        let comm = ops.z.mul(&ops.p).sub(&ops.p.mul(&ops.z));
        let sd = basis.spin_dim();
        for i in 0..basis.dim() {
            let (fock, _) = basis.split(i);
            let v = comm.get(i, i);
            if fock < basis.n_max {
                assert!((v - C64::new(0.0, params.hbar)).norm() < 1e-12);
            } else {
                // known truncation artifact: -i hbar n_max
                assert!((v - C64::new(0.0, -params.hbar * basis.n_max as f64)).norm() < 1e-9);
            }
            for j in 0..basis.dim() {
                if j != i {
                    assert!(comm.get(i, j).norm() < 1e-12, "{i} {j} {sd}");
                }
            }
        }
    }

    #[test]
    fn ground_state_width() {
        let (params, basis, ops) = small(0.0, 8, 0.0);
        let ground = motional_coherent_state(&params, &basis, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(ground[0].re, 1.0);
        let s = QuantumState::product(&ground, &[C64::new(1.0, 0.0)]);
        assert_abs_diff_eq!(expectation(&s, &ops.z2).unwrap(), params.z_g().powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(covariance(&s, &ops.z, &ops.z).unwrap(), params.z_g().powi(2), epsilon = 1e-14);
    }

    #[test]
    fn spin_up_sector_well_center() {
        let spin = Spin::new(0.5).unwrap();
        let params = ModelParams::dimensionless(spin, 22.0, 0.05, 1000.0).unwrap();
        assert_abs_diff_eq!(params.well_center(0.5), params.delta_z, epsilon = 1e-12);
        assert_abs_diff_eq!(params.well_center(-0.5), -params.delta_z, epsilon = 1e-12);
    }

    #[test]
    fn coherent_state_moments_and_energy() {
        let spin = Spin::new(0.0).unwrap();
        let params = ModelParams::from_coupling(1.0, 1.0, 1.0, spin, 0.0, 0.0, 50.0).unwrap();
        let basis = BasisSpec::new(200, spin);
        let ops = build_operators(&params, &basis).unwrap();
        let z0 = params.orbit_amplitude();
        let s =
            QuantumState::product(&motional_coherent_state(&params, &basis, z0, 0.0).unwrap(), &[C64::new(1.0, 0.0)]);
        let e = expectation(&s, &ops.h).unwrap() - 0.5 * params.hbar * params.omega;
        assert!((e / (params.action * params.hbar * params.omega) - 1.0).abs() < 1e-6);

        let s =
            QuantumState::product(&motional_coherent_state(&params, &basis, 1.7, -2.3).unwrap(), &[C64::new(1.0, 0.0)]);
        assert_abs_diff_eq!(expectation(&s, &ops.z).unwrap(), 1.7, epsilon = 1e-10);
        assert_abs_diff_eq!(expectation(&s, &ops.p).unwrap(), -2.3, epsilon = 1e-10);
        assert_abs_diff_eq!(covariance(&s, &ops.z, &ops.z).unwrap(), params.z_g().powi(2), epsilon = 1e-10);
        assert_abs_diff_eq!(covariance(&s, &ops.p, &ops.p).unwrap(), params.p_g().powi(2), epsilon = 1e-10);
        assert_abs_diff_eq!(covariance(&s, &ops.z, &ops.p).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn coherent_state_rejects_small_cutoff() {
        let spin = Spin::new(0.0).unwrap();
        let params = ModelParams::from_coupling(1.0, 1.0, 1.0, spin, 0.0, 0.0, 50.0).unwrap();
        let err = motional_coherent_state(&params, &BasisSpec::new(40, spin), 10.0, 0.0).unwrap_err();
        match err {
            Error::CutoffTooSmall { suggested, .. } => assert!(suggested > 40),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn spin_half_x_state_is_equal_superposition() {
        let s = spin_coherent_state(Spin::new(0.5).unwrap(), [1.0, 0.0, 0.0]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s[0].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1].re, r, epsilon = 1e-15);
        assert!(spin_coherent_state(Spin::new(0.5).unwrap(), [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn spin_coherent_points_along_direction() {
        let spin = Spin::new(2.0).unwrap();
        let (jz, jx, jy) = spin_matrices(spin, 1.0);
        let dir = [0.3, -0.5, 0.81];
        let n = (0.3f64 * 0.3 + 0.25 + 0.81 * 0.81).sqrt();
        let s = QuantumState::new(spin_coherent_state(spin, dir).unwrap());
        for (op, d) in [(&jx, dir[0]), (&jy, dir[1]), (&jz, dir[2])] {
            assert_abs_diff_eq!(expectation(&s, op).unwrap(), 2.0 * d / n, epsilon = 1e-12);
        }
    }

    #[test]
    fn x_polarized_jz_variance() {
        for twice in 1..12u32 {
            let spin = Spin::from_twice(twice);
            let (jz, _, _) = spin_matrices(spin, 1.0);
            let s = QuantumState::new(spin_coherent_state(spin, [1.0, 0.0, 0.0]).unwrap());
            assert_abs_diff_eq!(covariance(&s, &jz, &jz).unwrap(), spin.value() / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn expectation_rejects_dimension_mismatch() {
        let (_, _, ops) = small(0.5, 4, 1.0);
        let s = QuantumState::new(vec![C64::new(1.0, 0.0); 3]);
        assert!(matches!(expectation(&s, &ops.z), Err(Error::Dimension { .. })));
    }
}
