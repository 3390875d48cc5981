//! Entanglement and classicality diagnostics.
//!
//! Entropies use the natural log and are computed from the `(2J+1)`-square
//! spin marginal; eigenvalues below `1e-14` contribute nothing.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::QuantumState;
use crate::params::{BasisSpec, Spin};
use crate::sparse::C64;

const EIGEN_FLOOR: f64 = 1e-14;

/// Motional wave function `phi_M(n) = <n, M|psi>` for every `M`, ascending.
pub fn spinor_components(state: &QuantumState, basis: &BasisSpec) -> Vec<Vec<C64>> {
    let sd = basis.spin_dim();
    let psi = state.amplitudes();
    (0..sd).map(|s| (0..basis.fock_dim()).map(|n| psi[n * sd + s]).collect()).collect()
}

/// Gram matrix `G[M][M'] = <phi_M | phi_M'>` of the spinor components.
pub fn gram_matrix(components: &[Vec<C64>]) -> DMatrix<C64> {
    let d = components.len();
    DMatrix::from_fn(d, d, |i, j| crate::sparse::dot(&components[i], &components[j]))
}

/// Reduced spin density matrix, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSpinDensity {
    pub matrix: DMatrix<C64>,
}

impl ReducedSpinDensity {
    pub fn from_state(state: &QuantumState, basis: &BasisSpec) -> Self {
        let sd = basis.spin_dim();
        let psi = state.amplitudes();
        let norm = state.norm_sq();
        let mut rho = DMatrix::<C64>::zeros(sd, sd);
        for chunk in psi.chunks_exact(sd) {
            for i in 0..sd {
                let a = chunk[i];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..sd {
                    rho[(i, j)] += a * chunk[j].conj();
                }
            }
        }
        ReducedSpinDensity { matrix: rho / Complex64::new(norm, 0.0) }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(self.matrix.clone())
    }

    pub fn entropy(&self) -> f64 {
        entropy_from_spectrum(&self.eigenvalues())
    }
}

fn hermitian_eigenvalues(m: DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

/// `-sum p ln p` over a spectrum, dropping eigenvalues below `1e-14`.
pub fn entropy_from_spectrum(eigs: &[f64]) -> f64 {
    eigs.iter().filter(|&&p| p > EIGEN_FLOOR).map(|&p| -p * p.ln()).sum()
}

/// Von Neumann entropy of the spin marginal; no normalization check.
pub fn spin_entropy(state: &QuantumState, basis: &BasisSpec) -> f64 {
    ReducedSpinDensity::from_state(state, basis).entropy()
}

/// Entanglement entropy of a normalized pure state.
pub fn von_neumann_entropy(state: &QuantumState, basis: &BasisSpec) -> Result<f64> {
    if state.dim() != basis.dim() {
        return Err(Error::Dimension { expected: basis.dim(), found: state.dim() });
    }
    if (state.norm_sq() - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm_sq: state.norm_sq() });
    }
    Ok(spin_entropy(state, basis))
}

/// Entropy of the motional marginal, built explicitly. Cost grows with the
/// square of the Fock dimension; meant for cross-checks on small systems.
pub fn motional_entropy(state: &QuantumState, basis: &BasisSpec) -> f64 {
    let nf = basis.fock_dim();
    let sd = basis.spin_dim();
    let psi = state.amplitudes();
    let norm = state.norm_sq();
    let rho = DMatrix::<C64>::from_fn(nf, nf, |n, m| {
        (0..sd).map(|s| psi[n * sd + s] * psi[m * sd + s].conj()).sum::<C64>() / norm
    });
    entropy_from_spectrum(&hermitian_eigenvalues(rho))
}

/// Entropy from the Gram matrix of the spinor components; the Gram matrix is
/// the transpose of the spin marginal and so has the same spectrum.
pub fn gram_entropy(state: &QuantumState, basis: &BasisSpec) -> f64 {
    let g = gram_matrix(&spinor_components(state, basis)) / Complex64::new(state.norm_sq(), 0.0);
    entropy_from_spectrum(&hermitian_eigenvalues(g))
}

/// Population of each `M` sector.
pub fn jz_histogram(state: &QuantumState, basis: &BasisSpec) -> Vec<f64> {
    let sd = basis.spin_dim();
    let mut hist = vec![0.0; sd];
    for chunk in state.amplitudes().chunks_exact(sd) {
        for (h, a) in hist.iter_mut().zip(chunk) {
            *h += a.norm_sqr();
        }
    }
    let norm = state.norm_sq();
    hist.iter_mut().for_each(|h| *h /= norm);
    hist
}

/// Default entropy normalization `ln(2J + 1)`.
pub fn default_max_entropy(spin: Spin) -> f64 {
    (spin.dim() as f64).ln()
}

/// Peak entropy of a trajectory divided by `e0`.
pub fn normalized_max_entropy(entropy: &[f64], e0: f64) -> Result<f64> {
    let max = entropy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if entropy.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(e0 > 0.0) {
        return Err(Error::InvalidParams(format!("entropy normalization {e0} must be positive")));
    }
    Ok(max / e0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalityMetrics {
    /// Time-rms of `<z> - z_cl` over the classical orbit amplitude.
    pub rms_deviation_over_amplitude: f64,
    /// Largest `C_zz` over the squared orbit amplitude.
    pub max_czz_over_phasespace: f64,
}

/// Compare a quantum `<z>(t)` and `C_zz(t)` against a classical `z(t)` on the
/// same grid. The orbit amplitude is the largest `|z_cl|`.
pub fn classicality_metrics(
    times_q: &[f64],
    z_quantum: &[f64],
    czz: &[f64],
    times_cl: &[f64],
    z_classical: &[f64],
) -> Result<ClassicalityMetrics> {
    if times_q.len() != times_cl.len()
        || z_quantum.len() != times_q.len()
        || czz.len() != times_q.len()
        || z_classical.len() != times_cl.len()
    {
        return Err(Error::GridMismatch(format!(
            "{} quantum samples vs {} classical samples",
            times_q.len(),
            times_cl.len()
        )));
    }
    if times_q.is_empty() {
        return Err(Error::EmptySeries);
    }
    for (a, b) in times_q.iter().zip(times_cl) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("t = {a} vs t = {b}")));
        }
    }
    let amp = z_classical.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    if amp == 0.0 {
        return Err(Error::InvalidParams("classical orbit has zero amplitude".into()));
    }
    let msd = z_quantum.iter().zip(z_classical).map(|(q, c)| (q - c).powi(2)).sum::<f64>() / z_quantum.len() as f64;
    let max_czz = czz.iter().copied().fold(0.0, f64::max);
    Ok(ClassicalityMetrics {
        rms_deviation_over_amplitude: msd.sqrt() / amp,
        max_czz_over_phasespace: max_czz / (amp * amp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{motional_coherent_state, spin_coherent_state};
    use crate::params::ModelParams;
    use std::f64::consts::LN_2;

    fn spin_half_basis(n_max: usize) -> (ModelParams, BasisSpec) {
        let spin = Spin::new(0.5).unwrap();
        let params = ModelParams::dimensionless(spin, 8.0, 0.05, 10.0).unwrap();
        (params, BasisSpec::new(n_max, spin))
    }

    /// Spin down with the oscillator in its ground state, spin up with one
    /// quantum: orthogonal motional branches.
    fn bell(weight_up: f64, n_max: usize) -> (BasisSpec, QuantumState) {
        let (_, basis) = spin_half_basis(n_max);
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        amps[basis.index(0, 0)] = C64::new((1.0 - weight_up).sqrt(), 0.0);
        amps[basis.index(1, 1)] = C64::new(0.0, weight_up.sqrt());
        (basis, QuantumState::new(amps))
    }

    #[test]
    fn product_state_has_zero_entropy_and_rank_one_gram() {
        let (params, basis) = spin_half_basis(60);
        let m = motional_coherent_state(&params, &basis, 1.0, 0.5).unwrap();
        let s = QuantumState::product(&m, &spin_coherent_state(params.spin, [1.0, 0.0, 0.0]).unwrap());
        assert!(von_neumann_entropy(&s, &basis).unwrap() < 1e-10);
        let g = gram_matrix(&spinor_components(&s, &basis));
        let eigs = hermitian_eigenvalues(g);
        assert_eq!(eigs.iter().filter(|&&e| e > 1e-12).count(), 1);
    }

    #[test]
    fn orthogonal_branches_give_ln2() {
        let (basis, s) = bell(0.5, 80);
        let e = von_neumann_entropy(&s, &basis).unwrap();
        assert!((e - LN_2).abs() < 1e-10, "{e}");
        let g = gram_matrix(&spinor_components(&s, &basis));
        assert!((g[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!(g[(0, 1)].norm() < 1e-12);
        assert!((normalized_max_entropy(&[0.0, e, 0.3], LN_2).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn marginal_entropies_agree() {
        for w in [0.1, 0.3, 0.5] {
            let (basis, s) = bell(w, 60);
            let a = spin_entropy(&s, &basis);
            let b = motional_entropy(&s, &basis);
            let c = gram_entropy(&s, &basis);
            assert!((a - b).abs() < 1e-8);
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn histogram_of_product_state_is_spin_populations() {
        let spin = Spin::new(1.0).unwrap();
        let params = ModelParams::dimensionless(spin, 2.0, 0.05, 4.0).unwrap();
        let basis = BasisSpec::new(40, spin);
        let m = motional_coherent_state(&params, &basis, 1.0, 0.0).unwrap();
        let s = QuantumState::product(&m, &spin_coherent_state(spin, [1.0, 0.0, 0.0]).unwrap());
        let h = jz_histogram(&s, &basis);
        for (x, e) in h.iter().zip([0.25, 0.5, 0.25]) {
            assert!((x - e).abs() < 1e-14);
        }
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_edge_cases() {
        assert_eq!(normalized_max_entropy(&[0.0, 0.0], LN_2).unwrap(), 0.0);
        assert!(matches!(normalized_max_entropy(&[], LN_2), Err(Error::EmptySeries)));
        let (basis, s) = bell(0.5, 40);
        let unnormalized = QuantumState::new(s.amplitudes().iter().map(|a| a * 2.0).collect());
        assert!(matches!(von_neumann_entropy(&unnormalized, &basis), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn classicality_metrics_basics() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let z: Vec<f64> = t.iter().map(|t| 3.0 * t.cos()).collect();
        let m = classicality_metrics(&t, &z, &vec![0.5; 50], &t, &z).unwrap();
        assert_eq!(m.rms_deviation_over_amplitude, 0.0);
        assert!((m.max_czz_over_phasespace - 0.5 / 9.0).abs() < 1e-12);
        assert!(classicality_metrics(&t[..10], &z[..10], &[0.5; 10], &t, &z).is_err());
    }
}
