//! Lanczos approximation of `exp(s A) v` for Hermitian `A` and complex `s`.
//!
//! The Hermitian operator is only touched through matrix-vector products, so
//! the same routine drives both the unitary `exp(-i H dt)` and the real
//! measurement operator `exp(A)`. Convergence is judged with the usual
//! a-posteriori estimate `beta_m |e_m^T exp(s T_m) e_1|`; when the requested
//! tolerance is not met within `max_dim` vectors the step is halved.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::sparse::{norm_sq, C64};

#[derive(Debug, Clone)]
pub struct Lanczos {
    pub tol: f64,
    pub max_dim: usize,
    basis: Vec<Vec<C64>>,
    work: Vec<C64>,
    hint: usize,
    matvecs: u64,
}

impl Lanczos {
    pub fn new(tol: f64, max_dim: usize) -> Self {
        Lanczos { tol, max_dim: max_dim.max(4), basis: Vec::new(), work: Vec::new(), hint: 8, matvecs: 0 }
    }

    /// Total operator applications so far.
    pub fn matvecs(&self) -> u64 {
        self.matvecs
    }

    /// Overwrite `v` with `exp(s A) v`. Returns the number of matvecs used.
    pub fn expm_apply<F>(&mut self, apply: &mut F, v: &mut [C64], s: C64) -> usize
    where
        F: FnMut(&[C64], &mut [C64]),
    {
        match self.try_expm(apply, v, s) {
            Some(n) => n,
            None => {
                let half = s * 0.5;
                self.expm_apply(apply, v, half) + self.expm_apply(apply, v, half)
            }
        }
    }

    fn ensure_buffers(&mut self, dim: usize, count: usize) {
        if self.work.len() != dim {
            self.work = vec![C64::new(0.0, 0.0); dim];
            self.basis.clear();
        }
        while self.basis.len() < count {
            self.basis.push(vec![C64::new(0.0, 0.0); dim]);
        }
    }

    fn try_expm<F>(&mut self, apply: &mut F, v: &mut [C64], s: C64) -> Option<usize>
    where
        F: FnMut(&[C64], &mut [C64]),
    {
        let dim = v.len();
        let beta0 = norm_sq(v).sqrt();
        if beta0 == 0.0 {
            return Some(0);
        }
        self.ensure_buffers(dim, self.max_dim + 1);
        for (q, x) in self.basis[0].iter_mut().zip(v.iter()) {
            *q = x / beta0;
        }

        let mut alpha = Vec::with_capacity(self.max_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(self.max_dim);
        let mut next_check = self.hint.clamp(4, self.max_dim);
        let mut coeffs: Option<Vec<C64>> = None;
        let mut used = 0;

        for j in 0..self.max_dim {
            {
                let (head, tail) = self.basis.split_at_mut(j + 1);
                let q = &head[j];
                apply(q, &mut self.work);
                self.matvecs += 1;
                let a = q.iter().zip(&self.work).map(|(x, w)| x.re * w.re + x.im * w.im).sum::<f64>();
                alpha.push(a);
                // w -= a q + b q_prev, accumulating |w|^2 on the way
                let mut nsq = 0.0;
                if j > 0 {
                    let bp = beta[j - 1];
                    for ((w, x), y) in self.work.iter_mut().zip(q).zip(&head[j - 1]) {
                        *w -= x * a + y * bp;
                        nsq += w.norm_sqr();
                    }
                } else {
                    for (w, x) in self.work.iter_mut().zip(q) {
                        *w -= x * a;
                        nsq += w.norm_sqr();
                    }
                }
                let b = nsq.sqrt();
                beta.push(b);
                used = j + 1;
                let m = j + 1;
                let breakdown = b <= 1e-14 * (alpha.iter().fold(0.0f64, |acc, x| acc.max(x.abs())) + 1.0);
                if breakdown || m >= next_check || m == self.max_dim {
                    let y = tridiagonal_expm_e1(&alpha, &beta[..m - 1], s);
                    let err = b * y[m - 1].norm();
                    if breakdown || err <= self.tol {
                        coeffs = Some(y);
                        break;
                    }
                    next_check = m + 3;
                }
                if !breakdown {
                    let inv = 1.0 / b;
                    for (qn, w) in tail[0].iter_mut().zip(self.work.iter()) {
                        *qn = w * inv;
                    }
                }
            }
        }

        let y = coeffs?;
        let m = y.len();
        // adapt the first convergence check for the next call
        self.hint = if m <= self.hint { self.hint.saturating_sub(1).max(4) } else { m };
        v.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for (q, c) in self.basis[..m].iter().zip(&y) {
            let c = c * beta0;
            for (x, qi) in v.iter_mut().zip(q) {
                *x += qi * c;
            }
        }
        Some(used)
    }
}

/// `exp(s T) e_1` for the real symmetric tridiagonal `T` with diagonal
/// `alpha` and off-diagonal `beta`.
pub fn tridiagonal_expm_e1(alpha: &[f64], beta: &[f64], s: C64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    // shift by the largest real part of s*lambda to keep the exponentials bounded
    let shift = eig.eigenvalues.iter().map(|&l| (s * l).re).fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m {
        let w = (s * eig.eigenvalues[k] - shift).exp() * eig.eigenvectors[(0, k)];
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * eig.eigenvectors[(i, k)];
        }
    }
    let scale = shift.exp();
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn dense_expm(m: &CsrMatrix, s: C64) -> DMatrix<C64> {
        let n = m.dim();
        let mut d = DMatrix::<C64>::zeros(n, n);
        for (r, col, v) in m.triplets() {
            d[(r, col)] = v * s;
        }
        d.exp()
    }

    fn chain(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(i as f64 * 0.7)));
            if i + 1 < n {
                let h = C64::new(0.3, 0.2 * i as f64);
                t.push((i, i + 1, h));
                t.push((i + 1, i, h.conj()));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn matches_dense_exponential_for_unitary_and_real_generators() {
        let a = chain(40);
        let v0: Vec<C64> = (0..40).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        for s in [C64::new(0.0, -0.4), C64::new(-0.05, 0.0), C64::new(0.02, -3.0)] {
            let mut v = v0.clone();
            let mut lz = Lanczos::new(1e-13, 30);
            lz.expm_apply(&mut |x, y| a.matvec_into(x, y), &mut v, s);
            let dense = dense_expm(&a, s);
            let expect = &dense * nalgebra::DVector::from_vec(v0.clone());
            let err = v.iter().zip(expect.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "s = {s}: err = {err}");
        }
    }

    #[test]
    fn halves_step_when_krylov_space_is_too_small() {
        let a = chain(60);
        let v0: Vec<C64> = (0..60).map(|i| c(1.0 / (1.0 + i as f64))).collect();
        let mut v = v0.clone();
        let mut lz = Lanczos::new(1e-12, 6);
        let s = C64::new(0.0, -2.0);
        lz.expm_apply(&mut |x, y| a.matvec_into(x, y), &mut v, s);
        let expect = dense_expm(&a, s) * nalgebra::DVector::from_vec(v0);
        let err = v.iter().zip(expect.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err = {err}");
    }
}
