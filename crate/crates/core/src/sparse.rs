//! Compressed sparse row matrices over `Complex64`.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { dim, indptr, indices, values }.pruned()
    }

    fn pruned(self) -> Self {
        let mut triplets_kept = CsrMatrix {
            dim: self.dim,
            indptr: vec![0; self.dim + 1],
            indices: Vec::with_capacity(self.indices.len()),
            values: Vec::with_capacity(self.values.len()),
        };
        for r in 0..self.dim {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                if self.values[idx] != C64::new(0.0, 0.0) {
                    triplets_kept.indices.push(self.indices[idx]);
                    triplets_kept.values.push(self.values[idx]);
                }
            }
            triplets_kept.indptr[r + 1] = triplets_kept.indices.len();
        }
        triplets_kept
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let dim = diag.len();
        Self::from_triplets(dim, diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim)
            .flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |i| (r, self.indices[i], self.values[i])))
    }

    /// Column indices and values of one row.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let range = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        match self.indices[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `out = self * x`
    #[inline]
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[i] * x[self.indices[i]];
            }
            *o = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, found: x.len() });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.pruned()
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()).collect())
    }

    pub fn sub(&self, other: &CsrMatrix) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for i in self.indptr[r]..self.indptr[r + 1] {
                let mid = self.indices[i];
                let a = self.values[i];
                for j in other.indptr[mid]..other.indptr[mid + 1] {
                    triplets.push((r, other.indices[j], a * other.values[j]));
                }
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CsrMatrix) -> Self {
        let d = other.dim;
        let mut triplets = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                triplets.push((r1 * d + r2, c1 * d + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.dim * d, triplets)
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets().map(|(r, c, v)| (v - self.get(c, r).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|i| self.values[i].norm()).sum())
            .fold(0.0, f64::max)
    }
}

/// Real matrix stored by diagonals. Operators on the Fock-spin product
/// space are banded with a handful of fixed offsets, so this layout avoids
/// index arrays in the innermost loop.
#[derive(Debug, Clone, PartialEq)]
pub struct DiaMatrix {
    dim: usize,
    offsets: Vec<isize>,
    /// `diags[d][i]` is the entry at `(i, i + offsets[d])`.
    pub diags: Vec<Vec<f64>>,
}

impl DiaMatrix {
    /// `None` if any entry is complex or more than `max_offsets` diagonals
    /// are occupied.
    pub fn from_csr(m: &CsrMatrix, max_offsets: usize) -> Option<Self> {
        Self::on_offsets(m, &Self::offsets_of(&[m], max_offsets)?)
    }

    /// Both matrices laid out on their common set of diagonals.
    pub fn pair(a: &CsrMatrix, b: &CsrMatrix, max_offsets: usize) -> Option<(Self, Self)> {
        assert_eq!(a.dim, b.dim);
        let offs = Self::offsets_of(&[a, b], max_offsets)?;
        Some((Self::on_offsets(a, &offs)?, Self::on_offsets(b, &offs)?))
    }

    fn offsets_of(ms: &[&CsrMatrix], max_offsets: usize) -> Option<Vec<isize>> {
        let mut offs: Vec<isize> =
            ms.iter().flat_map(|m| m.triplets().map(|(r, c, _)| c as isize - r as isize)).collect();
        offs.sort_unstable();
        offs.dedup();
        (offs.len() <= max_offsets).then_some(offs)
    }

    fn on_offsets(m: &CsrMatrix, offsets: &[isize]) -> Option<Self> {
        let mut diags = vec![vec![0.0; m.dim]; offsets.len()];
        for (r, c, v) in m.triplets() {
            if v.im != 0.0 {
                return None;
            }
            let d = offsets.binary_search(&(c as isize - r as isize)).ok()?;
            diags[d][r] = v.re;
        }
        Some(DiaMatrix { dim: m.dim, offsets: offsets.to_vec(), diags })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    /// `self = a * x + b * y` diagonal by diagonal; all three must share
    /// offsets.
    pub fn set_combination(&mut self, a: f64, x: &DiaMatrix, b: f64, y: &DiaMatrix) {
        assert!(self.offsets == x.offsets && self.offsets == y.offsets);
        for ((d, dx), dy) in self.diags.iter_mut().zip(&x.diags).zip(&y.diags) {
            for ((v, p), q) in d.iter_mut().zip(dx).zip(dy) {
                *v = a * p + b * q;
            }
        }
    }

    #[inline]
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match self.offsets.len() {
            3 => self.banded::<3>(x, out),
            5 => self.banded::<5>(x, out),
            _ => self.matvec_by_diagonal(x, out),
        }
    }

    /// Rows where every diagonal is in range are summed in one pass with
    /// the diagonal count known at compile time; the rest fall back to the
    /// edge-safe loop.
    fn banded<const D: usize>(&self, x: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let lo = (-self.offsets[0]).max(0) as usize;
        let hi = (n as isize - self.offsets[D - 1].max(0)).max(lo as isize) as usize;
        if hi <= lo {
            return self.matvec_by_diagonal(x, out);
        }
        for i in (0..lo).chain(hi..n) {
            out[i] = self.row_sum(x, i);
        }
        let offs: [isize; D] = std::array::from_fn(|d| self.offsets[d]);
        let diags: [&[f64]; D] = std::array::from_fn(|d| &self.diags[d][lo..hi]);
        let xs: [&[C64]; D] =
            std::array::from_fn(|d| &x[(lo as isize + offs[d]) as usize..(hi as isize + offs[d]) as usize]);
        for (j, o) in out[lo..hi].iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for d in 0..D {
                let v = diags[d][j];
                let xc = xs[d][j];
                re += v * xc.re;
                im += v * xc.im;
            }
            *o = C64::new(re, im);
        }
    }

    fn row_sum(&self, x: &[C64], i: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&off, d) in self.offsets.iter().zip(&self.diags) {
            let c = i as isize + off;
            if c >= 0 && (c as usize) < self.dim {
                acc += x[c as usize] * d[i];
            }
        }
        acc
    }

    fn matvec_by_diagonal(&self, x: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row_sum(x, i);
        }
    }
}

#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 0.0)), (1, 0, c(0.0, 0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0, 0.0));
    }

    #[test]
    fn kron_layout_matches_index_convention() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 0.0))]);
        let b = CsrMatrix::diagonal(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let k = a.kron(&b);
        // (fock 0, spin 2) <- (fock 1, spin 2)
        assert_eq!(k.get(2, 5), c(3.0, 0.0));
        assert_eq!(k.nnz(), 3);
    }

    #[test]
    fn diagonal_storage_reproduces_csr() {
        let a = CsrMatrix::from_triplets(
            4,
            vec![(0, 1, c(1.0, 0.0)), (1, 0, c(1.0, 0.0)), (3, 1, c(-2.0, 0.0)), (2, 2, c(0.5, 0.0))],
        );
        let b = CsrMatrix::diagonal(&[c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0), c(5.0, 0.0)]);
        let (da, db) = DiaMatrix::pair(&a, &b, 4).unwrap();
        assert_eq!(da.offsets(), &[-2, -1, 0, 1]);
        let mut g = da.clone();
        g.set_combination(2.0, &da, -1.0, &db);
        let x = vec![c(1.0, 1.0), c(0.0, 2.0), c(-1.0, 0.5), c(3.0, -1.0)];
        let mut got = vec![c(0.0, 0.0); 4];
        g.matvec_into(&x, &mut got);
        let expect: Vec<C64> = a.scale(c(2.0, 0.0)).sub(&b).matvec(&x).unwrap();
        assert_eq!(got, expect);
        assert!(DiaMatrix::from_csr(&a, 3).is_none());
        assert!(DiaMatrix::from_csr(&a.scale(c(0.0, 1.0)), 4).is_none());
    }

    #[test]
    fn product_and_adjoint() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, c(0.0, 1.0)), (1, 1, c(2.0, 0.0))]);
        let ad = a.adjoint();
        assert_eq!(ad.get(1, 0), c(0.0, -1.0));
        let p = a.mul(&ad);
        // row 0 of a times col 0 of a^dag = i * (-i)
        assert_eq!(p.get(0, 0), c(1.0, 0.0));
        assert!(p.is_hermitian(1e-15));
        let x = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let y = a.matvec(&x).unwrap();
        assert_eq!(y, vec![c(-1.0, 0.0), c(0.0, 2.0)]);
    }
}
