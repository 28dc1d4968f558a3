//! Complex vectors, upper-triangular Toeplitz application and Hermitian
//! extremal eigenvalues.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};

pub type C64 = Complex<f64>;

/// Dimension from which [`toeplitz_apply`] switches to the FFT path.
pub const FFT_THRESHOLD: usize = 512;

/// Largest dimension handled by the dense Hermitian eigensolver.
pub const DENSE_EIG_LIMIT: usize = 1024;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A finite window of a (possibly bilateral) sequence: `entries[i]` sits at
/// index `offset + i`.
#[derive(Clone, PartialEq, serde::Serialize)]
pub struct ComplexVector {
    entries: Vec<C64>,
    offset: i64,
}

impl fmt::Debug for ComplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexVector")
            .field("offset", &self.offset)
            .field("len", &self.entries.len())
            .finish()
    }
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        Self::with_offset(entries, 0)
    }

    pub fn with_offset(entries: Vec<C64>, offset: i64) -> Result<Self> {
        if entries.is_empty() {
            return Err(LabError::invalid("vector must have at least one entry"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::invalid("vector entries must be finite"));
        }
        Ok(ComplexVector { entries, offset })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| c(v, 0.0)).collect())
    }

    pub fn zeros(len: usize, offset: i64) -> Self {
        ComplexVector { entries: vec![C64::new(0.0, 0.0); len.max(1)], offset }
    }

    /// Standard basis vector e_index inside a window of `len` entries
    /// starting at `offset`.
    pub fn basis(index: i64, len: usize, offset: i64) -> Result<Self> {
        let mut v = Self::zeros(len, offset);
        let slot = index - offset;
        if slot < 0 || slot as usize >= v.entries.len() {
            return Err(LabError::invalid(format!("index {index} outside the window")));
        }
        v.entries[slot as usize] = c(1.0, 0.0);
        Ok(v)
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the last entry.
    pub fn last_index(&self) -> i64 {
        self.offset + self.entries.len() as i64 - 1
    }

    /// Value at a sequence index, zero outside the window.
    pub fn get(&self, index: i64) -> C64 {
        let slot = index - self.offset;
        if slot < 0 || slot as usize >= self.entries.len() {
            C64::new(0.0, 0.0)
        } else {
            self.entries[slot as usize]
        }
    }

    /// Smallest and largest indices carrying a non-zero entry.
    pub fn support(&self) -> Option<(i64, i64)> {
        let first = self.entries.iter().position(|z| z.norm_sqr() > 0.0)?;
        let last = self.entries.iter().rposition(|z| z.norm_sqr() > 0.0)?;
        Some((self.offset + first as i64, self.offset + last as i64))
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.entries)
    }

    pub fn scale(&self, s: C64) -> ComplexVector {
        ComplexVector { entries: self.entries.iter().map(|z| z * s).collect(), offset: self.offset }
    }

    /// Sum of two windows; the result covers the union of both.
    pub fn add(&self, other: &ComplexVector) -> ComplexVector {
        let lo = self.offset.min(other.offset);
        let hi = self.last_index().max(other.last_index());
        let mut out = vec![C64::new(0.0, 0.0); (hi - lo + 1) as usize];
        for (i, z) in self.entries.iter().enumerate() {
            out[(self.offset - lo) as usize + i] += z;
        }
        for (i, z) in other.entries.iter().enumerate() {
            out[(other.offset - lo) as usize + i] += z;
        }
        ComplexVector { entries: out, offset: lo }
    }

    pub fn sub(&self, other: &ComplexVector) -> ComplexVector {
        self.add(&other.scale(c(-1.0, 0.0)))
    }

    /// The same sequence re-windowed onto `[offset, offset + len)`.
    /// Mass falling outside the new window is returned as its l2 norm.
    pub fn rewindow(&self, offset: i64, len: usize) -> (ComplexVector, f64) {
        let mut out = vec![C64::new(0.0, 0.0); len.max(1)];
        let mut lost = 0.0;
        for (i, z) in self.entries.iter().enumerate() {
            let idx = self.offset + i as i64 - offset;
            if idx >= 0 && (idx as usize) < out.len() {
                out[idx as usize] = *z;
            } else {
                lost += z.norm_sqr();
            }
        }
        (ComplexVector { entries: out, offset }, lost.sqrt())
    }

    pub fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.entries)
    }
}

pub fn l2_norm(x: &[C64]) -> f64 {
    // scaled accumulation keeps very large or very small entries finite
    let scale = x.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|z| (z / scale).norm_sqr()).sum();
    scale * s.sqrt()
}

/// ℓ_p norm; pass `f64::INFINITY` for the max norm.
pub fn norm_p(x: &ComplexVector, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(LabError::invalid(format!("p must be at least 1, got {p}")));
    }
    let e = x.entries();
    if p.is_infinite() {
        return Ok(e.iter().fold(0.0, |m, z| m.max(z.norm())));
    }
    if p == 2.0 {
        return Ok(l2_norm(e));
    }
    let scale = e.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = e.iter().map(|z| (z.norm() / scale).powf(p)).sum();
    Ok(scale * s.powf(1.0 / p))
}

/// ⟨x, y⟩ = Σ x_n conj(y_n), conjugate-linear in the second slot.
/// Windows may differ; missing entries count as zero.
pub fn inner(x: &ComplexVector, y: &ComplexVector) -> C64 {
    let lo = x.offset().max(y.offset());
    let hi = x.last_index().min(y.last_index());
    let mut acc = C64::new(0.0, 0.0);
    let mut i = lo;
    while i <= hi {
        acc += x.get(i) * y.get(i).conj();
        i += 1;
    }
    acc
}

/// Returns (‖x‖_p, ⟨x, y⟩) for two vectors on the same window.
pub fn norms_and_inner(x: &ComplexVector, y: &ComplexVector, p: f64) -> Result<(f64, C64)> {
    if x.offset() != y.offset() || x.len() != y.len() {
        return Err(LabError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let n = norm_p(x, p)?;
    Ok((n, inner(x, y)))
}

struct FftPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<C64>,
}

/// Upper-triangular Toeplitz matrix: entry (j, k) is `coeffs[k - j]` for
/// `k >= j`, zero below the diagonal.
#[derive(Clone)]
pub struct UpperToeplitz {
    coeffs: Vec<C64>,
    dim: usize,
    plan: Option<Arc<FftPlan>>,
}

impl fmt::Debug for UpperToeplitz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UpperToeplitz")
            .field("dim", &self.dim)
            .field("bandwidth", &self.coeffs.len())
            .finish()
    }
}

impl UpperToeplitz {
    pub fn new(coeffs: Vec<C64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::invalid("dimension must be positive"));
        }
        if coeffs.is_empty() {
            return Err(LabError::invalid("at least one coefficient required"));
        }
        if coeffs.len() > dim {
            return Err(LabError::invalid(format!(
                "{} coefficients do not fit a {dim}x{dim} matrix",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::invalid("coefficients must be finite"));
        }
        let plan = if dim >= FFT_THRESHOLD { Some(Arc::new(build_plan(&coeffs, dim))) } else { None };
        Ok(UpperToeplitz { coeffs, dim, plan })
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            for (d, cf) in self.coeffs.iter().enumerate() {
                if j + d < self.dim {
                    m[(j, j + d)] = *cf;
                }
            }
        }
        m
    }

    /// O(N·M) application.
    pub fn apply_direct(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_dim(x.len())?;
        let n = self.dim;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, o) in out.iter_mut().enumerate() {
            let span = self.coeffs.len().min(n - j);
            let mut acc = C64::new(0.0, 0.0);
            for d in 0..span {
                acc += self.coeffs[d] * x[j + d];
            }
            *o = acc;
        }
        Ok(out)
    }

    /// Application through a zero-padded circular correlation.
    pub fn apply_fft(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_dim(x.len())?;
        match &self.plan {
            Some(p) => Ok(fft_correlate(p, x, self.dim)),
            None => {
                let p = build_plan(&self.coeffs, self.dim);
                Ok(fft_correlate(&p, x, self.dim))
            }
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            Err(LabError::DimensionMismatch { expected: self.dim, got })
        } else {
            Ok(())
        }
    }
}

fn build_plan(coeffs: &[C64], dim: usize) -> FftPlan {
    let size = (dim + coeffs.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut spectrum = vec![C64::new(0.0, 0.0); size];
    spectrum[..coeffs.len()].copy_from_slice(coeffs);
    forward.process(&mut spectrum);
    FftPlan { size, forward, inverse, spectrum }
}

// y_j = Σ_d c_d x_{j+d}. With x reversed, y_j is entry N-1-j of the linear
// convolution c * rev(x).
fn fft_correlate(p: &FftPlan, x: &[C64], n: usize) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); p.size];
    for (i, z) in x.iter().rev().enumerate() {
        buf[i] = *z;
    }
    p.forward.process(&mut buf);
    for (b, s) in buf.iter_mut().zip(&p.spectrum) {
        *b *= s;
    }
    p.inverse.process(&mut buf);
    let scale = 1.0 / p.size as f64;
    (0..n).map(|j| buf[n - 1 - j] * scale).collect()
}

/// Applies an upper Toeplitz matrix to a vector on the window 0..N−1,
/// choosing the FFT path from [`FFT_THRESHOLD`] on.
pub fn toeplitz_apply(t: &UpperToeplitz, x: &ComplexVector) -> Result<ComplexVector> {
    if x.len() != t.dim() {
        return Err(LabError::DimensionMismatch { expected: t.dim(), got: x.len() });
    }
    let y = if t.dim() >= FFT_THRESHOLD { t.apply_fft(x.entries())? } else { t.apply_direct(x.entries())? };
    ComplexVector::with_offset(y, x.offset())
}

/// Hermitian matrix together with the tolerance used to accept it.
#[derive(Debug, Clone)]
pub struct DenseHermitian {
    entries: DMatrix<C64>,
    tolerance: f64,
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

impl DenseHermitian {
    /// Uses the default tolerance 1e−10·‖A‖_max.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let tol = 1e-10 * max_abs(&entries).max(f64::MIN_POSITIVE);
        Self::with_tolerance(entries, tol)
    }

    pub fn with_tolerance(entries: DMatrix<C64>, tolerance: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(LabError::DimensionMismatch { expected: entries.nrows(), got: entries.ncols() });
        }
        if entries.nrows() == 0 {
            return Err(LabError::invalid("empty matrix"));
        }
        if !(tolerance >= 0.0) {
            return Err(LabError::invalid("tolerance must be non-negative"));
        }
        let defect = max_abs(&(&entries - entries.adjoint()));
        if !defect.is_finite() || defect > tolerance {
            return Err(LabError::NonHermitian { defect, tol: tolerance });
        }
        Ok(DenseHermitian { entries, tolerance })
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn symmetrized(&self) -> DMatrix<C64> {
        (&self.entries + self.entries.adjoint()) * c(0.5, 0.0)
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &DenseHermitian) -> Result<f64> {
    let m = a.symmetrized();
    if a.dim() <= DENSE_EIG_LIMIT {
        let ev = m.symmetric_eigenvalues();
        Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
    } else {
        lanczos_min(&m)
    }
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(a: &DenseHermitian) -> Result<f64> {
    let neg = DenseHermitian { entries: -a.entries.clone(), tolerance: a.tolerance };
    Ok(-min_eigenvalue(&neg)?)
}

// Lanczos with full reorthogonalisation; the starting vector is fixed so the
// result is reproducible.
fn lanczos_min(m: &DMatrix<C64>) -> Result<f64> {
    let n = m.nrows();
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = DVector::from_fn(n, |i, _| c(1.0 + ((i * 7919) % 101) as f64 / 101.0, 0.0));
    q /= c(q.norm(), 0.0);
    let max_iter = n.min(600);
    let mut best = f64::INFINITY;
    for k in 0..max_iter {
        let mut w = m * &q;
        let alpha = q.dotc(&w).re;
        alphas.push(alpha);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w -= b * proj;
            }
        }
        let beta = w.norm();
        let kk = alphas.len();
        let t = DMatrix::from_fn(kk, kk, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = nalgebra::SymmetricEigen::new(t);
        let (imin, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let resid = (beta * eig.eigenvectors[(kk - 1, imin)]).abs();
        best = lmin;
        if resid <= 1e-12 * scale || beta <= 1e-14 * scale || k + 1 == n {
            return Ok(best);
        }
        betas.push(beta);
        q = w / c(beta, 0.0);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(LabError::NonConvergence("Lanczos iteration produced no estimate".into()))
    }
}

/// Spectral norm of a general matrix.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cv(v: &[f64]) -> ComplexVector {
        ComplexVector::from_real(v).unwrap()
    }

    #[test]
    fn identity_coefficients_leave_vector_unchanged() {
        let t = UpperToeplitz::new(vec![c(1.0, 0.0)], 2).unwrap();
        let y = toeplitz_apply(&t, &cv(&[5.0, 7.0])).unwrap();
        assert_eq!(y.entries(), &[c(5.0, 0.0), c(7.0, 0.0)]);
    }

    #[test]
    fn superdiagonal_acts_on_later_entries() {
        let t = UpperToeplitz::new(vec![c(2.0, 0.0), c(1.0, 0.0)], 3).unwrap();
        let y = toeplitz_apply(&t, &cv(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(y.entries(), &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let y = toeplitz_apply(&t, &cv(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(y.entries(), &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let t = UpperToeplitz::new(vec![c(1.0, 0.0)], 3).unwrap();
        assert!(matches!(toeplitz_apply(&t, &cv(&[1.0, 2.0])), Err(LabError::DimensionMismatch { .. })));
    }

    #[test]
    fn fft_path_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 600;
        let coeffs: Vec<C64> = (0..40).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let x: Vec<C64> = (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let t = UpperToeplitz::new(coeffs, n).unwrap();
        let dense = t.to_dense() * DVector::from_column_slice(&x);
        let fast = t.apply_fft(&x).unwrap();
        let err = dense.iter().zip(&fast).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn min_eigenvalue_small_cases() {
        let id = DenseHermitian::new(DMatrix::identity(3, 3)).unwrap();
        assert!((min_eigenvalue(&id).unwrap() - 1.0).abs() < 1e-14);
        let d = DenseHermitian::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)])))
            .unwrap();
        assert!((min_eigenvalue(&d).unwrap() - 1.0).abs() < 1e-14);
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let m = DenseHermitian::new(m).unwrap();
        assert!((min_eigenvalue(&m).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(DenseHermitian::new(m), Err(LabError::NonHermitian { .. })));
    }

    #[test]
    fn lanczos_agrees_with_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 80;
        let a = DMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = (&a + a.adjoint()) * c(0.5, 0.0);
        let dense = h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        let lz = lanczos_min(&h).unwrap();
        assert!((dense - lz).abs() < 1e-9 * dense.abs().max(1.0), "{dense} vs {lz}");
    }

    #[test]
    fn norms_and_inner_examples() {
        let (n, _) = norms_and_inner(&cv(&[3.0, 4.0]), &cv(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(n, 5.0);
        let (n, _) = norms_and_inner(&cv(&[1.0, 1.0]), &cv(&[0.0, 0.0]), f64::INFINITY).unwrap();
        assert_eq!(n, 1.0);
        let x = ComplexVector::new(vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let y = ComplexVector::new(vec![c(0.0, 1.0), c(1.0, 0.0)]).unwrap();
        let (_, ip) = norms_and_inner(&x, &y, 2.0).unwrap();
        assert_eq!(ip, c(0.0, 0.0));
        assert!(norms_and_inner(&x, &y, 0.5).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(ComplexVector::new(vec![c(f64::NAN, 0.0)]).is_err());
        assert!(ComplexVector::new(vec![]).is_err());
    }

    #[test]
    fn add_spans_union_of_windows() {
        let a = ComplexVector::with_offset(vec![c(1.0, 0.0)], -2).unwrap();
        let b = ComplexVector::with_offset(vec![c(2.0, 0.0)], 3).unwrap();
        let s = a.add(&b);
        assert_eq!(s.offset(), -2);
        assert_eq!(s.len(), 6);
        assert_eq!(s.get(3), c(2.0, 0.0));
        assert_eq!(s.support(), Some((-2, 3)));
    }
}
