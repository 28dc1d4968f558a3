//! Truncated Toeplitz operators on H²: compressions, order checks between
//! Toeplitz products, hyponormality, kernel eigenrelations and the spectral
//! theory of tridiagonal symbols a/z + b + cz.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{c, max_abs, min_eigenvalue, ComplexVector, DenseHermitian, UpperToeplitz, C64};
use crate::symbols::{eval_on_grid, modulus_range, SymbolSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// T_g, lower triangular with entries ĝ(j−k).
    Analytic,
    /// T_g*, upper triangular with entries conj(ĝ(k−j)).
    Coanalytic,
}

/// N×N compression of T_g or T_g*.
#[derive(Debug, Clone)]
pub struct ToeplitzTruncation {
    symbol: SymbolSeries,
    dim: usize,
    flavor: Flavor,
    exact: bool,
    kernel: UpperToeplitz,
}

pub fn build(g: &SymbolSeries, n: usize, flavor: Flavor) -> Result<ToeplitzTruncation> {
    if n < 2 {
        return Err(LabError::invalid("truncation dimension must be at least 2"));
    }
    let used = g.taylor().len().min(n);
    let coeffs: Vec<C64> = match flavor {
        Flavor::Analytic => g.taylor()[..used].to_vec(),
        Flavor::Coanalytic => g.taylor()[..used].iter().map(|z| z.conj()).collect(),
    };
    let exact = g.is_polynomial() && g.degree() < n;
    Ok(ToeplitzTruncation { symbol: g.clone(), dim: n, flavor, exact, kernel: UpperToeplitz::new(coeffs, n)? })
}

impl ToeplitzTruncation {
    pub fn symbol(&self) -> &SymbolSeries {
        &self.symbol
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn exact(&self) -> bool {
        self.exact
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let u = self.kernel.to_dense();
        match self.flavor {
            Flavor::Coanalytic => u,
            Flavor::Analytic => u.transpose(),
        }
    }

    /// Product with a vector on indices 0..N−1. The analytic flavor is the
    /// upper kernel conjugated by index reversal.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let fast = self.dim >= crate::num_core::FFT_THRESHOLD;
        match self.flavor {
            Flavor::Coanalytic => {
                if fast {
                    self.kernel.apply_fft(x)
                } else {
                    self.kernel.apply_direct(x)
                }
            }
            Flavor::Analytic => {
                let rev: Vec<C64> = x.iter().rev().cloned().collect();
                let y = if fast { self.kernel.apply_fft(&rev)? } else { self.kernel.apply_direct(&rev)? };
                Ok(y.into_iter().rev().collect())
            }
        }
    }

    /// Bound on ‖(T − T_N)x‖ / ‖x‖ from the symbol tail.
    pub fn truncation_bound(&self) -> f64 {
        let dropped: f64 = self.symbol.taylor().iter().skip(self.dim).map(|z| z.norm()).sum();
        dropped + self.symbol.tail_bound()
    }
}

/// Rows 0..N+deg of T_g restricted to the first N columns; B*B is the exact
/// compression of T_g*T_g.
fn analytic_tall_block(g: &SymbolSeries, n: usize) -> DMatrix<C64> {
    let deg = g.degree();
    DMatrix::from_fn(n + deg, n, |j, k| if j >= k && j - k <= deg { g.coeff(j - k) } else { C64::new(0.0, 0.0) })
}

/// Compression of T_g T_g* for analytic g: (P T_g P)(P T_g* P), exact since
/// T_g* leaves the span of e₀..e_{N−1} invariant.
fn analytic_outer_compression(g: &SymbolSeries, n: usize) -> DMatrix<C64> {
    let l = DMatrix::from_fn(n, n, |j, k| if j >= k { g.coeff(j - k) } else { C64::new(0.0, 0.0) });
    &l * l.adjoint()
}

fn analytic_inner_compression(g: &SymbolSeries, n: usize) -> DMatrix<C64> {
    let b = analytic_tall_block(g, n);
    b.adjoint() * b
}

fn hermitian_with_default_tol(m: DMatrix<C64>) -> Result<(DenseHermitian, f64)> {
    let tol = 1e-8 * max_abs(&m).max(1e-300);
    let h = DenseHermitian::with_tolerance(m, tol)?;
    Ok((h, tol))
}

fn grid_size_for(symbols: &[&SymbolSeries]) -> usize {
    let deg = symbols.iter().map(|s| s.degree()).max().unwrap_or(0);
    (1usize << 12).max((2 * (deg + 1)).next_power_of_two())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelEigen {
    pub eigenvalue: C64,
    pub residual: f64,
    pub bound: f64,
}

/// Checks T_g* k_w = conj(g(w)) k_w on the window, k_w = Σ conj(w)ⁿ eₙ.
pub fn kernel_eigencheck(g: &SymbolSeries, w: C64, n: usize) -> Result<KernelEigen> {
    if !(w.norm() < 1.0) {
        return Err(LabError::invalid(format!("kernel point {w} is not inside the unit disc")));
    }
    let t = build(g, n, Flavor::Coanalytic)?;
    let wc = w.conj();
    let mut k = Vec::with_capacity(n);
    let mut p = c(1.0, 0.0);
    for _ in 0..n {
        k.push(p);
        p *= wc;
    }
    let lambda = g.eval(w).conj();
    let tk = t.apply(&k)?;
    let diff: Vec<C64> = tk.iter().zip(&k).map(|(a, b)| a - lambda * b).collect();
    let residual = crate::num_core::l2_norm(&diff) / crate::num_core::l2_norm(&k);
    let r = w.norm();
    let bound = (g.tail_bound() + r.powi(n as i32) / (1.0 - r)) * g.sup_bound();
    Ok(KernelEigen { eigenvalue: lambda, residual, bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub dim: usize,
    /// min eigenvalue of P(ΣT_h*T_h − ΣT_g*T_g)P.
    pub min_eigenvalue: f64,
    pub tol: f64,
    /// min over the boundary grid of H = Σ|h|² − Σ|g|².
    pub grid_min_h: f64,
    pub grid: usize,
    pub h_nonnegative: bool,
    /// H ≥ 0 ⇒ min eig ≥ −tol, the sound direction.
    pub implication_holds: bool,
    /// min eig ≥ −tol while H has negative samples: only evidence at this N.
    pub compression_positive_only: bool,
    pub symbol_tail_mass: f64,
}

/// Positivity of S = ΣT_h*T_h − ΣT_g*T_g via its compression and the
/// boundary function H it is the Toeplitz operator of.
pub fn positivity_equiv(plus: &[SymbolSeries], minus: &[SymbolSeries], n: usize) -> Result<PositivityReport> {
    if n < 1 {
        return Err(LabError::invalid("dimension must be positive"));
    }
    let mut s = DMatrix::<C64>::zeros(n, n);
    for h in plus {
        s += analytic_inner_compression(h, n);
    }
    for g in minus {
        s -= analytic_inner_compression(g, n);
    }
    let (herm, tol) = hermitian_with_default_tol(s)?;
    let min_eig = min_eigenvalue(&herm)?;

    let all: Vec<&SymbolSeries> = plus.iter().chain(minus).collect();
    let grid = grid_size_for(&all);
    let mut hfun = vec![0.0; grid];
    let mut scale = 0.0f64;
    for (sym, sign) in plus.iter().map(|s| (s, 1.0)).chain(minus.iter().map(|s| (s, -1.0))) {
        for (acc, v) in hfun.iter_mut().zip(eval_on_grid(sym.taylor(), 1.0, grid, 0.0)) {
            *acc += sign * v.norm_sqr();
            scale = scale.max(v.norm_sqr());
        }
    }
    let grid_min = hfun.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail: f64 = all.iter().map(|s| s.tail_bound()).sum();
    let h_nonneg = grid_min >= -1e-8 * scale.max(1.0);
    let eig_ok = min_eig >= -tol;
    Ok(PositivityReport {
        dim: n,
        min_eigenvalue: min_eig,
        tol,
        grid_min_h: grid_min,
        grid,
        h_nonnegative: h_nonneg,
        implication_holds: !h_nonneg || eig_ok,
        compression_positive_only: !h_nonneg && eig_ok,
        symbol_tail_mass: tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub dim: usize,
    /// min eig of P(T_gT_g* − ΣT_hT_h*)P.
    pub star_right_min_eig: f64,
    /// min eig of P(T_g*T_g − ΣT_h*T_h)P.
    pub star_left_min_eig: f64,
    pub tol: f64,
    pub orderings_agree: bool,
    pub g_min_modulus: f64,
}

/// Whether ΣT_hT_h* ≤ T_gT_g*, compared with the star-left ordering.
pub fn dominance_check(h_list: &[SymbolSeries], g: &SymbolSeries, n: usize) -> Result<DominanceReport> {
    let (gmin, _) = modulus_range(g);
    if gmin <= 1e-8 {
        return Err(LabError::Hypothesis(format!(
            "symbol is not invertible on the disc (min modulus {gmin:.3e})"
        )));
    }
    let mut right = analytic_outer_compression(g, n);
    let mut left = analytic_inner_compression(g, n);
    for h in h_list {
        right -= analytic_outer_compression(h, n);
        left -= analytic_inner_compression(h, n);
    }
    let (rh, rtol) = hermitian_with_default_tol(right)?;
    let (lh, ltol) = hermitian_with_default_tol(left)?;
    let tol = rtol.max(ltol);
    let r = min_eigenvalue(&rh)?;
    let l = min_eigenvalue(&lh)?;
    Ok(DominanceReport {
        dim: n,
        star_right_min_eig: r,
        star_left_min_eig: l,
        tol,
        orderings_agree: (r >= -tol) == (l >= -tol),
        g_min_modulus: gmin,
    })
}

/// Tridiagonal symbol a/z + b + cz: a above the diagonal, c below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tridiag {
    pub a: C64,
    pub b: C64,
    pub c: C64,
}

impl Tridiag {
    pub fn new(a: C64, b: C64, c: C64) -> Self {
        Tridiag { a, b, c }
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.a / z + self.b + self.c * z
    }

    fn coeff(&self, k: i64) -> C64 {
        match k {
            -1 => self.a,
            0 => self.b,
            1 => self.c,
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Boundary modulus range on a 2^14 grid.
    pub fn boundary_range(&self) -> (f64, f64) {
        let n = 1 << 14;
        (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), k| {
            let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
            let m = self.eval(z).norm();
            (lo.min(m), hi.max(m))
        })
    }
}

/// Input accepted by the hyponormality check and the classifier.
#[derive(Debug, Clone)]
pub enum SymbolInput {
    Analytic(SymbolSeries),
    Tridiagonal(Tridiag),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyponormalReport {
    pub dim: usize,
    pub min_eigenvalue: f64,
    pub tol: f64,
    /// (0,0) entry of the compressed commutator.
    pub corner: f64,
    /// Largest entry away from (0,0).
    pub off_corner_max: f64,
    /// |c|² − |a|² for tridiagonal symbols.
    pub expected_corner: Option<f64>,
}

// Exact compression P T*T P − P T T* P for a Laurent symbol supported in
// [−lo, hi], using tall blocks T P_N and T* P_N.
fn laurent_commutator(coeff: &dyn Fn(i64) -> C64, lo: usize, hi: usize, n: usize) -> DMatrix<C64> {
    let rows_t = n + hi;
    let t = DMatrix::from_fn(rows_t, n, |j, k| coeff(j as i64 - k as i64));
    let rows_s = n + lo;
    let s = DMatrix::from_fn(rows_s, n, |j, k| coeff(k as i64 - j as i64).conj());
    t.adjoint() * t - s.adjoint() * s
}

/// min eig of the compressed commutator T*T − TT*.
pub fn hyponormality_check(input: &SymbolInput, n: usize) -> Result<HyponormalReport> {
    if n < 2 {
        return Err(LabError::invalid("truncation dimension must be at least 2"));
    }
    let (m, expected) = match input {
        SymbolInput::Analytic(g) => {
            (analytic_inner_compression(g, n) - analytic_outer_compression(g, n), None)
        }
        SymbolInput::Tridiagonal(t) => {
            let f = |k: i64| t.coeff(k);
            (laurent_commutator(&f, 1, 1, n), Some(t.c.norm_sqr() - t.a.norm_sqr()))
        }
    };
    let corner = m[(0, 0)].re;
    let mut off = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            if (j, k) != (0, 0) {
                off = off.max(m[(j, k)].norm());
            }
        }
    }
    let scale = max_abs(&m).max(1.0);
    let tol = 1e-8 * scale;
    let herm = DenseHermitian::with_tolerance(m, tol)?;
    Ok(HyponormalReport {
        dim: n,
        min_eigenvalue: min_eigenvalue(&herm)?,
        tol,
        corner,
        off_corner_max: off,
        expected_corner: expected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TridiagEigenPair {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub z: C64,
    /// b + a·z + c/z, the eigenvalue forced by the recurrence.
    pub lambda: C64,
    pub coeffs: Vec<C64>,
    pub residual: f64,
    pub degenerate: bool,
    /// a/z + b + c·z, evaluated for comparison.
    pub literal_candidate: C64,
    pub literal_residual: f64,
    /// both |z|^N and |c/(az)|^N below 1e−14.
    pub tails_resolved: bool,
}

/// Smallest N with |z|^N and |c/(az)|^N below 1e−14.
pub fn tridiag_required_dim(t: &Tridiag, z: C64) -> usize {
    let u = (t.c / (t.a * z)).norm();
    let need = |r: f64| if r <= 0.0 { 1 } else { ((1e-14f64).ln() / r.ln()).ceil() as usize + 1 };
    need(z.norm()).max(need(u)).max(2)
}

/// Eigenvector f_n = z^{n+1} − (c/(az))^{n+1} (or (n+1)zⁿ on z² = c/a) of
/// the truncated tridiagonal Toeplitz matrix.
pub fn tridiag_eigen(t: &Tridiag, z: C64, n: usize) -> Result<TridiagEigenPair> {
    if t.a.norm() == 0.0 {
        return Err(LabError::invalid("a must be non-zero"));
    }
    let ratio = (t.c / t.a).norm();
    if !(ratio < z.norm() && z.norm() < 1.0) {
        return Err(LabError::invalid(format!(
            "z = {z} is outside the annulus {ratio} < |z| < 1"
        )));
    }
    if n < 2 {
        return Err(LabError::invalid("truncation dimension must be at least 2"));
    }
    let u = t.c / (t.a * z);
    let ca = t.c / t.a;
    let degenerate = (z * z - ca).norm() <= 1e-12 * ca.norm().max(1.0);
    let coeffs: Vec<C64> = if degenerate {
        let mut p = c(1.0, 0.0);
        (0..n)
            .map(|k| {
                let v = p * (k as f64 + 1.0);
                p *= z;
                v
            })
            .collect()
    } else {
        let mut pz = z;
        let mut pu = u;
        (0..n)
            .map(|_| {
                let v = pz - pu;
                pz *= z;
                pu *= u;
                v
            })
            .collect()
    };
    let lambda = t.b + t.a * z + t.c / z;
    let literal = t.eval(z);
    let applied: Vec<C64> = (0..n)
        .map(|k| {
            let mut v = t.b * coeffs[k];
            if k + 1 < n {
                v += t.a * coeffs[k + 1];
            }
            if k > 0 {
                v += t.c * coeffs[k - 1];
            }
            v
        })
        .collect();
    let fnorm = crate::num_core::l2_norm(&coeffs);
    let resid = |lam: C64| {
        let d: Vec<C64> = applied.iter().zip(&coeffs).map(|(a, f)| a - lam * f).collect();
        crate::num_core::l2_norm(&d) / fnorm
    };
    Ok(TridiagEigenPair {
        a: t.a,
        b: t.b,
        c: t.c,
        z,
        lambda,
        residual: resid(lambda),
        literal_candidate: literal,
        literal_residual: resid(literal),
        coeffs,
        degenerate,
        tails_resolved: n >= tridiag_required_dim(t, z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HcVerdict {
    Hypercyclic,
    NotHypercyclic,
    BoundaryMarginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HcReport {
    pub verdict: HcVerdict,
    pub min_modulus: f64,
    pub max_modulus: f64,
    pub reason: String,
}

/// Norm hypercyclicity of T_g* (g(𝔻) meets 𝕋, g non-constant) or of a
/// tridiagonal Toeplitz operator (|a| > |c| and min|g| < 1 < max|g| on 𝕋).
pub fn hypercyclicity_classify(input: &SymbolInput) -> HcReport {
    let tol = 1e-9;
    match input {
        SymbolInput::Analytic(g) => {
            let (lo, hi) = modulus_range(g);
            if g.is_constant() {
                return HcReport {
                    verdict: HcVerdict::NotHypercyclic,
                    min_modulus: lo,
                    max_modulus: hi,
                    reason: "constant symbol".into(),
                };
            }
            let (verdict, reason) = if lo < 1.0 - tol && hi > 1.0 + tol {
                (HcVerdict::Hypercyclic, "g(D) meets the unit circle")
            } else if lo >= 1.0 - 1e-12 {
                (HcVerdict::NotHypercyclic, "|g| >= 1 on the disc")
            } else if hi <= 1.0 + 1e-12 {
                (HcVerdict::NotHypercyclic, "|g| <= 1 on the disc")
            } else {
                (HcVerdict::BoundaryMarginal, "modulus range touches 1 within tolerance")
            };
            HcReport { verdict, min_modulus: lo, max_modulus: hi, reason: reason.into() }
        }
        SymbolInput::Tridiagonal(t) => {
            let (lo, hi) = t.boundary_range();
            let (verdict, reason) = if t.a.norm() <= t.c.norm() {
                (HcVerdict::NotHypercyclic, "|a| <= |c|")
            } else if lo < 1.0 - tol && hi > 1.0 + tol {
                (HcVerdict::Hypercyclic, "|a| > |c| and min |g| < 1 < max |g| on the circle")
            } else if lo > 1.0 + tol || hi < 1.0 - tol {
                (HcVerdict::NotHypercyclic, "|g| stays on one side of 1 on the circle")
            } else {
                (HcVerdict::BoundaryMarginal, "boundary modulus touches 1 within tolerance")
            };
            HcReport { verdict, min_modulus: lo, max_modulus: hi, reason: reason.into() }
        }
    }
}

/// Coanalytic orbit T_g*ⁿ x on a window, as vectors with offset 0.
pub fn coanalytic_orbit(g: &SymbolSeries, x: &ComplexVector, steps: usize) -> Result<Vec<ComplexVector>> {
    if x.offset() != 0 {
        return Err(LabError::invalid("coanalytic orbits live on indices 0..N-1"));
    }
    let t = build(g, x.len().max(2), Flavor::Coanalytic)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = x.entries().to_vec();
    if cur.len() < 2 {
        cur.resize(2, C64::new(0.0, 0.0));
    }
    out.push(ComplexVector::new(cur.clone())?);
    for _ in 0..steps {
        cur = t.apply(&cur)?;
        out.push(ComplexVector::new(cur.clone())?);
    }
    Ok(out)
}
