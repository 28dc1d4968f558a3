//! Orbit iteration and growth analytics: orbit profiles, the quadratic growth
//! bound for commuting pairs, summability of inverse norm powers, a heuristic
//! search for uniformly visiting functionals, polynomially scaled profiles,
//! Taylor norms of (1−z)^k(1+c−cz)^{−n} and the resolvent decay they control.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{c, max_abs, min_eigenvalue, norm_p, operator_norm, ComplexVector, DenseHermitian, C64};
use crate::shifts::{shift_apply, WeightSequence};
use crate::toeplitz_ops::{build, Flavor, ToeplitzTruncation};
use crate::symbols::SymbolSeries;

/// A bounded operator acting on windowed vectors.
pub trait Operator: Send + Sync {
    fn label(&self) -> String;
    fn apply(&self, x: &ComplexVector) -> Result<ComplexVector>;
    /// Upper bound for the operator norm, used to propagate spill.
    fn norm_bound(&self) -> f64;
    /// Absolute error one application may add, given the input norm.
    fn step_error(&self, _input_norm: f64) -> f64 {
        0.0
    }
    /// Compression P T P to indices 0..n, when available.
    fn compression(&self, _n: usize) -> Option<DMatrix<C64>> {
        None
    }
    fn p(&self) -> f64 {
        2.0
    }
}

/// s·I.
#[derive(Debug, Clone)]
pub struct ScalarOperator {
    pub value: C64,
}

impl Operator for ScalarOperator {
    fn label(&self) -> String {
        format!("scalar:{}", self.value)
    }
    fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        Ok(x.scale(self.value))
    }
    fn norm_bound(&self) -> f64 {
        self.value.norm()
    }
    fn compression(&self, n: usize) -> Option<DMatrix<C64>> {
        Some(DMatrix::from_diagonal_element(n, n, self.value))
    }
}

/// A dense square matrix on indices 0..N−1.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<C64>,
    pub name: String,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<C64>, name: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(LabError::invalid("dense operator must be a non-empty square matrix"));
        }
        Ok(DenseOperator { matrix, name: name.into() })
    }
}

impl Operator for DenseOperator {
    fn label(&self) -> String {
        self.name.clone()
    }
    fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        if x.offset() != 0 || x.len() != self.matrix.nrows() {
            return Err(LabError::DimensionMismatch { expected: self.matrix.nrows(), got: x.len() });
        }
        let y = &self.matrix * x.to_dvector();
        ComplexVector::new(y.iter().cloned().collect())
    }
    fn norm_bound(&self) -> f64 {
        operator_norm(&self.matrix)
    }
    fn compression(&self, n: usize) -> Option<DMatrix<C64>> {
        if n <= self.matrix.nrows() {
            Some(self.matrix.view((0, 0), (n, n)).into_owned())
        } else {
            None
        }
    }
}

/// T_g* on indices 0..N−1. The window is invariant, so polynomial symbols
/// act exactly; a symbol tail contributes tail·‖x‖ per step.
#[derive(Debug, Clone)]
pub struct CoanalyticToeplitz {
    trunc: ToeplitzTruncation,
}

impl CoanalyticToeplitz {
    pub fn new(g: &SymbolSeries, dim: usize) -> Result<Self> {
        Ok(CoanalyticToeplitz { trunc: build(g, dim, Flavor::Coanalytic)? })
    }

    pub fn dim(&self) -> usize {
        self.trunc.dim()
    }

    pub fn symbol(&self) -> &SymbolSeries {
        self.trunc.symbol()
    }
}

impl Operator for CoanalyticToeplitz {
    fn label(&self) -> String {
        format!("coanalytic-toeplitz({})", self.trunc.symbol().label())
    }
    fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        if x.offset() != 0 || x.len() != self.trunc.dim() {
            return Err(LabError::DimensionMismatch { expected: self.trunc.dim(), got: x.len() });
        }
        ComplexVector::new(self.trunc.apply(x.entries())?)
    }
    fn norm_bound(&self) -> f64 {
        self.trunc.symbol().sup_bound()
    }
    fn step_error(&self, input_norm: f64) -> f64 {
        self.trunc.symbol().tail_bound() * input_norm
    }
    fn compression(&self, n: usize) -> Option<DMatrix<C64>> {
        if n == self.trunc.dim() {
            Some(self.trunc.matrix())
        } else {
            build(self.trunc.symbol(), n, Flavor::Coanalytic).ok().map(|t| t.matrix())
        }
    }
}

/// Bilateral weighted shift with loud window overflow.
#[derive(Debug, Clone)]
pub struct ShiftOperator {
    pub weights: WeightSequence,
}

impl Operator for ShiftOperator {
    fn label(&self) -> String {
        format!("weighted-shift({})", self.weights.label())
    }
    fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        shift_apply(&self.weights, x)
    }
    fn norm_bound(&self) -> f64 {
        self.weights.weights().iter().cloned().fold(0.0, f64::max)
    }
    fn p(&self) -> f64 {
        self.weights.p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitProfile {
    pub norms: Vec<f64>,
    pub operator_label: String,
    pub vector_label: String,
    /// Accumulated bound on the distance to the exact orbit, per step.
    pub spill: Vec<f64>,
    pub spill_bound: f64,
}

impl OrbitProfile {
    pub fn from_norms(norms: Vec<f64>, operator_label: impl Into<String>, vector_label: impl Into<String>) -> Self {
        let spill = vec![0.0; norms.len()];
        OrbitProfile { norms, operator_label: operator_label.into(), vector_label: vector_label.into(), spill, spill_bound: 0.0 }
    }

    pub fn horizon(&self) -> usize {
        self.norms.len().saturating_sub(1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Io(e.to_string()))?;
        w.write_record(["n", "norm", "spill_bound"]).map_err(|e| LabError::Io(e.to_string()))?;
        for (n, (v, s)) in self.norms.iter().zip(&self.spill).enumerate() {
            w.write_record([n.to_string(), format!("{v:e}"), format!("{s:e}")]).map_err(|e| LabError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// x, Tx, …, T^H x together with their norm profile.
pub fn iterate_orbit_vectors(
    t: &dyn Operator,
    x: &ComplexVector,
    horizon: usize,
    vector_label: &str,
) -> Result<(Vec<ComplexVector>, OrbitProfile)> {
    let p = t.p();
    let mut vectors = Vec::with_capacity(horizon + 1);
    let mut norms = Vec::with_capacity(horizon + 1);
    let mut spill = Vec::with_capacity(horizon + 1);
    let mut cur = x.clone();
    let mut s = 0.0;
    let bound = t.norm_bound();
    for n in 0..=horizon {
        let nv = norm_p(&cur, p)?;
        if !nv.is_finite() {
            return Err(LabError::Overflow { step: n });
        }
        norms.push(nv);
        spill.push(s);
        if n < horizon {
            let next = t.apply(&cur).map_err(|e| match e {
                LabError::InvalidInput(m) if m.contains("finite") => LabError::Overflow { step: n + 1 },
                other => other,
            })?;
            s = bound * s + t.step_error(nv);
            vectors.push(std::mem::replace(&mut cur, next));
        } else {
            vectors.push(cur.clone());
        }
    }
    let spill_bound = *spill.last().unwrap();
    let profile = OrbitProfile { norms, operator_label: t.label(), vector_label: vector_label.into(), spill, spill_bound };
    Ok((vectors, profile))
}

pub fn iterate_orbit(t: &dyn Operator, x: &ComplexVector, horizon: usize) -> Result<OrbitProfile> {
    iterate_orbit_vectors(t, x, horizon, "x").map(|(_, p)| p)
}

// ---------------------------------------------------------------------------
// Exact orbits of coanalytic Toeplitz operators with dyadic real coefficients.
//
// Orbits of T_g* lose about log10(sup|g| / |g(w)|) digits per step on vectors
// close to a kernel vector k_w, so floating point cannot follow them for long.
// With integer arithmetic the window computation is exact.
// ---------------------------------------------------------------------------

/// Real coefficients as integers over a common power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPolynomial {
    nums: Vec<BigInt>,
    shift: u32,
}

impl DyadicPolynomial {
    /// Every finite double is a dyadic rational, so this is exact.
    pub fn from_f64(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LabError::invalid("exact orbits need finite real coefficients"));
        }
        let parts: Vec<(i64, i32)> = coeffs.iter().map(|&v| decompose(v)).collect();
        let shift = parts.iter().map(|&(m, e)| if m == 0 { 0 } else { -e }).max().unwrap_or(0).max(0);
        let nums = parts.iter().map(|&(m, e)| BigInt::from(m) << ((e + shift) as usize)).collect();
        Ok(DyadicPolynomial { nums, shift: shift as u32 })
    }

    pub fn from_symbol(g: &SymbolSeries) -> Result<Self> {
        if !g.is_polynomial() || g.taylor().iter().any(|z| z.im != 0.0) {
            return Err(LabError::invalid("exact orbits need a polynomial symbol with real coefficients"));
        }
        Self::from_f64(&g.taylor().iter().map(|z| z.re).collect::<Vec<_>>())
    }
}

// v = m·2^e with integer m.
fn decompose(v: f64) -> (i64, i32) {
    if v == 0.0 {
        return (0, 0);
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (mut m, mut e) = if exp == 0 { (frac, -1074) } else { (frac | (1i64 << 52), exp - 1075) };
    while m % 2 == 0 {
        m /= 2;
        e += 1;
    }
    (sign * m, e)
}

/// Integer entries over the common denominator den·2^{den_shift}.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactVector {
    pub nums: Vec<BigInt>,
    pub den: BigInt,
    pub den_shift: u64,
    pub label: String,
}

impl ExactVector {
    /// k_w = Σ wⁿ eₙ on 0..N−1 for real rational w = num/den, scaled by
    /// den^{N−1} to integer entries num^n·den^{N−1−n}.
    pub fn kernel(num: i64, den: i64, n: usize) -> Result<Self> {
        if den <= 0 || num.abs() >= den || n == 0 {
            return Err(LabError::invalid("kernel point must be a rational inside (-1, 1) and the window non-empty"));
        }
        let mut nums = vec![BigInt::from(0); n];
        let mut p = BigInt::from(1);
        for v in nums.iter_mut() {
            *v = p.clone();
            p *= num;
        }
        let mut q = BigInt::from(1);
        for v in nums.iter_mut().rev() {
            *v *= &q;
            q *= den;
        }
        q /= den;
        Ok(ExactVector { nums, den: q, den_shift: 0, label: format!("kernel:{num}/{den}") })
    }

    pub fn to_float(&self) -> Result<ComplexVector> {
        let d = split(&self.den);
        let e: Vec<C64> = self.nums.iter().map(|v| c(ratio(split(v), d, self.den_shift), 0.0)).collect();
        ComplexVector::new(e)
    }
}

// v = m·2^e with |m| in [2^63, 2^64) up to rounding, or (0, 0).
fn split(v: &BigInt) -> (f64, i64) {
    let bits = v.bits();
    if bits == 0 {
        return (0.0, 0);
    }
    let sh = bits.saturating_sub(64);
    let top: BigInt = v >> sh;
    let m = top.iter_u64_digits().next().unwrap_or(0) as f64;
    let m = if v.sign() == num_bigint::Sign::Minus { -m } else { m };
    (m, sh as i64)
}

fn ldexp(m: f64, e: i64) -> f64 {
    let e = e.clamp(-3000, 3000) as i32;
    let h = e / 2;
    m * 2f64.powi(h) * 2f64.powi(e - h)
}

fn ratio(x: (f64, i64), d: (f64, i64), shift: u64) -> f64 {
    ldexp(x.0 / d.0, x.1 - d.1 - shift as i64)
}

// Euclidean norm of the entries as (mantissa, binary exponent).
fn norm_parts(nums: &[BigInt]) -> (f64, i64) {
    let parts: Vec<(f64, i64)> = nums.iter().map(split).filter(|p| p.0 != 0.0).collect();
    let top = match parts.iter().map(|p| p.1).max() {
        Some(t) => t,
        None => return (0.0, 0),
    };
    let s: f64 = parts.iter().map(|&(m, e)| ldexp(m, e - top).powi(2)).sum();
    (s.sqrt(), top)
}

/// Exact orbit of T_g* on the window of `x`; returns the norm profile and
/// the first `keep` + 1 orbit vectors rounded to doubles.
pub fn exact_coanalytic_orbit(
    g: &DyadicPolynomial,
    x: &ExactVector,
    horizon: usize,
    keep: usize,
) -> Result<(OrbitProfile, Vec<ComplexVector>)> {
    let n = x.nums.len();
    let mut cur = x.nums.clone();
    let d = split(&x.den);
    let mut shift = x.den_shift;
    let mut norms = Vec::with_capacity(horizon + 1);
    let mut kept = Vec::new();
    for step in 0..=horizon {
        norms.push(ratio(norm_parts(&cur), d, shift));
        if step <= keep {
            let e: Vec<C64> = cur.iter().map(|v| c(ratio(split(v), d, shift), 0.0)).collect();
            kept.push(ComplexVector::new(e)?);
        }
        if step == horizon {
            break;
        }
        // y_j = Σ_d g_d x_{j+d}; ascending j reads only entries not yet overwritten
        for j in 0..n {
            let mut acc = &cur[j] * &g.nums[0];
            for dd in 1..g.nums.len() {
                if j + dd < n && g.nums[dd].sign() != num_bigint::Sign::NoSign {
                    acc += &cur[j + dd] * &g.nums[dd];
                }
            }
            cur[j] = acc;
        }
        shift += g.shift as u64;
    }
    let profile = OrbitProfile::from_norms(norms, "coanalytic-toeplitz(exact)", x.label.clone());
    Ok((profile, kept))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub premise_min_eig: f64,
    pub premise_tol: f64,
    pub commutator_norm: f64,
    pub s2x_norm: f64,
    pub horizon: usize,
    /// n with ‖Tⁿx‖² < n(n−1)/2·‖S²x‖² beyond float tolerance.
    pub violations: Vec<usize>,
    /// min over n ≥ 2 of ‖Tⁿx‖² / (n(n−1)/2·‖S²x‖²).
    pub min_ratio: Option<f64>,
}

/// Checks the premise T*T ≥ S*S + I, TS = ST on the window compression and
/// then ‖Tⁿx‖² ≥ n(n−1)/2·‖S²x‖² for 1 ≤ n ≤ H.
pub fn quadratic_growth_bound(t: &dyn Operator, s: &dyn Operator, x: &ComplexVector, horizon: usize) -> Result<GrowthReport> {
    let mut r = quadratic_growth_batch(t, s, std::slice::from_ref(x), horizon)?;
    Ok(r.remove(0))
}

/// The same check for several starting vectors of one length; the premise
/// is verified once.
pub fn quadratic_growth_batch(t: &dyn Operator, s: &dyn Operator, xs: &[ComplexVector], horizon: usize) -> Result<Vec<GrowthReport>> {
    let n = match xs.first() {
        Some(x) => x.len(),
        None => return Ok(Vec::new()),
    };
    if xs.iter().any(|x| x.len() != n) {
        return Err(LabError::invalid("starting vectors must share one length"));
    }
    let (a, b) = match (t.compression(n), s.compression(n)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(LabError::invalid("growth bound needs operators with window compressions")),
    };
    let prem = a.adjoint() * &a - b.adjoint() * &b - DMatrix::identity(n, n);
    let tol = 1e-8 * max_abs(&prem).max(1.0);
    let min_eig = min_eigenvalue(&DenseHermitian::with_tolerance(prem, tol)?)?;
    let comm = max_abs(&(&a * &b - &b * &a));
    if min_eig < -tol || comm > tol {
        return Err(LabError::Hypothesis(format!(
            "premise fails on the window: min eig {min_eig:.3e}, commutator {comm:.3e} (tol {tol:.1e})"
        )));
    }
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let (_, prof) = iterate_orbit_vectors(t, x, horizon, "x")?;
        let s2x = s.apply(&s.apply(x)?)?;
        let s2 = s2x.norm();
        let mut violations = Vec::new();
        let mut min_ratio: Option<f64> = None;
        for k in 1..=horizon {
            let lhs = prof.norms[k].powi(2);
            let rhs = (k * (k - 1)) as f64 / 2.0 * s2 * s2;
            let slack = 1e-9 * lhs.max(rhs) + prof.spill[k] * (2.0 * prof.norms[k] + prof.spill[k]);
            if lhs < rhs - slack {
                violations.push(k);
            }
            if rhs > 0.0 {
                let r = lhs / rhs;
                min_ratio = Some(min_ratio.map_or(r, |m: f64| m.min(r)));
            }
        }
        out.push(GrowthReport {
            premise_min_eig: min_eig,
            premise_tol: tol,
            commutator_norm: comm,
            s2x_norm: s2,
            horizon,
            violations,
            min_ratio,
        });
    }
    Ok(out)
}

/// Analytic information about the orbit beyond the computed horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailCertificate {
    None,
    /// ‖Tⁿx‖² ≥ n(n−1)/2·s² for all n, from a verified growth premise.
    CommutingPair { s2x_norm: f64 },
    /// ‖T^{n+1}x‖ ≥ ρ‖Tⁿx‖ for all n ≥ H.
    Geometric { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumVerdict {
    SummableCertified,
    SummableEvidence,
    DivergentEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummabilityReport {
    pub exponent: f64,
    pub partial_sums: Vec<f64>,
    pub tail_bound: Option<f64>,
    pub total_upper: Option<f64>,
    pub verdict: SumVerdict,
}

/// Partial sums of Σ ‖Tⁿx‖^{−c} with an optional certified tail.
pub fn summability_certificate(profile: &OrbitProfile, c_exp: f64, cert: TailCertificate) -> Result<SummabilityReport> {
    if !(c_exp > 0.0) {
        return Err(LabError::invalid("exponent must be positive"));
    }
    if let Some(k) = profile.norms.iter().position(|&v| !(v > 0.0)) {
        return Err(LabError::invalid(format!("orbit norm vanishes at n = {k}")));
    }
    let mut partial = Vec::with_capacity(profile.norms.len());
    let mut acc = 0.0;
    for v in &profile.norms {
        acc += v.powf(-c_exp);
        partial.push(acc);
    }
    let h = profile.horizon();
    let tail = match cert {
        TailCertificate::None => None,
        TailCertificate::CommutingPair { s2x_norm } => {
            if s2x_norm > 0.0 && c_exp > 1.0 && h >= 2 {
                let hf = h as f64;
                let core = if c_exp == 2.0 { 2.0 / hf } else { 2f64.powf(c_exp / 2.0) * (hf.powf(-c_exp) + hf.powf(1.0 - c_exp) / (c_exp - 1.0)) };
                Some(core * s2x_norm.powf(-c_exp))
            } else {
                None
            }
        }
        TailCertificate::Geometric { rho } => {
            if rho > 1.0 {
                let q = rho.powf(-c_exp);
                Some(profile.norms[h].powf(-c_exp) * q / (1.0 - q))
            } else {
                None
            }
        }
    };
    let verdict = if tail.is_some() {
        SumVerdict::SummableCertified
    } else {
        let last = profile.norms[h].powf(-c_exp);
        if (h.max(1) as f64) * last < 0.01 * acc {
            SumVerdict::SummableEvidence
        } else {
            SumVerdict::DivergentEvidence
        }
    };
    Ok(SummabilityReport { exponent: c_exp, total_upper: tail.map(|t| acc + t), partial_sums: partial, tail_bound: tail, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallWitness {
    pub y: ComplexVector,
    /// min_n |⟨xₙ, y⟩| with ‖y‖ = 1.
    pub margin: f64,
    pub success: bool,
    pub restarts: usize,
    pub iterations: usize,
}

pub const BALL_RESTARTS: usize = 10;
pub const BALL_ITERATIONS: usize = 500;

/// Heuristic search for ‖y‖ ≤ 1 with |⟨xₙ, y⟩| ≥ 1 for all n, by cyclic
/// projection onto the sets |⟨xₙ, y⟩| ≥ 1 followed by normalization.
pub fn ball_witness_search(vectors: &[ComplexVector], seed: u64) -> Result<BallWitness> {
    if vectors.is_empty() {
        return Err(LabError::invalid("no vectors supplied"));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
    if norms.contains(&0.0) {
        return Err(LabError::Hypothesis("zero vector in the sequence".into()));
    }
    let budget: f64 = norms.iter().map(|v| v.powi(-2)).sum();
    if budget > 1.0 + 1e-12 {
        return Err(LabError::Hypothesis(format!("sum of inverse squared norms is {budget:.6} > 1")));
    }
    let lo = vectors.iter().map(|v| v.offset()).min().unwrap();
    let hi = vectors.iter().map(|v| v.last_index()).max().unwrap();
    let len = (hi - lo + 1) as usize;
    let xs: Vec<Vec<C64>> = vectors.iter().map(|v| v.rewindow(lo, len).0.into_entries()).collect();
    let dot = |x: &[C64], y: &[C64]| -> C64 { x.iter().zip(y).map(|(a, b)| a * b.conj()).sum() };
    let margin_of = |y: &[C64]| xs.iter().map(|x| dot(x, y).norm()).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<C64>, f64)> = None;
    for _ in 0..BALL_RESTARTS {
        let mut y: Vec<C64> = (0..len).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        normalize(&mut y);
        for _ in 0..BALL_ITERATIONS {
            for (x, nx) in xs.iter().zip(&norms) {
                let ip = dot(x, &y);
                let m = ip.norm();
                if m < 1.0 {
                    let phase = if m > 0.0 { ip / m } else { c(1.0, 0.0) };
                    // ⟨x, y + αx⟩ = ⟨x, y⟩ + conj(α)‖x‖²
                    let alpha = ((phase - ip) / (nx * nx)).conj();
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi += alpha * xi;
                    }
                }
            }
            normalize(&mut y);
            let m = margin_of(&y);
            if best.as_ref().is_none_or(|b| m > b.1) {
                best = Some((y.clone(), m));
            }
            if m >= 1.0 {
                break;
            }
        }
        if best.as_ref().is_some_and(|b| b.1 >= 1.0 - 1e-6) {
            break;
        }
    }
    let (y, margin) = best.unwrap();
    Ok(BallWitness {
        y: ComplexVector::with_offset(y, lo)?,
        margin,
        success: margin >= 1.0 - 1e-6,
        restarts: BALL_RESTARTS,
        iterations: BALL_ITERATIONS,
    })
}

fn normalize(y: &mut [C64]) {
    let n = crate::num_core::l2_norm(y);
    if n > 0.0 {
        for v in y.iter_mut() {
            *v /= n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerProfile {
    pub k: f64,
    /// n^{−k}‖Tⁿx‖ for n ≥ 1 (index 0 holds n = 1).
    pub scaled: Vec<f64>,
    pub argmin: usize,
    pub min_value: f64,
    pub increasing_after_min: bool,
    /// n ≥ 2 with s_n below every s_m, m ∈ [⌈n/2⌉, n−1].
    pub dips: Vec<usize>,
    pub dips_after_min: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperpolyReport {
    pub per_k: Vec<PowerProfile>,
    /// n with ‖Tⁿx‖ < rate(n), when a rate was supplied.
    pub rate_dips: Vec<usize>,
    pub note: &'static str,
}

const EVIDENCE_NOTE: &str = "finite-horizon evidence only; limits are not verified";

/// Polynomially scaled orbit norms, their minima and dips.
pub fn superpoly_profile(profile: &OrbitProfile, ks: &[f64], rate: Option<&dyn Fn(f64) -> f64>) -> Result<SuperpolyReport> {
    let h = profile.horizon();
    if h < 10 {
        return Err(LabError::invalid("superpolynomial profile needs a horizon of at least 10"));
    }
    let mut per_k = Vec::new();
    for &k in ks {
        let scaled: Vec<f64> = (1..=h).map(|n| profile.norms[n] * (n as f64).powf(-k)).collect();
        let (imin, vmin) = scaled.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        let argmin = imin + 1;
        let increasing = scaled[imin..].windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
        let mut dips = Vec::new();
        for n in 2..=h {
            let lo = n.div_ceil(2).max(1);
            let prev = (lo..n).map(|m| scaled[m - 1]).fold(f64::INFINITY, f64::min);
            if scaled[n - 1] < prev {
                dips.push(n);
            }
        }
        let after: Vec<usize> = dips.iter().cloned().filter(|&n| n > argmin).collect();
        per_k.push(PowerProfile { k, scaled, argmin, min_value: vmin, increasing_after_min: increasing, dips, dips_after_min: after });
    }
    let rate_dips = match rate {
        Some(q) => (0..=h).filter(|&n| profile.norms[n] < q(n as f64)).collect(),
        None => Vec::new(),
    };
    Ok(SuperpolyReport { per_k, rate_dips, note: EVIDENCE_NOTE })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorRow {
    pub n: usize,
    pub norm: f64,
    pub tail_bound: f64,
    pub terms: usize,
    /// max over spot-checked m of |series − contour|; None when not checked.
    pub crosscheck_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorNormTable {
    pub k: u32,
    pub c: f64,
    pub rows: Vec<TaylorRow>,
    /// sup_n N(n)·n^{(k−1)/2}.
    pub sup_scaled: f64,
    pub argsup: usize,
    /// least-squares slope of log N(n) against log n on [n_max/4, n_max].
    pub fitted_slope: Option<f64>,
    pub max_crosscheck_error: f64,
}

pub const TAYLOR_SPOT_ROWS: [usize; 10] = [1, 2, 5, 17, 64, 200, 511, 1024, 2048, 4096];
const CONTOUR_POINTS: usize = 1 << 14;

fn binom_row(k: u32) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

// Coefficients b_m of (1+c−cz)^{−n} together with a bound for Σ_{m>M} b_m.
fn negative_binomial(n: usize, c_par: f64) -> (Vec<f64>, f64) {
    let rho = c_par / (1.0 + c_par);
    let nf = n as f64;
    let ratio = |m: usize| rho * (nf + m as f64) / (m as f64 + 1.0);
    let ln_b0 = -nf * (1.0 + c_par).ln();
    let mode = if rho * (nf - 1.0) > 0.0 { (rho * (nf - 1.0) / (1.0 - rho)).floor() as usize } else { 0 };
    let (mut b, start) = if ln_b0 > (1e-280f64).ln() {
        (vec![ln_b0.exp()], 0usize)
    } else {
        // scaled start at the mode, normalized below through Σ b_m = 1
        let mut back = vec![1.0];
        let mut m = mode;
        while m > 0 {
            let prev = back.last().unwrap() * m as f64 / (rho * (nf + m as f64 - 1.0));
            back.push(prev);
            m -= 1;
        }
        back.reverse();
        (back, mode)
    };
    let _ = start;
    let bmax = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let mut m = b.len() - 1;
    loop {
        let r = ratio(m);
        let next = b[m] * r;
        b.push(next);
        m += 1;
        let rn = ratio(m);
        if m > mode && rn < 1.0 && b[m] / (1.0 - rn) < 1e-30 * bmax(&b) {
            break;
        }
        if m > 50 * (mode + 100) {
            break;
        }
    }
    let rlast = ratio(m);
    let mut tail = if rlast < 1.0 { b[m] * rlast / (1.0 - rlast) } else { f64::INFINITY };
    if ln_b0 <= (1e-280f64).ln() {
        let s: f64 = b.iter().sum();
        for v in b.iter_mut() {
            *v /= s;
        }
        tail /= s;
    }
    (b, tail)
}

/// a_m(f_n) for f_n = (1−z)^k(1+c−cz)^{−n} and a bound for Σ_{m>M}|a_m|.
pub fn taylor_coefficients(k: u32, c_par: f64, n: usize) -> (Vec<f64>, f64) {
    let (b, btail) = negative_binomial(n, c_par);
    let binom = binom_row(k);
    let kk = k as usize;
    let total = b.len() + kk;
    let a: Vec<f64> = (0..total)
        .map(|m| {
            let mut acc = 0.0;
            for (i, cb) in binom.iter().enumerate() {
                if m >= i && m - i < b.len() {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    acc += s * cb * b[m - i];
                }
            }
            acc
        })
        .collect();
    (a, 2f64.powi(k as i32) * btail)
}

// a_m by the trapezoid rule on γ(t) = 2e^{it} − 1, which encloses 0 and
// avoids the pole at 1 + 1/c.
fn contour_coefficient(k: u32, c_par: f64, n: usize, m: usize) -> f64 {
    let pts = CONTOUR_POINTS;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..pts {
        let t = 2.0 * PI * j as f64 / pts as f64;
        let e = C64::from_polar(1.0, t);
        let z = e * 2.0 - 1.0;
        let f = (c(1.0, 0.0) - z).powi(k as i32) * (c(1.0 + c_par, 0.0) - z * c_par).powi(-(n as i32));
        acc += f * e * 2.0 * z.powi(-(m as i32) - 1);
    }
    (acc / pts as f64).re
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// N(n) = Σ_m |a_m(f_n)| for n = 1..n_max, with contour cross-checks on
/// the spot rows.
pub fn taylor_norms(k: u32, c_par: f64, n_max: usize) -> Result<TaylorNormTable> {
    if !(c_par > 0.0) || n_max == 0 {
        return Err(LabError::invalid("need c > 0 and n_max >= 1"));
    }
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (a, tail) = taylor_coefficients(k, c_par, n);
        let norm: f64 = a.iter().map(|v| v.abs()).sum();
        let cross = if TAYLOR_SPOT_ROWS.contains(&n) || n == n_max {
            let centre = (c_par * n as f64).floor() as usize;
            let spread = (n as f64).sqrt().ceil() as usize;
            let ms = [0, 1, 2, centre, centre + spread];
            let err = ms
                .iter()
                .filter(|&&m| m < a.len())
                .map(|&m| (a[m] - contour_coefficient(k, c_par, n, m)).abs())
                .fold(0.0, f64::max);
            Some(err)
        } else {
            None
        };
        rows.push(TaylorRow { n, norm, tail_bound: tail, terms: a.len(), crosscheck_error: cross });
    }
    let expo = (k as f64 - 1.0) / 2.0;
    let (argsup, sup) = rows
        .iter()
        .map(|r| (r.n, r.norm * (r.n as f64).powf(expo)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let lo = (n_max / 4).max(1);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.n >= lo && r.norm > 0.0).map(|r| ((r.n as f64).ln(), r.norm.ln())).unzip();
    let slope = if n_max >= 4 { fit_slope(&xs, &ys) } else { None };
    let max_cross = rows.iter().filter_map(|r| r.crosscheck_error).fold(0.0, f64::max);
    Ok(TaylorNormTable { k, c: c_par, rows, sup_scaled: sup, argsup, fitted_slope: slope, max_crosscheck_error: max_cross })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable {
    pub k: u32,
    pub c: f64,
    pub sup_power_norm: f64,
    pub constant_a: f64,
    pub rows: Vec<DecayRow>,
    pub bound_holds: bool,
    /// least-squares slope of log ‖(I−S)^k T^{−n}‖ on [n_max/4, n_max].
    pub fitted_exponent: Option<f64>,
}

/// ‖(I−S)^k T^{−n}‖ for T = (1+c)I − cS by repeated solves, against the
/// bound sup‖Sᵐ‖·A(k,c)·n^{(1−k)/2}.
pub fn resolvent_power_decay(s: &DMatrix<C64>, c_par: f64, k: u32, n_max: usize) -> Result<DecayTable> {
    if !s.is_square() || s.nrows() == 0 {
        return Err(LabError::invalid("S must be a non-empty square matrix"));
    }
    if k < 2 || !(c_par > 0.0) || n_max == 0 {
        return Err(LabError::invalid("need k >= 2, c > 0 and n_max >= 1"));
    }
    let dim = s.nrows();
    let id = DMatrix::<C64>::identity(dim, dim);
    let mut power = id.clone();
    let mut sup_pow = 1.0f64;
    for _ in 0..n_max {
        power = &power * s;
        sup_pow = sup_pow.max(operator_norm(&power));
        if !sup_pow.is_finite() || sup_pow > 1e12 {
            return Err(LabError::Hypothesis(format!("S is not power bounded at the horizon (norm {sup_pow:.3e})")));
        }
    }
    let t = &id * c(1.0 + c_par, 0.0) - s * c(c_par, 0.0);
    let lu = t.clone().lu();
    let smin = t.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if smin < 1e-13 * operator_norm(&t) {
        return Err(LabError::Singular(format!("T has smallest singular value {smin:.3e}")));
    }
    let mut m = id.clone();
    let diff = &id - s;
    for _ in 0..k {
        m = &m * &diff;
    }
    let table = taylor_norms(k, c_par, n_max)?;
    let a_const = table.sup_scaled;
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        m = lu.solve(&m).ok_or_else(|| LabError::Singular("LU solve failed".into()))?;
        let value = operator_norm(&m);
        let bound = sup_pow * a_const * (n as f64).powf((1.0 - k as f64) / 2.0);
        rows.push(DecayRow { n, value, bound });
    }
    let holds = rows.iter().all(|r| r.value <= r.bound * (1.0 + 1e-9) + 1e-14);
    let lo = (n_max / 4).max(1);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.n >= lo && r.value > 0.0).map(|r| ((r.n as f64).ln(), r.value.ln())).unzip();
    Ok(DecayTable {
        k,
        c: c_par,
        sup_power_norm: sup_pow,
        constant_a: a_const,
        bound_holds: holds,
        fitted_exponent: fit_slope(&xs, &ys),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutantReport {
    pub c: f64,
    /// ‖(T*T − R*R − I) − c(I − S*S)‖_max.
    pub residual: f64,
    /// min eig of c(I − S*S).
    pub premise_min_eig: f64,
    pub tol: f64,
}

/// T = (c+1)I + cS, R = √(c(c+1))·(I+S): T*T − R*R − I = c(I − S*S).
pub fn commutant_identity(s: &DMatrix<C64>, c_par: f64) -> Result<CommutantReport> {
    if !s.is_square() || s.nrows() == 0 {
        return Err(LabError::invalid("S must be a non-empty square matrix"));
    }
    let tol = 1e-10;
    let norm = operator_norm(s);
    if norm > 1.0 + tol {
        return Err(LabError::Hypothesis(format!("S is not a contraction (norm {norm:.6})")));
    }
    let n = s.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let t = &id * c(c_par + 1.0, 0.0) + s * c(c_par, 0.0);
    let r = (&id + s) * c((c_par * (c_par + 1.0)).sqrt(), 0.0);
    let sss = s.adjoint() * s;
    let lhs = t.adjoint() * &t - r.adjoint() * &r - &id;
    let rhs = (&id - &sss) * c(c_par, 0.0);
    let residual = max_abs(&(lhs - &rhs));
    let min_eig = min_eigenvalue(&DenseHermitian::with_tolerance(rhs, 1e-8)?)?;
    Ok(CommutantReport { c: c_par, residual, premise_min_eig: min_eig, tol: 1e-8 * c_par.max(1.0) })
}

/// Truncated backward shift: ones on the superdiagonal.
pub fn backward_shift_matrix(n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

/// Random matrix scaled to operator norm `target` ≤ 1.
pub fn random_contraction(n: usize, target: f64, rng: &mut impl Rng) -> DMatrix<C64> {
    let m = DMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let s = operator_norm(&m);
    m * c(target / s, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shifts::WeightSequence;

    #[test]
    fn scalar_orbit_doubles() {
        let t = ScalarOperator { value: c(2.0, 0.0) };
        let x = ComplexVector::from_real(&[1.0]).unwrap();
        let p = iterate_orbit(&t, &x, 10).unwrap();
        for (n, v) in p.norms.iter().enumerate() {
            assert_eq!(*v, 2f64.powi(n as i32));
        }
    }

    #[test]
    fn overflow_is_reported_with_its_step() {
        let t = ScalarOperator { value: c(1e200, 0.0) };
        let x = ComplexVector::from_real(&[1.0]).unwrap();
        assert!(matches!(iterate_orbit(&t, &x, 5), Err(LabError::Overflow { step: 2 })));
    }

    #[test]
    fn chan_sanders_orbit_of_e0_is_flat() {
        let t = ShiftOperator { weights: WeightSequence::chan_sanders(64, 2.0).unwrap() };
        let x = ComplexVector::basis(0, 1, 0).unwrap();
        let p = iterate_orbit(&t, &x, 20).unwrap();
        assert!(p.norms.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exact_kernel_orbit_follows_the_eigenvalue() {
        let g = DyadicPolynomial::from_f64(&[1.5, 0.5]).unwrap();
        let x = ExactVector::kernel(-9, 10, 1000).unwrap();
        let (p, kept) = exact_coanalytic_orbit(&g, &x, 60, 2).unwrap();
        for (n, v) in p.norms.iter().enumerate() {
            let r = v / (1.05f64.powi(n as i32) * p.norms[0]); assert!((r - 1.0).abs() < 1e-12, "{n} {r} {v}");
        }
        assert_eq!(kept.len(), 3);
        assert!((kept[1].entries()[1].re - 1.05 * -0.9).abs() < 1e-14);
    }

    #[test]
    fn dyadic_decomposition_is_exact() {
        for v in [1.5, -0.375, 3.0, 1e-3, 12345.678] {
            let (m, e) = decompose(v);
            assert_eq!(m as f64 * 2f64.powi(e), v);
        }
    }

    #[test]
    fn growth_bound_scalar_example() {
        let t = ScalarOperator { value: c(2.0, 0.0) };
        let s = ScalarOperator { value: c(3f64.sqrt(), 0.0) };
        let x = ComplexVector::from_real(&[1.0]).unwrap();
        let r = quadratic_growth_bound(&t, &s, &x, 5).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.premise_min_eig.abs() < 1e-12);
        let bad = ScalarOperator { value: c(1.5, 0.0) };
        assert!(matches!(quadratic_growth_bound(&bad, &s, &x, 5), Err(LabError::Hypothesis(_))));
    }

    #[test]
    fn summability_examples() {
        let p = OrbitProfile::from_norms((0..30).map(|n| 2f64.powi(n + 1)).collect(), "2I", "x");
        let r = summability_certificate(&p, 2.0, TailCertificate::Geometric { rho: 2.0 }).unwrap();
        assert_eq!(r.verdict, SumVerdict::SummableCertified);
        assert!((r.total_upper.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.total_upper.unwrap() <= 1.0);
        let r = summability_certificate(&p, 2.0, TailCertificate::None).unwrap();
        assert_eq!(r.verdict, SumVerdict::SummableEvidence);
        let flat = OrbitProfile::from_norms(vec![1.0; 50], "I", "x");
        let r = summability_certificate(&flat, 3.0, TailCertificate::None).unwrap();
        assert_eq!(r.verdict, SumVerdict::DivergentEvidence);
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        let zero = OrbitProfile::from_norms(vec![1.0, 0.0], "0", "x");
        assert!(summability_certificate(&zero, 1.0, TailCertificate::None).is_err());
    }

    #[test]
    fn ball_witness_examples() {
        let xs: Vec<ComplexVector> = (0..=20).map(|n| ComplexVector::from_real(&[2f64.powi(n + 1)]).unwrap()).collect();
        let w = ball_witness_search(&xs, 0).unwrap();
        assert!(w.success && w.margin >= 1.0 - 1e-6);
        let es: Vec<ComplexVector> = (0..4).map(|n| ComplexVector::basis(n, 4, 0).unwrap()).collect();
        assert!(matches!(ball_witness_search(&es, 0), Err(LabError::Hypothesis(_))));
    }

    #[test]
    fn superpoly_examples() {
        let p = OrbitProfile::from_norms((0..=200).map(|n| 1.05f64.powi(n)).collect(), "t", "x");
        let r = superpoly_profile(&p, &[3.0], None).unwrap();
        // d/dn (n^{-3} 1.05^n) = 0 at n = 3 / ln 1.05 ≈ 61.49
        assert!((61..=62).contains(&r.per_k[0].argmin));
        assert!(r.per_k[0].increasing_after_min);
        assert!(r.per_k[0].dips_after_min.is_empty());
        let p = OrbitProfile::from_norms((0..=40).map(|n| 2f64.powi(n)).collect(), "t", "x");
        let r = superpoly_profile(&p, &[1.0], None).unwrap();
        assert_eq!(r.per_k[0].argmin, 1);
        assert!(r.per_k[0].increasing_after_min);
        assert!(superpoly_profile(&OrbitProfile::from_norms(vec![1.0; 5], "t", "x"), &[1.0], None).is_err());
    }

    #[test]
    fn taylor_small_cases() {
        let (a, _) = taylor_coefficients(2, 1.0, 1);
        assert_eq!(a[0], 0.5);
        assert_eq!(a[1], -0.75);
        for (m, v) in a.iter().enumerate().take(40).skip(2) {
            assert_eq!(*v, 2f64.powi(-(m as i32) - 1));
        }
        let t = taylor_norms(2, 1.0, 16).unwrap();
        assert_eq!(t.rows[0].norm, 1.5);
        let t = taylor_norms(0, 0.7, 20).unwrap();
        assert!(t.rows.iter().all(|r| (r.norm - 1.0).abs() < 1e-13));
    }

    #[test]
    fn taylor_large_n_uses_scaled_start() {
        let (a, tail) = taylor_coefficients(2, 1.0, 3000);
        let n: f64 = a.iter().map(|v| v.abs()).sum();
        assert!(n > 0.0 && n < 1e-2 && tail < 1e-15 * n);
        let err = (a[3000] - contour_coefficient(2, 1.0, 3000, 3000)).abs();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn resolvent_identity_case_vanishes() {
        let s = DMatrix::<C64>::identity(8, 8);
        let t = resolvent_power_decay(&s, 1.0, 2, 20).unwrap();
        assert!(t.rows.iter().all(|r| r.value == 0.0));
    }

    #[test]
    fn commutant_examples() {
        let z = DMatrix::<C64>::zeros(4, 4);
        let r = commutant_identity(&z, 0.5).unwrap();
        assert!(r.residual < 1e-15);
        assert!((r.premise_min_eig - 0.5).abs() < 1e-15);
        let two = DMatrix::<C64>::identity(3, 3) * c(2.0, 0.0);
        assert!(matches!(commutant_identity(&two, 1.0), Err(LabError::Hypothesis(_))));
    }
}
