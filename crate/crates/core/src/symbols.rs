//! Bounded analytic symbols on the disc: boundary evaluation, outer functions
//! built from a boundary log-modulus, class membership evidence and the cap
//! function with |h| = |g| − 1 on the circle.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{c, C64};

pub const DEFAULT_GRID: usize = 1 << 14;
/// Grid used internally by [`cap_function`]; the log singularity at a zero of
/// |g| − 1 needs it together with extrapolation to reach ~1e−11.
pub const CAP_GRID: usize = 1 << 20;

/// Truncated Taylor series of a bounded analytic function on the disc.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolSeries {
    taylor: Vec<C64>,
    tail_bound: f64,
    label: String,
}

impl SymbolSeries {
    pub fn new(taylor: Vec<C64>, tail_bound: f64, label: impl Into<String>) -> Result<Self> {
        if taylor.is_empty() {
            return Err(LabError::invalid("symbol needs at least one coefficient"));
        }
        if taylor.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::invalid("symbol coefficients must be finite"));
        }
        if !(tail_bound >= 0.0) || !tail_bound.is_finite() {
            return Err(LabError::invalid("tail bound must be finite and non-negative"));
        }
        Ok(SymbolSeries { taylor, tail_bound, label: label.into() })
    }

    pub fn polynomial(coeffs: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        Self::new(coeffs, 0.0, label)
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        let label = format!("poly:{}", coeffs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        Self::polynomial(coeffs.iter().map(|&v| c(v, 0.0)).collect(), label)
    }

    pub fn constant(value: C64) -> Self {
        SymbolSeries { taylor: vec![value], tail_bound: 0.0, label: format!("const:{value}") }
    }

    pub fn taylor(&self) -> &[C64] {
        &self.taylor
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Index of the last stored coefficient.
    pub fn degree(&self) -> usize {
        self.taylor.len() - 1
    }

    /// Exact polynomial: no tail beyond the stored coefficients.
    pub fn is_polynomial(&self) -> bool {
        self.tail_bound == 0.0
    }

    pub fn is_constant(&self) -> bool {
        self.is_polynomial() && self.taylor.iter().skip(1).all(|z| z.norm() == 0.0)
    }

    pub fn coeff(&self, m: usize) -> C64 {
        self.taylor.get(m).copied().unwrap_or_default()
    }

    /// Σ|ĝ(m)| + tail, an upper bound for the sup norm on the closed disc.
    pub fn sup_bound(&self) -> f64 {
        self.taylor.iter().map(|z| z.norm()).sum::<f64>() + self.tail_bound
    }

    /// Horner evaluation of the stored coefficients.
    pub fn eval(&self, z: C64) -> C64 {
        self.taylor.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * z + a)
    }

    pub fn scale(&self, s: C64) -> SymbolSeries {
        SymbolSeries {
            taylor: self.taylor.iter().map(|z| z * s).collect(),
            tail_bound: self.tail_bound * s.norm(),
            label: format!("({})*{}", self.label, s),
        }
    }
}

/// Values Σ a_m r^m e^{i m t_k} on t_k = 2π(k + offset)/n. Coefficients are
/// folded modulo n, which is exact at the grid points.
pub fn eval_on_grid(coeffs: &[C64], r: f64, n: usize, offset: f64) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut rm = 1.0;
    for (m, a) in coeffs.iter().enumerate() {
        let phase = C64::from_polar(1.0, 2.0 * PI * (m as f64) * offset / n as f64);
        buf[m % n] += a * rm * phase;
        rm *= r;
        if rm == 0.0 {
            break;
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Samples of g on the n-th roots of unity.
pub fn boundary_eval(g: &SymbolSeries, gridsize: usize) -> Result<Vec<C64>> {
    if !gridsize.is_power_of_two() {
        return Err(LabError::invalid(format!("grid size {gridsize} is not a power of two")));
    }
    let needed = 2 * (g.degree() + 1);
    if gridsize < needed {
        return Err(LabError::Aliasing { grid: gridsize, needed });
    }
    Ok(eval_on_grid(g.taylor(), 1.0, gridsize, 0.0))
}

/// Samples of a real function q on t_k = 2π(k + phase_offset)/n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogModulus {
    samples: Vec<f64>,
    upper_bound: f64,
    phase_offset: f64,
}

impl LogModulus {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::with_offset(samples, 0.0)
    }

    /// `phase_offset` is measured in grid steps and lies in [0, 1).
    pub fn with_offset(samples: Vec<f64>, phase_offset: f64) -> Result<Self> {
        if samples.len() < 2 || !samples.len().is_power_of_two() {
            return Err(LabError::invalid(format!("grid size {} is not a power of two", samples.len())));
        }
        if !(0.0..1.0).contains(&phase_offset) {
            return Err(LabError::invalid("phase offset must lie in [0, 1)"));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            let v = samples[k];
            return Err(if v == f64::INFINITY || v.is_nan() {
                LabError::Hypothesis(format!("log-modulus is not bounded above at sample {k}"))
            } else {
                LabError::Hypothesis(format!("log-modulus is -inf at sample {k}; the modulus vanishes there"))
            });
        }
        let upper_bound = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(LogModulus { samples, upper_bound, phase_offset })
    }

    pub fn from_fn(n: usize, phase_offset: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|k| f(2.0 * PI * (k as f64 + phase_offset) / n as f64)).collect();
        Self::with_offset(samples, phase_offset)
    }

    /// One real per line; the grid size is the number of lines and must be a
    /// power of two.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| LabError::Io(e.to_string()))?;
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| LabError::Io(e.to_string()))?;
            let field = rec.get(0).unwrap_or("").trim();
            let v: f64 = field
                .parse()
                .map_err(|_| LabError::Parse { pos: line + 1, msg: format!("not a number: {field:?}") })?;
            samples.push(v);
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn phase_offset(&self) -> f64 {
        self.phase_offset
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * (k as f64 + self.phase_offset) / self.samples.len() as f64
    }
}

/// How the Fourier coefficients of q were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterDiagnostics {
    /// max_m |P_n(m) − P_{n/2}(m)| between the full and the half grid.
    pub refinement_delta: f64,
    pub extrapolated: bool,
    pub grid: usize,
}

/// Refinement deltas above this are treated as quadrature failure.
pub const OUTER_DELTA_LIMIT: f64 = 1e-3;

// Trapezoid coefficients q̂(0..=mmax) on a grid with the given offset.
fn trapezoid_coeffs(samples: &[f64], offset: f64, mmax: usize) -> Vec<C64> {
    let n = samples.len();
    let mut buf: Vec<C64> = samples.iter().map(|&v| c(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=mmax)
        .map(|m| buf[m] / n as f64 * C64::from_polar(1.0, -2.0 * PI * m as f64 * offset / n as f64))
        .collect()
}

// Coefficients of P with Re P = q on the circle and P(0) real.
fn herglotz_coeffs(q: &LogModulus, mmax: usize) -> Result<(Vec<C64>, OuterDiagnostics)> {
    let n = q.len();
    if n < 2 * (mmax + 1) {
        return Err(LabError::Aliasing { grid: n, needed: 2 * (mmax + 1) });
    }
    let full = trapezoid_coeffs(q.samples(), q.phase_offset(), mmax);
    let to_p = |v: &[C64]| -> Vec<C64> {
        v.iter().enumerate().map(|(m, z)| if m == 0 { c(z.re, 0.0) } else { z * 2.0 }).collect()
    };
    let pf = to_p(&full);
    if n / 2 < 2 * (mmax + 1) {
        return Ok((pf, OuterDiagnostics { refinement_delta: f64::NAN, extrapolated: false, grid: n }));
    }
    let half: Vec<f64> = q.samples().iter().step_by(2).cloned().collect();
    let ph = to_p(&trapezoid_coeffs(&half, q.phase_offset() / 2.0, mmax));
    let delta = pf.iter().zip(&ph).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
    // endpoint-type errors of the trapezoid rule at log singularities scale
    // like 1/n, so one Richardson step removes the leading term
    let p: Vec<C64> = pf.iter().zip(&ph).map(|(a, b)| a * 2.0 - b).collect();
    Ok((p, OuterDiagnostics { refinement_delta: delta, extrapolated: true, grid: n }))
}

// Taylor coefficients of exp(P) from m·h_m = Σ_{j=1}^{m} j·P_j·h_{m−j}.
fn exp_series(p: &[C64], count: usize) -> Vec<C64> {
    let mut h = vec![C64::new(0.0, 0.0); count];
    h[0] = p[0].exp();
    for m in 1..count {
        let mut acc = C64::new(0.0, 0.0);
        for j in 1..=m.min(p.len() - 1) {
            acc += p[j] * (j as f64) * h[m - j];
        }
        h[m] = acc / m as f64;
    }
    h
}

fn tail_estimate(h: &[C64], keep: usize) -> f64 {
    if h.len() <= keep + 1 {
        return 0.0;
    }
    let computed: f64 = h[keep + 1..].iter().map(|z| z.norm()).sum();
    let last = h[h.len() - 1].norm();
    let prev = h[h.len() - 2].norm();
    let beyond = if prev > 0.0 && last < prev {
        let rho = last / prev;
        last * rho / (1.0 - rho)
    } else {
        last * (h.len() - keep) as f64
    };
    computed + beyond
}

/// Outer function with log|h| = q on the circle, returned with diagnostics.
/// The exponent is exp(q̂(0) + 2Σ_{m≥1} q̂(m) z^m), so h(0) = exp(∫q) > 0.
pub fn outer_with_diagnostics(q: &LogModulus, m: usize) -> Result<(SymbolSeries, OuterDiagnostics)> {
    let n = q.len();
    if n < 2 * (m + 1) {
        return Err(LabError::Aliasing { grid: n, needed: 2 * (m + 1) });
    }
    let extra = (2 * m + 16).min(n / 2 - 1).max(m);
    let extra = if n / 2 >= 2 * (extra + 1) { extra } else { (n / 4).saturating_sub(1).max(m) };
    let (p, diag) = herglotz_coeffs(q, extra)?;
    if diag.refinement_delta.is_finite() && diag.refinement_delta > OUTER_DELTA_LIMIT {
        return Err(LabError::NonConvergence(format!(
            "Fourier coefficients of the log-modulus moved by {:.3e} between grids {} and {}",
            diag.refinement_delta,
            n / 2,
            n
        )));
    }
    let h = exp_series(&p, extra + 1);
    let tail = tail_estimate(&h, m);
    let taylor = h[..=m].to_vec();
    Ok((SymbolSeries::new(taylor, tail, "outer")?, diag))
}

/// Outer function with log|h| = q on the circle, truncated after z^M.
pub fn outer_from_log_modulus(q: &LogModulus, m: usize) -> Result<SymbolSeries> {
    outer_with_diagnostics(q, m).map(|(h, _)| h)
}

// Outer function with the truncation chosen from the coefficient decay.
fn outer_auto(q: &LogModulus, max_terms: usize, rel_floor: f64) -> Result<(SymbolSeries, OuterDiagnostics)> {
    let n = q.len();
    let mmax = max_terms.min(n / 8).max(1);
    let (full, diag) = outer_with_diagnostics(q, mmax)?;
    let h = full.taylor();
    let peak = h.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let window = 8;
    let mut keep = h.len() - 1;
    for m in 1..h.len().saturating_sub(window) {
        if h[m..m + window].iter().all(|z| z.norm() <= rel_floor * peak) {
            keep = m - 1;
            break;
        }
    }
    let dropped: f64 = h[keep + 1..].iter().map(|z| z.norm()).sum();
    let series = SymbolSeries::new(h[..=keep].to_vec(), dropped + full.tail_bound(), "outer")?;
    Ok((series, diag))
}

/// Three-valued evidence flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub interior_min_modulus: f64,
    pub boundary_min_modulus: f64,
    pub boundary_max_modulus: f64,
    pub unit_level_measure_estimate: f64,
    /// None when refinement indicates divergence to −∞ or |g| ≤ 1 somewhere.
    pub log_gap_integral: Option<f64>,
    pub log_gap_estimates: Vec<(usize, f64)>,
    pub in_e: Tri,
    pub in_e0: Tri,
    pub in_e1: Tri,
    pub boundary_grid: usize,
    pub angular_grid: usize,
    pub radii: Vec<f64>,
}

fn radial_grid() -> Vec<f64> {
    let mut r = vec![0.0];
    r.extend((1..=14).map(|j| 1.0 - 2f64.powi(-j)));
    r
}

/// (min, max) of |g| over the radial grid plus the circle, 2^12 angles each.
pub fn modulus_range(g: &SymbolSeries) -> (f64, f64) {
    let na = (1usize << 12).max((2 * (g.degree() + 1)).next_power_of_two());
    let mut radii = radial_grid();
    radii.push(1.0);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for r in radii {
        for v in eval_on_grid(g.taylor(), r, na, 0.0) {
            lo = lo.min(v.norm());
            hi = hi.max(v.norm());
        }
    }
    (lo, hi)
}

fn log_gap_estimate(g: &SymbolSeries, n: usize) -> Option<f64> {
    let vals = eval_on_grid(g.taylor(), 1.0, n, 0.5);
    let mut acc = 0.0;
    for v in &vals {
        let gap = v.norm() - 1.0;
        if gap <= 0.0 {
            return None;
        }
        acc += gap.ln();
    }
    Some(acc / n as f64)
}

/// Grid evidence for the classes of symbols with g(𝔻) ∩ 𝔻 = ∅.
pub fn class_check(g: &SymbolSeries) -> ClassReport {
    let nb = DEFAULT_GRID.max((2 * (g.degree() + 1)).next_power_of_two());
    let na = 1usize << 12;
    let radii = radial_grid();
    let mut interior_min = f64::INFINITY;
    for &r in &radii {
        for v in eval_on_grid(g.taylor(), r, na, 0.0) {
            interior_min = interior_min.min(v.norm());
        }
    }
    let bvals = eval_on_grid(g.taylor(), 1.0, nb, 0.0);
    let moduli: Vec<f64> = bvals.iter().map(|z| z.norm()).collect();
    let bmin = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    let bmax = moduli.iter().cloned().fold(0.0, f64::max);
    let unit_tol = 1e-9;
    let level_count = moduli.iter().filter(|&&m| (m - 1.0).abs() <= unit_tol).count();
    let level = level_count as f64 / nb as f64;

    let mut estimates = Vec::new();
    let mut log_gap = None;
    if bmin >= 1.0 - 1e-12 {
        let sizes = [1usize << 10, 1 << 12, 1 << 14, 1 << 16];
        let mut finite = true;
        for &n in &sizes {
            match log_gap_estimate(g, n.max(nb.min(1 << 16))) {
                Some(v) => estimates.push((n, v)),
                None => {
                    finite = false;
                    break;
                }
            }
        }
        if finite {
            let diffs: Vec<f64> = estimates.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
            let scale = estimates.last().map(|e| e.1.abs().max(1.0)).unwrap_or(1.0);
            let stalls = diffs
                .windows(2)
                .filter(|d| d[0] > 1e-9 * scale && d[1] > 0.6 * d[0])
                .count();
            if stalls < 2 {
                log_gap = estimates.last().map(|e| e.1);
            }
        }
    }

    let in_e = if interior_min >= 1.0 - 1e-9 && level < 1e-3 {
        Tri::Yes
    } else if interior_min < 1.0 - 1e-6 || level > 1e-2 {
        Tri::No
    } else {
        Tri::Undetermined
    };

    // unit-level runs on the boundary grid, as (start, end) cyclic index ranges
    let near: Vec<bool> = moduli.iter().map(|&m| m - 1.0 <= 1e-8).collect();
    let runs = cyclic_runs(&near);
    let in_e0 = if in_e != Tri::Yes || g.tail_bound() > 1e-6 {
        if in_e == Tri::No { Tri::No } else { Tri::Undetermined }
    } else {
        let at_one = (moduli[0] - 1.0).abs() <= 1e-8;
        let single_run_at_one = runs.len() == 1 && run_contains(runs[0], 0, nb);
        if at_one && single_run_at_one {
            Tri::Yes
        } else if !at_one && moduli[0] > 1.0 + 1e-6 || runs.iter().any(|&r| !run_contains(r, 0, nb)) {
            Tri::No
        } else {
            Tri::Undetermined
        }
    };

    let in_e1 = if in_e == Tri::No {
        Tri::No
    } else if runs.is_empty() {
        // log g(𝔻) stays away from the imaginary axis
        if bmin > 1.0 + 1e-6 { Tri::No } else { Tri::Undetermined }
    } else {
        let args: Vec<f64> = runs
            .iter()
            .map(|&(s, e)| {
                let mut best = s;
                let mut k = s;
                loop {
                    if moduli[k] < moduli[best] {
                        best = k;
                    }
                    if k == e {
                        break;
                    }
                    k = (k + 1) % nb;
                }
                bvals[best].arg()
            })
            .collect();
        let spread = args
            .iter()
            .flat_map(|a| args.iter().map(move |b| circ_dist(*a, *b)))
            .fold(0.0, f64::max);
        if spread <= 1e-3 {
            if in_e == Tri::Yes { Tri::Yes } else { Tri::Undetermined }
        } else if spread > 0.1 {
            Tri::No
        } else {
            Tri::Undetermined
        }
    };

    ClassReport {
        interior_min_modulus: interior_min,
        boundary_min_modulus: bmin,
        boundary_max_modulus: bmax,
        unit_level_measure_estimate: level,
        log_gap_integral: log_gap,
        log_gap_estimates: estimates,
        in_e,
        in_e0,
        in_e1,
        boundary_grid: nb,
        angular_grid: na,
        radii,
    }
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn cyclic_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let n = mask.len();
    if mask.iter().all(|&b| b) {
        return vec![(0, n - 1)];
    }
    let start = match mask.iter().position(|&b| !b) {
        Some(s) => s,
        None => return vec![],
    };
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        let k = (start + i) % n;
        if mask[k] {
            let s = k;
            let mut e = k;
            while i + 1 < n && mask[(start + i + 1) % n] {
                i += 1;
                e = (start + i) % n;
            }
            runs.push((s, e));
        }
        i += 1;
    }
    runs
}

fn run_contains(run: (usize, usize), k: usize, n: usize) -> bool {
    let (s, e) = run;
    let len = (e + n - s) % n;
    (k + n - s) % n <= len
}

/// Outer h with |h| = |g| − 1 on the circle.
///
/// |g| − 1 is sampled on a half-offset grid so that isolated zeros of the gap
/// never hit a node; the truncation is chosen from the coefficient decay.
pub fn cap_function(g: &SymbolSeries) -> Result<SymbolSeries> {
    cap_function_with_grid(g, CAP_GRID).map(|(h, _)| h)
}

pub fn cap_function_with_grid(g: &SymbolSeries, grid: usize) -> Result<(SymbolSeries, OuterDiagnostics)> {
    if !grid.is_power_of_two() || grid < 64 {
        return Err(LabError::invalid("cap grid must be a power of two of at least 64"));
    }
    let vals = eval_on_grid(g.taylor(), 1.0, grid, 0.5);
    let gaps: Vec<f64> = vals.iter().map(|z| z.norm() - 1.0).collect();
    let below = gaps.iter().filter(|&&d| d < -1e-12).count();
    if below > 0 {
        return Err(LabError::Hypothesis(format!(
            "|g| < 1 at {below} boundary samples; the cap function needs |g| ≥ 1"
        )));
    }
    let flat = gaps.iter().filter(|&&d| d <= 1e-9).count();
    if flat as f64 / grid as f64 > 1e-3 {
        return Err(LabError::Hypothesis(format!(
            "|g| = 1 on an estimated {:.3e} of the circle; log(|g| - 1) is not integrable",
            flat as f64 / grid as f64
        )));
    }
    if let Some(k) = gaps.iter().position(|&d| d <= 0.0) {
        return Err(LabError::Hypothesis(format!("|g| = 1 at boundary sample {k}; log gap is -inf there")));
    }
    let q = LogModulus::with_offset(gaps.iter().map(|d| d.ln()).collect(), 0.5)?;
    let (h, diag) = outer_auto(&q, 4096, 1e-13)?;
    let label = format!("cap({})", g.label());
    Ok((h.with_label(label), diag))
}

/// Shape p(t) = 1 + β·sin²ᵞ(t/2) of a smooth bump modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpShape {
    pub beta: f64,
    pub gamma: u32,
}

impl BumpShape {
    pub fn eval(&self, t: f64) -> f64 {
        1.0 + self.beta * (t / 2.0).sin().powi(2).powi(self.gamma as i32)
    }
}

/// Chooses a bump with p(1) = 1, p > 1 elsewhere, p ≤ 2 and p ≤ targets_n
/// on the arc |t| ≤ arcs_n.
pub fn bump_shape(arcs: &[f64], targets: &[f64]) -> Result<BumpShape> {
    if arcs.len() != targets.len() {
        return Err(LabError::invalid("arcs and targets differ in length"));
    }
    for (i, (&a, &tg)) in arcs.iter().zip(targets).enumerate() {
        if !(a > 0.0 && a <= PI) {
            return Err(LabError::invalid(format!("arc half-width {a} outside (0, π]")));
        }
        if !(tg > 1.0) || !tg.is_finite() {
            return Err(LabError::Hypothesis(format!(
                "target {tg} on arc {i} is not above 1; a bump with p > 1 off z = 1 cannot meet it"
            )));
        }
        if i > 0 && a > arcs[i - 1] {
            return Err(LabError::invalid("arcs must be nested (non-increasing half-widths)"));
        }
    }
    let beta_for = |gamma: u32| -> f64 {
        arcs.iter().zip(targets).fold(1.0f64, |b, (&a, &tg)| {
            let u = (a / 2.0).sin().powi(2).powi(gamma as i32);
            b.min((tg - 1.0) / u)
        })
    };
    let best = beta_for(16);
    let gamma = (1..=16).find(|&gm| beta_for(gm) >= best * (1.0 - 1e-12)).unwrap_or(16);
    // strict inequalities on the arcs survive rounding of the samples
    let beta = beta_for(gamma) * (1.0 - 1e-9);
    Ok(BumpShape { beta, gamma })
}

/// log p on the default grid for the bump selected by [`bump_shape`].
pub fn smooth_bump_modulus(arcs: &[f64], targets: &[f64]) -> Result<LogModulus> {
    let shape = bump_shape(arcs, targets)?;
    LogModulus::from_fn(DEFAULT_GRID, 0.0, |t| shape.eval(t).ln())
}

/// Outer function with |g| = p for a bump modulus; truncation from decay.
pub fn outer_from_bump(shape: &BumpShape, grid: usize) -> Result<SymbolSeries> {
    let q = LogModulus::from_fn(grid, 0.0, |t| shape.eval(t).ln())?;
    let (g, _) = outer_auto(&q, grid / 8, 1e-15)?;
    Ok(g.with_label(format!("outer(bump beta={:.6e} gamma={})", shape.beta, shape.gamma)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(v: &[f64]) -> SymbolSeries {
        SymbolSeries::from_real(v).unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn boundary_eval_examples() {
        let s = boundary_eval(&poly(&[2.0]), 4).unwrap();
        assert!(s.iter().all(|z| close(*z, c(2.0, 0.0), 1e-15)));
        let s = boundary_eval(&poly(&[2.0, 1.0]), 4).unwrap();
        let want = [c(3.0, 0.0), c(2.0, 1.0), c(1.0, 0.0), c(2.0, -1.0)];
        for (a, b) in s.iter().zip(&want) {
            assert!(close(*a, *b, 1e-15), "{a} vs {b}");
        }
        let s = boundary_eval(&poly(&[0.0, 0.0, 1.0]), 8).unwrap();
        for (k, z) in s.iter().enumerate() {
            let w = C64::from_polar(1.0, 2.0 * PI * k as f64 / 8.0);
            assert!(close(*z, w * w, 1e-14));
        }
    }

    #[test]
    fn boundary_eval_rejects_aliasing_grid() {
        assert!(matches!(boundary_eval(&poly(&[1.0, 1.0, 1.0]), 4), Err(LabError::Aliasing { .. })));
    }

    #[test]
    fn zero_log_modulus_gives_unit_function() {
        let q = LogModulus::new(vec![0.0; 64]).unwrap();
        let h = outer_from_log_modulus(&q, 8).unwrap();
        assert!(close(h.coeff(0), c(1.0, 0.0), 1e-15));
        assert!(h.taylor()[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn outer_recovers_zero_free_polynomial() {
        let q = LogModulus::from_fn(1 << 12, 0.0, |t| (c(3.0, 0.0) + C64::from_polar(1.0, t)).norm().ln() - 2f64.ln())
            .unwrap();
        let h = outer_from_log_modulus(&q, 20).unwrap();
        assert!(close(h.coeff(0), c(1.5, 0.0), 1e-8));
        assert!(close(h.coeff(1), c(0.5, 0.0), 1e-8));
        assert!(h.taylor()[2..].iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn minus_infinity_sample_is_a_hypothesis_error() {
        let mut s = vec![0.0; 16];
        s[3] = f64::NEG_INFINITY;
        assert!(matches!(LogModulus::new(s), Err(LabError::Hypothesis(_))));
    }

    #[test]
    fn cap_of_constant_two_is_one() {
        let h = cap_function(&poly(&[2.0])).unwrap();
        assert!(close(h.coeff(0), c(1.0, 0.0), 1e-12));
        assert!(h.taylor()[1..].iter().all(|z| z.norm() < 1e-12));
    }

    // closed form: cap((3+z)/2) = (3/4)(1+z)^2 / O(z), O outer with |O| = |g| + 1
    #[test]
    fn cap_of_half_plane_symbol_matches_closed_form_modulus() {
        let g = poly(&[1.5, 0.5]);
        let h = cap_function(&g).unwrap();
        let n = 1 << 14;
        let hv = eval_on_grid(h.taylor(), 1.0, n, 0.0);
        let gv = eval_on_grid(g.taylor(), 1.0, n, 0.0);
        let worst = hv.iter().zip(&gv).fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a.norm() - (b.norm() - 1.0)));
        assert!(worst <= 1e-6, "worst excess {worst}");
        let lead = [0.297944, 0.537053, 0.193862, 0.035061, 0.0076809];
        for (m, want) in lead.iter().enumerate() {
            assert!((h.coeff(m).norm() - want).abs() < 2e-6, "coefficient {m}: {}", h.coeff(m).norm());
        }
    }

    #[test]
    fn cap_rejects_unimodular_symbol() {
        assert!(matches!(cap_function(&poly(&[0.0, 1.0])), Err(LabError::Hypothesis(_))));
        assert!(matches!(cap_function(&poly(&[1.0])), Err(LabError::Hypothesis(_))));
    }

    #[test]
    fn class_check_examples() {
        let r = class_check(&poly(&[0.0, 1.0]));
        assert_eq!(r.in_e, Tri::No);
        assert!(r.interior_min_modulus < 1e-12);

        let r = class_check(&poly(&[1.5, 0.5]));
        assert_eq!(r.in_e, Tri::Yes);
        assert!(r.unit_level_measure_estimate < 1e-3);
        assert!(r.log_gap_integral.is_some());
        assert_eq!(r.in_e0, Tri::No);
        assert_eq!(r.in_e1, Tri::Yes);

        let r = class_check(&poly(&[1.0, 1.0]));
        assert_eq!(r.in_e, Tri::No);
        assert!(r.interior_min_modulus <= 0.5 + 1e-12);
    }

    #[test]
    fn log_gap_of_half_plane_symbol_is_finite_and_negative() {
        // ∫ log(|3+e^{it}|/2 − 1) dt/2π; an independent midpoint sum on 2^20 nodes
        let n = 1usize << 20;
        let oracle: f64 = (0..n)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                ((c(3.0, 0.0) + C64::from_polar(1.0, t)).norm() / 2.0 - 1.0).ln()
            })
            .sum::<f64>()
            / n as f64;
        let r = class_check(&poly(&[1.5, 0.5]));
        let v = r.log_gap_integral.unwrap();
        assert!((v - oracle).abs() < 1e-3, "{v} vs {oracle}");
    }

    #[test]
    fn bump_examples() {
        let q = smooth_bump_modulus(&[1.0], &[2.0]).unwrap();
        let p: Vec<f64> = q.samples().iter().map(|v| v.exp()).collect();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&v| v <= 2.0));
        assert!(p[1..].iter().all(|&v| v > 1.0));

        let targets: Vec<f64> = [4.0f64, 16.0, 64.0].iter().map(|k| 2f64.powf(1.0 / k)).collect();
        let arcs = [1.0, 0.5, 1.0 / 3.0];
        let q = smooth_bump_modulus(&arcs, &targets).unwrap();
        for (a, tg) in arcs.iter().zip(&targets) {
            for k in 0..q.len() {
                let t = q.angle(k);
                let t = if t > PI { t - 2.0 * PI } else { t };
                if t.abs() <= *a {
                    assert!(q.samples()[k].exp() <= *tg);
                }
            }
        }
        assert!(smooth_bump_modulus(&[1.0], &[0.5]).is_err());
    }

    #[test]
    fn outer_of_bump_has_bump_modulus() {
        let shape = bump_shape(&[PI, 1.0], &[1.5, 1.1]).unwrap();
        let g = outer_from_bump(&shape, 1 << 12).unwrap();
        let vals = eval_on_grid(g.taylor(), 1.0, 1 << 12, 0.0);
        for (k, z) in vals.iter().enumerate() {
            let t = 2.0 * PI * k as f64 / (1 << 12) as f64;
            assert!((z.norm() - shape.eval(t)).abs() < 1e-10);
        }
        assert!(g.coeff(0).im.abs() < 1e-15 && g.coeff(0).re > 0.0);
    }
}
