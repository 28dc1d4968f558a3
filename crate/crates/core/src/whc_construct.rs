//! Constructions of weakly visiting orbits: target schedules, the almost
//! orthogonality bound for Gram data, the staged θ-schedule for weighted
//! shifts with its backward-summability assembly, and a staged search for
//! a coanalytic Toeplitz orbit with slow growth along a subsequence.
//!
//! Shift instances work in G-coordinates ξ_n = x_n / r_n, where the shift
//! is a plain translation. Inner products ⟨·,·⟩₀ are exact sums over ξ and
//! X-norms are evaluated from ln r_n so that far-right translates whose
//! entries underflow still carry a finite logarithmic norm.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{c, inner, max_eigenvalue, ComplexVector, DenseHermitian, C64, DENSE_EIG_LIMIT};
use crate::orbit_lab::{superpoly_profile, OrbitProfile, SuperpolyReport};
use crate::shifts::{r_sequence, RSequence, WeightSequence};
use crate::symbols::{bump_shape, outer_from_bump, BumpShape, DEFAULT_GRID};
use crate::toeplitz_ops::{build, Flavor};

// ---------------------------------------------------------------------------
// target schedules

/// Number of times target n has occurred by its last stage, and the
/// normalized running sum of c_{φ(j)} there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRatio {
    pub target: usize,
    pub occurrences: usize,
    pub last_stage: usize,
    /// (1/d_m) Σ_{j ≤ k} c_{φ(j)} with m occurrences and k the last stage.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiMap {
    /// φ(1), φ(2), …; targets are numbered from 1.
    pub values: Vec<usize>,
    /// Repetition count of the pattern 1, …, s in block s; `None` when no
    /// admissible count exists below the horizon.
    pub block_reps: Vec<Option<usize>>,
    pub complete_blocks: usize,
    pub ratios: Vec<ScheduleRatio>,
    /// Ratio for target 1 at the horizon.
    pub final_ratio: f64,
}

/// φ(j) = ((j − 1) mod K) + 1, so target k occurs at stages k, k + K, ….
pub fn cyclic_phi(targets: usize, len: usize) -> Result<Vec<usize>> {
    if targets == 0 {
        return Err(LabError::invalid("cyclic schedule needs at least one target"));
    }
    Ok((0..len).map(|j| j % targets + 1).collect())
}

/// Block schedule for targets with sizes c_n and a growth budget d_n.
///
/// With v_s = max(c_1, …, c_s) and w_n = d_n / n, block s repeats the
/// pattern 1, …, s exactly r_s times where r_s = max(s·r_{s−1}, least r
/// with s·v_s / w_r ≤ 1/s) and r_0 = 1. Every target then occurs with
/// frequency tending to zero relative to the budget.
pub fn phi_map(cn: &dyn Fn(usize) -> f64, dn: &dyn Fn(usize) -> f64, horizon: usize) -> Result<PhiMap> {
    if horizon < 2 {
        return Err(LabError::invalid("horizon must be at least 2"));
    }
    let root = (horizon as f64).sqrt().ceil() as usize;
    let ratio_at = |n: usize| n as f64 / dn(n);
    for n in [1, root, horizon] {
        if !(dn(n) > 0.0 && dn(n).is_finite()) {
            return Err(LabError::invalid(format!("budget d({n}) must be positive and finite")));
        }
    }
    if !(ratio_at(horizon) < ratio_at(root)) {
        return Err(LabError::Hypothesis(format!(
            "n/d_n does not decrease: {:.4e} at n = {root}, {:.4e} at n = {horizon}",
            ratio_at(root),
            ratio_at(horizon)
        )));
    }
    let mut values = Vec::with_capacity(horizon);
    let mut block_reps = Vec::new();
    let mut complete = 0;
    let mut prev_r = 1usize;
    let mut vmax = 0.0f64;
    let mut s = 1usize;
    while values.len() < horizon {
        let cs = cn(s);
        if !(cs > 0.0 && cs.is_finite()) {
            return Err(LabError::invalid(format!("target size c({s}) must be positive and finite")));
        }
        vmax = vmax.max(cs);
        let sf = s as f64;
        let least = (1..=horizon).find(|&r| sf * vmax * r as f64 / dn(r) <= 1.0 / sf);
        let reps = least.map(|r| r.max(s.saturating_mul(prev_r)));
        block_reps.push(reps);
        let count = reps.unwrap_or(usize::MAX);
        let mut done = 0usize;
        'fill: while done < count {
            for n in 1..=s {
                if values.len() == horizon {
                    break 'fill;
                }
                values.push(n);
            }
            done += 1;
        }
        if done == count {
            complete += 1;
        }
        prev_r = reps.unwrap_or(usize::MAX);
        s += 1;
    }
    if complete < 2 {
        return Err(LabError::Exhausted {
            stage: complete,
            reason: format!("horizon {horizon} does not hold two complete blocks"),
        });
    }
    let ratios = schedule_ratios(&values, cn, dn);
    let final_ratio = ratios.first().map(|r| r.ratio).unwrap_or(0.0);
    Ok(PhiMap { values, block_reps, complete_blocks: complete, ratios, final_ratio })
}

fn schedule_ratios(values: &[usize], cn: &dyn Fn(usize) -> f64, dn: &dyn Fn(usize) -> f64) -> Vec<ScheduleRatio> {
    let top = values.iter().copied().max().unwrap_or(0);
    let sizes: Vec<f64> = (0..=top).map(|n| if n == 0 { 0.0 } else { cn(n) }).collect();
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for &v in values {
        acc += sizes[v];
        prefix.push(acc);
    }
    let mut occ = vec![0usize; top + 1];
    let mut last = vec![0usize; top + 1];
    for (j, &v) in values.iter().enumerate() {
        occ[v] += 1;
        last[v] = j + 1;
    }
    (1..=top)
        .filter(|&n| occ[n] > 0)
        .map(|n| ScheduleRatio {
            target: n,
            occurrences: occ[n],
            last_stage: last[n],
            ratio: prefix[last[n] - 1] / dn(occ[n]),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// almost orthogonal families

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub count: usize,
    /// Partial sums of ‖a_n‖⁻².
    pub inv_norm_sq_partial: Vec<f64>,
    /// Partial sums of |⟨u_m, u_n⟩|² over m < n ≤ N for the normalized family.
    pub cross_partial: Vec<f64>,
    pub cross_total: f64,
    /// 1 + √(r/2).
    pub stated_bound: f64,
    /// 1 + √(2r), an upper bound for the largest Gram eigenvalue.
    pub sound_bound: f64,
    pub max_gram_eigenvalue: Option<f64>,
    pub stated_bound_violated: bool,
    /// min_n max_y |⟨a_n, y⟩| over the battery; zero for an empty battery.
    pub score: f64,
    pub sum_diverges_evidence: bool,
    pub cross_finite_evidence: bool,
}

/// Gram data of a family a_1, …, a_N against a battery of functionals.
///
/// With u_n = a_n/‖a_n‖ and r = Σ_{m<n} |⟨u_m, u_n⟩|², the Gram matrix is
/// I + E with ‖E‖ ≤ ‖E‖_HS = √(2r), so 1 + √(2r) bounds its spectrum.
/// Divergence of Σ‖a_n‖⁻² together with r < ∞ forces the scores to 0.
pub fn gram_check(vectors: &[ComplexVector], battery: &[ComplexVector]) -> Result<GramReport> {
    gram_check_with(vectors, battery, &inner)
}

/// [`gram_check`] for an arbitrary inner product.
pub fn gram_check_with(
    vectors: &[ComplexVector],
    battery: &[ComplexVector],
    ip: &dyn Fn(&ComplexVector, &ComplexVector) -> C64,
) -> Result<GramReport> {
    if vectors.is_empty() {
        return Err(LabError::invalid("empty family"));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| ip(v, v).re.max(0.0).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(LabError::invalid(format!("vector {i} of the family is zero")));
    }
    let m = vectors.len();
    let mut inv = Vec::with_capacity(m);
    let mut cross = Vec::with_capacity(m);
    let mut gram = DMatrix::from_element(m, m, c(0.0, 0.0));
    let (mut s, mut r) = (0.0, 0.0);
    for n in 0..m {
        s += norms[n].powi(-2);
        gram[(n, n)] = c(1.0, 0.0);
        for k in 0..n {
            let g = ip(&vectors[k], &vectors[n]) / (norms[k] * norms[n]);
            gram[(k, n)] = g;
            gram[(n, k)] = g.conj();
            r += g.norm_sqr();
        }
        inv.push(s);
        cross.push(r);
    }
    let stated = 1.0 + (r / 2.0).sqrt();
    let sound = 1.0 + (2.0 * r).sqrt();
    let max_eig = if m <= DENSE_EIG_LIMIT { Some(max_eigenvalue(&DenseHermitian::with_tolerance(gram, 1e-9)?)?) } else { None };
    let score = if battery.is_empty() {
        0.0
    } else {
        vectors
            .iter()
            .map(|a| battery.iter().map(|y| ip(a, y).norm()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    };
    let half = m / 2;
    let enough = m >= 4;
    let diverges = enough && inv[m - 1] - inv[half - 1] >= 0.1 * inv[m - 1];
    let finite = enough && cross[m - 1] - cross[half - 1] <= 0.1 * cross[m - 1];
    Ok(GramReport {
        count: m,
        inv_norm_sq_partial: inv,
        cross_partial: cross,
        cross_total: r,
        stated_bound: stated,
        sound_bound: sound,
        max_gram_eigenvalue: max_eig,
        stated_bound_violated: max_eig.is_some_and(|e| e > stated + 1e-12),
        score,
        sum_diverges_evidence: diverges,
        cross_finite_evidence: finite,
    })
}

// ---------------------------------------------------------------------------
// weighted shift instance

/// A bilateral weighted shift with finitely supported targets u_{k,0} and
/// their full orbits u_{k,n} = Tⁿ u_{k,0}, n ∈ ℤ.
#[derive(Debug, Clone)]
pub struct WhcInstance {
    weights: WeightSequence,
    r: RSequence,
    /// Targets in G-coordinates.
    targets: Vec<ComplexVector>,
    sizes: Vec<f64>,
    op_norm: f64,
}

impl WhcInstance {
    pub fn new(weights: WeightSequence, targets: Vec<ComplexVector>) -> Result<Self> {
        if targets.is_empty() {
            return Err(LabError::invalid("at least one target is needed"));
        }
        let r = r_sequence(&weights);
        let win = weights.window();
        let r_max = (-win..=win).map(|n| r.ln(n)).fold(f64::NEG_INFINITY, f64::max);
        if r_max > 50.0 {
            return Err(LabError::Hypothesis(format!(
                "r_n is not bounded on the window (ln max = {r_max:.2}); the G-norm does not dominate the space norm"
            )));
        }
        let op_norm = weights.weights().iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if op_norm <= 1.0 {
            return Err(LabError::NonExpanding { norm: op_norm });
        }
        let mut xi = Vec::with_capacity(targets.len());
        for (i, t) in targets.iter().enumerate() {
            let (lo, hi) = t.support().ok_or_else(|| LabError::invalid(format!("target {} is zero", i + 1)))?;
            if lo < -win || hi > win {
                return Err(LabError::WindowOverflow { index: if lo < -win { lo } else { hi }, window: win });
            }
            let (trimmed, _) = t.rewindow(lo, (hi - lo + 1) as usize);
            xi.push(crate::shifts::to_g_coords(&r, &trimmed)?);
        }
        let sizes = xi.iter().map(|v| v.norm()).collect();
        Ok(WhcInstance { weights, r, targets: xi, sizes, op_norm })
    }

    /// Weights 1 on n ≤ 0 and 2 on n > 0.
    pub fn chan_sanders(window: i64, targets: Vec<ComplexVector>) -> Result<Self> {
        Self::new(WeightSequence::chan_sanders(window, 2.0)?, targets)
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    /// c_k = ‖u_{k,0}‖₀, the constant bound of the G-norms along the orbit.
    pub fn target_size(&self, k: usize) -> f64 {
        self.sizes[k - 1]
    }

    pub fn operator_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn window(&self) -> i64 {
        self.weights.window()
    }

    pub fn weights(&self) -> &WeightSequence {
        &self.weights
    }

    pub fn r(&self) -> &RSequence {
        &self.r
    }

    /// u_{k,n} in G-coordinates.
    pub fn orbit_xi(&self, k: usize, n: i64) -> ComplexVector {
        let t = &self.targets[k - 1];
        ComplexVector::with_offset(t.entries().to_vec(), t.offset() - n).expect("non-empty target")
    }

    /// ⟨u_{a,n}, u_{b,m}⟩₀ without materializing the translates.
    fn lag_inner(&self, a: usize, n: i64, b: usize, m: i64) -> C64 {
        let (x, y) = (&self.targets[a - 1], &self.targets[b - 1]);
        let (xo, yo) = (x.offset() - n, y.offset() - m);
        let lo = xo.max(yo);
        let hi = (xo + x.len() as i64).min(yo + y.len() as i64);
        let mut acc = c(0.0, 0.0);
        for i in lo..hi {
            acc += x.entries()[(i - xo) as usize] * y.entries()[(i - yo) as usize].conj();
        }
        acc
    }

    fn check_window(&self, v: &ComplexVector) -> Result<()> {
        let win = self.window();
        if let Some((lo, hi)) = v.support() {
            if lo < -win || hi > win {
                return Err(LabError::WindowOverflow { index: if lo < -win { lo } else { hi }, window: win });
            }
        }
        Ok(())
    }

    /// ln ‖x‖_p of the vector with G-coordinates ξ; −∞ for zero.
    pub fn ln_space_norm(&self, xi: &ComplexVector) -> Result<f64> {
        self.check_window(xi)?;
        let p = self.weights.p();
        let terms: Vec<f64> = xi
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, z)| p * (self.r.ln(xi.offset() + i as i64) + z.norm().ln()))
            .collect();
        if terms.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok((top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()) / p)
    }

    /// ℓ₂ pairing ⟨x, y⟩ = Σ x_n conj(y_n) for x given by ξ.
    pub fn pair(&self, xi: &ComplexVector, y: &ComplexVector) -> Result<C64> {
        Ok(inner(xi, &crate::shifts::from_g_coords(&self.r, y)?))
    }
}

/// Real targets with entries in {−1, −3/4, …, 1} on [−radius, radius],
/// each with a non-zero entry at index 0.
pub fn rational_targets(count: usize, radius: i64, seed: u64) -> Vec<ComplexVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut e: Vec<C64> = (-radius..=radius).map(|_| c(rng.gen_range(-4i32..=4) as f64 / 4.0, 0.0)).collect();
            let mid = radius as usize;
            if e[mid].re == 0.0 {
                e[mid] = c(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 0.0);
            }
            ComplexVector::with_offset(e, -radius).expect("non-empty")
        })
        .collect()
}

/// Unit-norm complex functionals supported on [−radius, radius].
pub fn random_battery(count: usize, radius: i64, seed: u64) -> Vec<ComplexVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e: Vec<C64> = (-radius..=radius).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let v = ComplexVector::with_offset(e, -radius).expect("non-empty");
            let n = v.norm();
            v.scale(c(1.0 / n, 0.0))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// θ-schedule

/// Worst ratios of the three stage conditions; each must stay below 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCheck {
    pub stage: usize,
    pub target: usize,
    pub theta: u64,
    /// max |⟨u_{φ(s),θ(r)−θ(s)}, u_{φ(t),θ(j)−θ(t)}⟩₀| · 2^j.
    pub orthogonality_ratio: f64,
    /// max |⟨u_{φ(s),r−θ(s)}, u_{φ(j),r−θ(j)}⟩₀| / (c_{φ(s)} c_{φ(j)} 4^{−j}).
    pub cross_ratio: f64,
    /// ln bound − ln ‖u_{φ(j),−θ(j)}‖; positive when the smallness holds.
    pub smallness_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSchedule {
    pub phi: Vec<usize>,
    pub theta: Vec<u64>,
    pub checks: Vec<StageCheck>,
}

impl ThetaSchedule {
    pub fn stages(&self) -> usize {
        self.theta.len()
    }
}

fn stage_check(inst: &WhcInstance, phi: &[usize], theta: &[u64], j: usize, tau: u64) -> Result<StageCheck> {
    let k = phi[j - 1];
    let ti = tau as i64;
    let scale_j = 2f64.powi(j as i32);
    let mut orth = 0.0f64;
    for s in 1..j {
        for r in 1..j {
            for t in 1..j {
                let ip = inst.lag_inner(phi[s - 1], theta[r - 1] as i64 - theta[s - 1] as i64, phi[t - 1], ti - theta[t - 1] as i64);
                orth = orth.max(ip.norm() * scale_j);
            }
        }
    }
    // translation invariance of ⟨·,·⟩₀ makes this independent of r; a few
    // values of r > θ(j) are sampled anyway
    let mut cross = 0.0f64;
    for s in 1..j {
        let bound = inst.target_size(phi[s - 1]) * inst.target_size(k) * 4f64.powi(-(j as i32));
        for r in [ti + 1, ti + 2, ti + 7] {
            let ip = inst.lag_inner(phi[s - 1], r - theta[s - 1] as i64, k, r - ti);
            cross = cross.max(ip.norm() / bound);
        }
    }
    let margin = if j == 1 {
        f64::INFINITY
    } else {
        let lim = -(theta[j - 2] as f64) * inst.operator_norm().ln() - j as f64 * 2f64.ln();
        lim - inst.ln_space_norm(&inst.orbit_xi(k, -ti))?
    };
    Ok(StageCheck { stage: j, target: k, theta: tau, orthogonality_ratio: orth, cross_ratio: cross, smallness_margin: margin })
}

fn check_passes(ch: &StageCheck) -> bool {
    ch.orthogonality_ratio < 1.0 && ch.cross_ratio < 1.0 && ch.smallness_margin > 0.0
}

/// Greedy θ: θ(1) is the first admissible value (0 by default) and θ(j) the
/// first admissible value above θ(j−1) meeting the orthogonality, cross
/// and smallness conditions of stage j. Overrunning the window is an error.
pub fn build_theta(inst: &WhcInstance, phi: &[usize], admissible: Option<&[u64]>) -> Result<ThetaSchedule> {
    if phi.is_empty() {
        return Err(LabError::invalid("schedule needs at least one stage"));
    }
    if let Some(&bad) = phi.iter().find(|&&k| k == 0 || k > inst.target_count()) {
        return Err(LabError::invalid(format!("target {bad} outside 1..={}", inst.target_count())));
    }
    if let Some(a) = admissible {
        if a.is_empty() || a.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::invalid("admissible set must be non-empty and strictly increasing"));
        }
    }
    let win = inst.window();
    let first = admissible.map(|a| a[0]).unwrap_or(0);
    let mut theta = vec![first];
    let mut checks = vec![stage_check(inst, phi, &theta, 1, first)?];
    for j in 2..=phi.len() {
        let prev = theta[j - 2];
        let hi = inst.targets[phi[j - 1] - 1].last_index();
        let mut cand: Box<dyn Iterator<Item = u64>> = match admissible {
            Some(a) => Box::new(a.iter().copied().filter(move |&t| t > prev)),
            None => Box::new(prev + 1..),
        };
        let found = loop {
            let Some(tau) = cand.next() else {
                return Err(LabError::Exhausted { stage: j, reason: "admissible set exhausted".into() });
            };
            if tau as i64 + hi > win {
                return Err(LabError::WindowOverflow { index: tau as i64 + hi, window: win });
            }
            let ch = stage_check(inst, phi, &theta, j, tau)?;
            if check_passes(&ch) {
                break ch;
            }
        };
        theta.push(found.theta);
        checks.push(found);
    }
    let sched = ThetaSchedule { phi: phi.to_vec(), theta, checks };
    verify_schedule(inst, &sched)?;
    Ok(sched)
}

/// Re-evaluates every stage condition on a finished schedule.
pub fn verify_schedule(inst: &WhcInstance, sched: &ThetaSchedule) -> Result<()> {
    if sched.theta.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Consistency("θ is not strictly increasing".into()));
    }
    for j in 2..=sched.stages() {
        let ch = stage_check(inst, &sched.phi, &sched.theta, j, sched.theta[j - 1])?;
        if !check_passes(&ch) {
            return Err(LabError::Consistency(format!("stage {j} conditions fail on re-check: {ch:?}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// assembly

/// T^{θ(r)} u = u_{φ(r),0} + a_r + b_r for the partial sum u.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSplit {
    pub stage: usize,
    pub target: usize,
    pub theta: u64,
    pub ln_a_norm: f64,
    pub b_norm: f64,
    /// ‖b_r‖ plus 2^{−J} for the terms beyond the last stage.
    pub b_bound: f64,
    pub b_limit: f64,
    /// Distance between the iterated vector and the split, in ‖·‖₀.
    pub decomposition_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assembly {
    /// u = Σ_j u_{φ(j),−θ(j)} in G-coordinates.
    #[serde(skip)]
    pub u: ComplexVector,
    pub ln_u_norm: f64,
    pub splits: Vec<StageSplit>,
    /// Gram data of the a_r over the stages visiting each target.
    pub gram: Vec<(usize, GramReport)>,
    #[serde(skip)]
    a_terms: Vec<ComplexVector>,
    #[serde(skip)]
    b_terms: Vec<ComplexVector>,
}

pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// Builds the partial sum u, splits each T^{θ(r)} u, bounds ‖b_r‖ and
/// checks the split against direct iteration of the weighted map.
pub fn assemble(inst: &WhcInstance, sched: &ThetaSchedule) -> Result<Assembly> {
    let jn = sched.stages();
    let term = |j: usize, n: i64| inst.orbit_xi(sched.phi[j - 1], n);
    let mut u = term(1, -(sched.theta[0] as i64));
    for j in 2..=jn {
        u = u.add(&term(j, -(sched.theta[j - 1] as i64)));
    }
    inst.check_window(&u)?;
    let mut a_terms = Vec::with_capacity(jn);
    let mut b_terms = Vec::with_capacity(jn);
    let mut splits = Vec::with_capacity(jn);
    let tail = 2f64.powi(-(jn as i32));
    let zero = || ComplexVector::zeros(1, 0);
    for r in 1..=jn {
        let th = sched.theta[r - 1] as i64;
        let mut a = zero();
        for k in 1..r {
            a = a.add(&term(k, th - sched.theta[k - 1] as i64));
        }
        let mut b = zero();
        for k in r + 1..=jn {
            b = b.add(&term(k, th - sched.theta[k - 1] as i64));
        }
        let b_norm = inst.ln_space_norm(&b)?.exp();
        let limit = 2f64.powi(-(r as i32));
        if b_norm + tail > limit * (1.0 + 1e-12) {
            return Err(LabError::Consistency(format!(
                "‖b_{r}‖ + 2^-{jn} = {:.3e} exceeds 2^-{r}",
                b_norm + tail
            )));
        }
        splits.push(StageSplit {
            stage: r,
            target: sched.phi[r - 1],
            theta: th as u64,
            ln_a_norm: inst.ln_space_norm(&a)?,
            b_norm,
            b_bound: b_norm + tail,
            b_limit: limit,
            decomposition_error: 0.0,
        });
        a_terms.push(a);
        b_terms.push(b);
    }
    // iterate ξ'_n = w_{n+1} (r_{n+1}/r_n) ξ_{n+1} and compare at each θ(r)
    let win = inst.window();
    let mut cur = u.clone();
    let mut step = 0u64;
    for r in 1..=jn {
        while step < sched.theta[r - 1] {
            let off = cur.offset() - 1;
            if off < -win {
                return Err(LabError::WindowOverflow { index: off, window: win });
            }
            let e: Vec<C64> = cur
                .entries()
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let n = off + i as i64;
                    let w = inst.weights.get(n + 1).unwrap_or(0.0);
                    z * (w * (inst.r.ln(n + 1) - inst.r.ln(n)).exp())
                })
                .collect();
            cur = ComplexVector::with_offset(e, off)?;
            step += 1;
        }
        let split = term(r, 0).add(&a_terms[r - 1]).add(&b_terms[r - 1]);
        let err = cur.sub(&split).norm();
        let scale = split.norm().max(1.0);
        if err > DECOMPOSITION_TOL * scale {
            return Err(LabError::Consistency(format!("stage {r}: iterated orbit differs from the split by {err:.3e}")));
        }
        splits[r - 1].decomposition_error = err;
    }
    let mut gram = Vec::new();
    for k in 1..=inst.target_count() {
        let fam: Vec<ComplexVector> = (1..=jn)
            .filter(|&r| sched.phi[r - 1] == k && a_terms[r - 1].norm() > 0.0)
            .map(|r| a_terms[r - 1].clone())
            .collect();
        if !fam.is_empty() {
            gram.push((k, gram_check(&fam, &[])?));
        }
    }
    let ln_u_norm = inst.ln_space_norm(&u)?;
    Ok(Assembly { u, ln_u_norm, splits, gram, a_terms, b_terms })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetVisit {
    pub target: usize,
    /// Stage attaining the smallest error; `None` when the target is never
    /// scheduled.
    pub best_stage: Option<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitReport {
    pub battery_size: usize,
    pub per_target: Vec<TargetVisit>,
    pub max_error: f64,
}

/// err_k = min over stages r visiting k of max_y |⟨T^{θ(r)}u − u_{k,0}, y⟩|,
/// with the ℓ₂ pairing.
pub fn weak_visit_report(inst: &WhcInstance, sched: &ThetaSchedule, asm: &Assembly, battery: &[ComplexVector]) -> Result<VisitReport> {
    let mut per_target = Vec::new();
    for k in 1..=inst.target_count() {
        let mut best: Option<(usize, f64)> = None;
        for r in (1..=sched.stages()).filter(|&r| sched.phi[r - 1] == k) {
            let diff = asm.a_terms[r - 1].add(&asm.b_terms[r - 1]);
            let mut worst = 0.0f64;
            for y in battery {
                worst = worst.max(inst.pair(&diff, y)?.norm());
            }
            if best.is_none_or(|(_, e)| worst < e) {
                best = Some((r, worst));
            }
        }
        per_target.push(TargetVisit {
            target: k,
            best_stage: best.map(|b| b.0),
            error: best.map(|b| b.1).unwrap_or(f64::INFINITY),
        });
    }
    let max_error = per_target.iter().map(|t| t.error).fold(0.0, f64::max);
    Ok(VisitReport { battery_size: battery.len(), per_target, max_error })
}

// ---------------------------------------------------------------------------
// slow growth along a subsequence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowGrowthConfig {
    pub stages: usize,
    /// Length of the H² window carrying f.
    pub window: usize,
    /// Samples of the circle used for functionals.
    pub grid: usize,
    /// Start from a functional supported on the innermost arc, so later
    /// stages reuse it exactly. Otherwise stage n solves a least-squares
    /// problem on |t| ≤ 1/n.
    pub innermost_support: bool,
    pub max_index: usize,
}

impl SlowGrowthConfig {
    pub fn new(stages: usize, window: usize) -> Self {
        SlowGrowthConfig { stages, window, grid: 1 << 16, innermost_support: true, max_index: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowStage {
    pub stage: usize,
    pub k: usize,
    pub phi_l2: f64,
    pub q_at_k: f64,
    pub density_residual: f64,
    pub density_target: f64,
    pub reused: bool,
    pub orbit_norm: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlowGrowthTrace {
    pub stages: Vec<SlowStage>,
    /// q̃ = q/scale with the doubling cap applied.
    pub q_scale: f64,
    pub bump: BumpShape,
    pub symbol_terms: usize,
    pub symbol_tail: f64,
    pub f_norm: f64,
    /// ℓ₂ mass of the functional beyond the window.
    pub f_truncation: f64,
    pub profile: OrbitProfile,
    pub superpoly: SuperpolyReport,
    pub all_verified: bool,
}

struct Renormalized<'a> {
    q: &'a dyn Fn(f64) -> f64,
    scale: f64,
    cache: Vec<f64>,
}

impl Renormalized<'_> {
    /// q̃(k) = min(q(k)/scale, 2 q̃(k−1)): increasing, below q, and with
    /// 2^{−k} q̃(k) non-increasing.
    fn at(&mut self, k: usize) -> Result<f64> {
        while self.cache.len() <= k {
            let n = self.cache.len();
            // index 0 is never used as a dip; it mirrors q(1)
            let raw = (self.q)(n.max(1) as f64);
            if !raw.is_finite() {
                return Err(LabError::invalid(format!("q({n}) is not finite")));
            }
            if n >= 2 && raw < (self.q)((n - 1) as f64) {
                return Err(LabError::Hypothesis(format!("q decreases between {} and {n}", n - 1)));
            }
            let v = match n {
                0 | 1 => raw / self.scale,
                _ => (raw / self.scale).min(2.0 * self.cache[n - 1]),
            };
            self.cache.push(v);
        }
        Ok(self.cache[k])
    }
}

fn angle(k: usize, l: usize) -> f64 {
    let t = 2.0 * PI * k as f64 / l as f64;
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Coefficients F_j = conj(φ̂(−j)), j = 0..=L/2, of the functional
/// f ↦ ∫ f φ dλ, from samples of φ on L points.
fn functional_coeffs(phi: &[C64], planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let l = phi.len();
    let mut buf: Vec<C64> = phi.iter().map(|z| z.conj() / l as f64).collect();
    planner.plan_fft_forward(l).process(&mut buf);
    buf.truncate(l / 2 + 1);
    buf
}

fn l2_circle(phi: &[C64]) -> f64 {
    (phi.iter().map(|z| z.norm_sqr()).sum::<f64>() / phi.len() as f64).sqrt()
}

fn coeff_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Least squares over functions on |t| ≤ a matching the functional of
/// `prev`, by conjugate gradients on the normal equations.
fn density_step(prev: &[C64], a: f64, planner: &mut FftPlanner<f64>, iterations: usize) -> (Vec<C64>, f64) {
    let l = prev.len();
    let inside: Vec<bool> = (0..l).map(|k| angle(k, l).abs() <= a).collect();
    let target = functional_coeffs(prev, planner);
    let forward = |psi: &[C64], planner: &mut FftPlanner<f64>| functional_coeffs(psi, planner);
    let adjoint = |y: &[C64], planner: &mut FftPlanner<f64>| -> Vec<C64> {
        // transpose of the conjugate-linear map, written for the variable conj(φ)
        let mut buf = vec![c(0.0, 0.0); l];
        buf[..y.len()].copy_from_slice(y);
        planner.plan_fft_inverse(l).process(&mut buf);
        buf.iter().zip(&inside).map(|(z, &m)| if m { z.conj() / l as f64 } else { c(0.0, 0.0) }).collect()
    };
    let mut x: Vec<C64> = prev.iter().zip(&inside).map(|(z, &m)| if m { *z } else { c(0.0, 0.0) }).collect();
    let ax = forward(&x, planner);
    let mut res: Vec<C64> = target.iter().zip(&ax).map(|(t, v)| t - v).collect();
    let mut s = adjoint(&res, planner);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    for _ in 0..iterations {
        if gamma == 0.0 {
            break;
        }
        // φ ↦ F(φ) is conjugate-linear; work with ψ = conj(φ) where it is linear
        let psi_p: Vec<C64> = p.iter().map(|z| z.conj()).collect();
        let q = forward(&psi_p.iter().map(|z| z.conj()).collect::<Vec<_>>(), planner);
        let qq: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in res.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        s = adjoint(&res, planner);
        let g_new: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        let beta = g_new / gamma;
        gamma = g_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
    }
    let fx = functional_coeffs(&x, planner);
    let resid = coeff_norm(&fx.iter().zip(&target).map(|(a, b)| a - b).collect::<Vec<_>>());
    (x, resid)
}

/// Staged search for g with ‖g‖ ≤ 2 on the circle and a non-zero f with
/// ‖(T_g*)^{k_n} f‖ < q(k_n) along a chosen subsequence k_n.
///
/// Stage n keeps a functional φ_n supported on |t| ≤ 1/n with ‖φ_n‖ ≤
/// q̃(k_n)/4; the modulus of g is a smooth bump bounded by 2^{1/k_n} on the
/// same arc and by 2^{1/k_1} on the whole circle, which also limits how
/// much the mass of f outside the innermost arc can grow. Each dip is
/// verified by iterating the truncated operator on the window.
pub fn slow_growth_search(q: &dyn Fn(f64) -> f64, cfg: &SlowGrowthConfig) -> Result<SlowGrowthTrace> {
    if cfg.stages == 0 {
        return Err(LabError::invalid("at least one stage is needed"));
    }
    if cfg.window < 16 || !cfg.grid.is_power_of_two() || cfg.grid < 4 * cfg.window {
        return Err(LabError::invalid("grid must be a power of two of at least four times the window"));
    }
    let q1 = q(1.0);
    if !(q1 > 0.0 && q1.is_finite()) {
        return Err(LabError::invalid("q(1) must be positive and finite"));
    }
    let scale = q1.max(1.0);
    let mut qt = Renormalized { q, scale, cache: Vec::new() };
    for k in 1..=64 {
        qt.at(k)?;
    }
    let l = cfg.grid;
    let mut planner = FftPlanner::new();
    let support = if cfg.innermost_support { 1.0 / cfg.stages as f64 } else { 1.0 };
    let freq = (40.0 / support).ceil();
    let mut phi: Vec<C64> = (0..l)
        .map(|k| {
            let t = angle(k, l);
            let x = t / support;
            if x.abs() < 1.0 {
                C64::from_polar((-1.0 / (1.0 - x * x)).exp(), -freq * t)
            } else {
                c(0.0, 0.0)
            }
        })
        .collect();
    let norm1 = coeff_norm(&functional_coeffs(&phi, &mut planner));
    for z in phi.iter_mut() {
        *z /= norm1;
    }
    let coeffs = functional_coeffs(&phi, &mut planner);
    let f: Vec<C64> = coeffs[..cfg.window].to_vec();
    let f_trunc = coeff_norm(&coeffs[cfg.window..]);

    let mut stages: Vec<SlowStage> = Vec::new();
    for n in 1..=cfg.stages {
        let (residual, target, reused) = if n == 1 {
            (0.0, 0.0, false)
        } else {
            let prev_k = stages[n - 2].k;
            let target = 5f64.powi(1 - n as i32) * qt.at(prev_k)? * 2f64.powi(-(prev_k as i32));
            let arc = 1.0 / n as f64;
            let outside = (0..l).any(|k| angle(k, l).abs() > arc && phi[k] != c(0.0, 0.0));
            if !outside {
                (0.0, target, true)
            } else {
                let (next, resid) = density_step(&phi, arc, &mut planner, 200);
                if resid > target {
                    return Err(LabError::Exhausted {
                        stage: n,
                        reason: format!("least-squares residual {resid:.3e} above target {target:.3e}"),
                    });
                }
                phi = next;
                (resid, target, false)
            }
        };
        let l2 = l2_circle(&phi);
        let start = stages.last().map(|s| s.k + 1).unwrap_or(1);
        let mut k = start;
        while qt.at(k)? / 4.0 < l2 {
            k += 1;
            if k > cfg.max_index {
                return Err(LabError::Exhausted {
                    stage: n,
                    reason: format!("q/4 stays below ‖φ‖ = {l2:.4} up to index {}", cfg.max_index),
                });
            }
        }
        stages.push(SlowStage {
            stage: n,
            k,
            phi_l2: l2,
            q_at_k: qt.at(k)?,
            density_residual: residual,
            density_target: target,
            reused,
            orbit_norm: f64::NAN,
            verified: false,
        });
    }

    let mut arcs = vec![PI];
    let mut targets = vec![2f64.powf(1.0 / stages[0].k as f64)];
    for s in &stages {
        arcs.push(1.0 / s.stage as f64);
        targets.push(2f64.powf(1.0 / s.k as f64));
    }
    let bump = bump_shape(&arcs, &targets)?;
    let g = outer_from_bump(&bump, DEFAULT_GRID)?;
    let op = build(&g, cfg.window, Flavor::Coanalytic)?;
    let horizon = stages.last().map(|s| s.k).unwrap_or(1).max(10);
    let mut norms = Vec::with_capacity(horizon + 1);
    let mut cur = f.clone();
    norms.push(coeff_norm(&cur));
    for step in 1..=horizon {
        cur = op.apply(&cur)?;
        let nv = coeff_norm(&cur);
        if !nv.is_finite() {
            return Err(LabError::Overflow { step });
        }
        norms.push(nv);
    }
    for s in stages.iter_mut() {
        s.orbit_norm = norms[s.k];
        s.verified = s.orbit_norm < s.q_at_k;
    }
    let profile = OrbitProfile::from_norms(norms, format!("T*[{}]", g.label()), "slow-growth functional");
    let superpoly = superpoly_profile(&profile, &[1.0], Some(&|x: f64| q(x)))?;
    let all_verified = stages.iter().all(|s| s.verified);
    Ok(SlowGrowthTrace {
        stages,
        q_scale: scale,
        bump,
        symbol_terms: g.taylor().len(),
        symbol_tail: g.tail_bound(),
        f_norm: coeff_norm(&f),
        f_truncation: f_trunc,
        profile,
        superpoly,
        all_verified,
    })
}
