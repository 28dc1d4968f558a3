//! Bilateral weighted shifts (T_w x)_n = w_{n+1} x_{n+1} on a symmetric window
//! [−W, W] of ℓ_p(ℤ), and the cumulative products r_n that govern them.

use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{norm_p, ComplexVector, C64};

pub const DEFAULT_WINDOW: i64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSequence {
    weights: Vec<f64>,
    window: i64,
    p: f64,
    label: String,
}

impl WeightSequence {
    /// `weights[i]` is w_{i−W}; the length must be 2W+1.
    pub fn new(weights: Vec<f64>, p: f64, label: impl Into<String>) -> Result<Self> {
        if weights.len() < 3 || weights.len().is_multiple_of(2) {
            return Err(LabError::invalid(format!(
                "a symmetric window needs an odd number (at least 3) of weights, got {}",
                weights.len()
            )));
        }
        if let Some(k) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(LabError::invalid(format!("weight {} at position {k} is not a positive real", weights[k])));
        }
        if !(p >= 1.0) {
            return Err(LabError::invalid(format!("p = {p} is below 1")));
        }
        let window = (weights.len() / 2) as i64;
        Ok(WeightSequence { weights, window, p, label: label.into() })
    }

    pub fn constant(v: f64, window: i64, p: f64) -> Result<Self> {
        if window < 1 {
            return Err(LabError::invalid("window must be at least 1"));
        }
        Self::new(vec![v; (2 * window + 1) as usize], p, format!("const:{v}"))
    }

    /// w_n = 1 for n ≤ 0 and 2 for n > 0.
    pub fn chan_sanders(window: i64, p: f64) -> Result<Self> {
        if window < 1 {
            return Err(LabError::invalid("window must be at least 1"));
        }
        let weights = (-window..=window).map(|n| if n <= 0 { 1.0 } else { 2.0 }).collect();
        Self::new(weights, p, "cs")
    }

    /// One weight per line; the window is inferred from the line count.
    pub fn from_csv(path: &Path, p: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| LabError::Io(e.to_string()))?;
        let mut weights = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| LabError::Io(e.to_string()))?;
            let field = rec.get(0).unwrap_or("").trim();
            weights.push(
                field
                    .parse::<f64>()
                    .map_err(|_| LabError::Parse { pos: line + 1, msg: format!("not a number: {field:?}") })?,
            );
        }
        Self::new(weights, p, format!("csv:{}", path.display()))
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn get(&self, n: i64) -> Option<f64> {
        if n.abs() <= self.window {
            Some(self.weights[(n + self.window) as usize])
        } else {
            None
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// r_n on [−W, W], stored as ln r_n so that long products neither overflow
/// nor underflow. The plain products are kept too while they are normal
/// floats; for dyadic weights they are exact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RSequence {
    ln_r: Vec<f64>,
    #[serde(skip)]
    direct: Vec<f64>,
    window: i64,
}

impl RSequence {
    pub fn window(&self) -> i64 {
        self.window
    }

    pub fn ln(&self, n: i64) -> f64 {
        self.ln_r[(n + self.window) as usize]
    }

    pub fn value(&self, n: i64) -> f64 {
        let i = (n + self.window) as usize;
        if self.direct[i].is_normal() {
            self.direct[i]
        } else {
            self.ln_r[i].exp()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (-self.window..=self.window).map(|n| self.value(n)).collect()
    }
}

/// r₀ = 1, r_n = (w₁⋯w_n)⁻¹ for n > 0, r_n = w_{n+1}⋯w₀ for n < 0.
pub fn r_sequence(w: &WeightSequence) -> RSequence {
    let wn = w.window;
    let mut ln_r = vec![0.0; (2 * wn + 1) as usize];
    let mut direct = vec![1.0; (2 * wn + 1) as usize];
    let (mut acc, mut prod) = (0.0, 1.0);
    for n in 1..=wn {
        let wv = w.get(n).unwrap();
        acc -= wv.ln();
        prod /= wv;
        ln_r[(n + wn) as usize] = acc;
        direct[(n + wn) as usize] = prod;
    }
    (acc, prod) = (0.0, 1.0);
    for n in (-wn..0).rev() {
        let wv = w.get(n + 1).unwrap();
        acc += wv.ln();
        prod *= wv;
        ln_r[(n + wn) as usize] = acc;
        direct[(n + wn) as usize] = prod;
    }
    RSequence { ln_r, direct, window: wn }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BwsReport {
    pub label: String,
    pub window: i64,
    pub p: f64,
    pub r_bounded: bool,
    pub sup_r: f64,
    /// min of r_n over n in the outer quarter [3W/4, W].
    pub forward_outer_min: f64,
    /// min of r_{−n} over the same range.
    pub backward_outer_min: f64,
    pub liminf_forward_zero: bool,
    pub liminf_backward_positive: bool,
    pub whc_candidate: Evidence,
    pub norm_hypercyclic: Evidence,
    pub horizon_note: &'static str,
}

const HORIZON_NOTE: &str = "finite-horizon evidence: liminf read as min over the outer quarter of the window";

/// Window-scale evidence for the weak hypercyclicity criterion: p ≥ 2,
/// r bounded, liminf r_n = 0; and for failure of norm hypercyclicity.
pub fn classify_bws(w: &WeightSequence) -> BwsReport {
    let r = r_sequence(w);
    let wn = r.window;
    let q = (3 * wn) / 4;
    let inner_max = (-q..=q).map(|n| r.ln(n)).fold(f64::NEG_INFINITY, f64::max);
    let outer_max = (q..=wn).chain(-wn..=-q).map(|n| r.ln(n)).fold(f64::NEG_INFINITY, f64::max);
    let ln_sup = inner_max.max(outer_max);
    let bounded = outer_max <= inner_max + 1e-12;
    let fwd_min = (q..=wn).map(|n| r.ln(n)).fold(f64::INFINITY, f64::min);
    let bwd_min = (q..=wn).map(|n| r.ln(-n)).fold(f64::INFINITY, f64::min);
    let thresh = ln_sup + (1e-3f64).ln();
    let liminf_zero = fwd_min <= thresh;
    let back_pos = bwd_min > thresh;

    let whc = if w.p < 2.0 {
        Evidence::Undetermined
    } else if bounded && liminf_zero {
        Evidence::Yes
    } else {
        Evidence::No
    };
    // the expanding case: ‖T x‖ ≥ inf w·‖x‖ keeps every orbit away from 0
    let inf_w = w.weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let nhc = if (bounded && back_pos) || inf_w >= 1.0 { Evidence::No } else { Evidence::Undetermined };
    BwsReport {
        label: w.label.clone(),
        window: wn,
        p: w.p,
        r_bounded: bounded,
        sup_r: ln_sup.exp(),
        forward_outer_min: fwd_min.exp(),
        backward_outer_min: bwd_min.exp(),
        liminf_forward_zero: liminf_zero,
        liminf_backward_positive: back_pos,
        whc_candidate: whc,
        norm_hypercyclic: nhc,
        horizon_note: HORIZON_NOTE,
    }
}

fn check_inside(w: &WeightSequence, lo: i64, hi: i64) -> Result<()> {
    let wn = w.window;
    if lo < -wn {
        return Err(LabError::WindowOverflow { index: lo, window: wn });
    }
    if hi > wn {
        return Err(LabError::WindowOverflow { index: hi, window: wn });
    }
    Ok(())
}

/// (T_w x)_n = w_{n+1} x_{n+1}.
pub fn shift_apply(w: &WeightSequence, x: &ComplexVector) -> Result<ComplexVector> {
    let Some((lo, hi)) = x.support() else {
        return Ok(ComplexVector::zeros(x.len(), x.offset() - 1));
    };
    check_inside(w, lo - 1, hi)?;
    let y: Vec<C64> = (0..x.len())
        .map(|i| {
            let v = x.entries()[i];
            if v == C64::new(0.0, 0.0) {
                v
            } else {
                v * w.get(x.offset() + i as i64).unwrap()
            }
        })
        .collect();
    ComplexVector::with_offset(y, x.offset() - 1)
}

/// (T_w⁻¹ y)_n = y_{n−1} / w_n.
pub fn shift_inverse(w: &WeightSequence, y: &ComplexVector) -> Result<ComplexVector> {
    let Some((lo, hi)) = y.support() else {
        return Ok(ComplexVector::zeros(y.len(), y.offset() + 1));
    };
    check_inside(w, lo, hi + 1)?;
    let x: Vec<C64> = (0..y.len())
        .map(|i| {
            let v = y.entries()[i];
            if v == C64::new(0.0, 0.0) {
                v
            } else {
                v / w.get(y.offset() + i as i64 + 1).unwrap()
            }
        })
        .collect();
    ComplexVector::with_offset(x, y.offset() + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackwardOrbit {
    pub vectors: Vec<ComplexVector>,
    pub norms: Vec<f64>,
    /// Mass that left the window; always 0 because overflow is an error.
    pub spill_bound: f64,
}

/// x₀ = x, T x_{k+1} = x_k for k < steps.
pub fn shift_backward(w: &WeightSequence, x: &ComplexVector, steps: usize) -> Result<BackwardOrbit> {
    if let Some((lo, hi)) = x.support() {
        check_inside(w, lo, hi + steps as i64)?;
    }
    let mut vectors = vec![x.clone()];
    for _ in 0..steps {
        let next = shift_inverse(w, vectors.last().unwrap())?;
        vectors.push(next);
    }
    let norms = vectors.iter().map(|v| norm_p(v, w.p)).collect::<Result<Vec<_>>>()?;
    Ok(BackwardOrbit { vectors, norms, spill_bound: 0.0 })
}

/// ξ_n = x_n / r_n. In these coordinates T_w is the unweighted backward shift.
pub fn to_g_coords(r: &RSequence, x: &ComplexVector) -> Result<ComplexVector> {
    map_coords(r, x, -1.0)
}

pub fn from_g_coords(r: &RSequence, xi: &ComplexVector) -> Result<ComplexVector> {
    map_coords(r, xi, 1.0)
}

fn map_coords(r: &RSequence, x: &ComplexVector, sign: f64) -> Result<ComplexVector> {
    if let Some((lo, hi)) = x.support() {
        if lo < -r.window || hi > r.window {
            return Err(LabError::WindowOverflow { index: if lo < -r.window { lo } else { hi }, window: r.window });
        }
    }
    let e: Vec<C64> = x
        .entries()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if *v == C64::new(0.0, 0.0) {
                return *v;
            }
            let n = x.offset() + i as i64;
            let rv = r.value(n);
            if sign > 0.0 {
                v * rv
            } else {
                v / rv
            }
        })
        .collect();
    ComplexVector::with_offset(e, x.offset())
}

/// ⟨x, y⟩_G = Σ x_n conj(y_n) / r_n².
pub fn g_inner(r: &RSequence, x: &ComplexVector, y: &ComplexVector) -> Result<C64> {
    Ok(crate::num_core::inner(&to_g_coords(r, x)?, &to_g_coords(r, y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num_core::c;

    #[test]
    fn r_sequence_examples() {
        let r = r_sequence(&WeightSequence::constant(1.0, 10, 2.0).unwrap());
        assert!(r.values().iter().all(|&v| v == 1.0));
        let r = r_sequence(&WeightSequence::chan_sanders(10, 2.0).unwrap());
        for n in -10..=10i64 {
            let want = if n > 0 { 2f64.powi(-n as i32) } else { 1.0 };
            assert!((r.value(n) - want).abs() <= 1e-15 * want);
        }
        let r = r_sequence(&WeightSequence::constant(2.0, 10, 2.0).unwrap());
        for n in -10..=10i64 {
            assert!((r.value(n) / 2f64.powi(-n as i32) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn r_sequence_survives_long_windows() {
        let r = r_sequence(&WeightSequence::chan_sanders(4096, 2.0).unwrap());
        assert!((r.ln(4096) + 4096.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn classify_examples() {
        let v = classify_bws(&WeightSequence::chan_sanders(256, 2.0).unwrap());
        assert_eq!(v.whc_candidate, Evidence::Yes);
        assert_eq!(v.norm_hypercyclic, Evidence::No);
        let v = classify_bws(&WeightSequence::constant(1.0, 256, 2.0).unwrap());
        assert_eq!(v.whc_candidate, Evidence::No);
        assert!(!v.liminf_forward_zero);
        // r_{−n} = 2ⁿ is unbounded, so the sufficient condition does not apply
        let v = classify_bws(&WeightSequence::constant(2.0, 256, 2.0).unwrap());
        assert!(!v.r_bounded);
        assert_eq!(v.whc_candidate, Evidence::No);
        assert_eq!(v.norm_hypercyclic, Evidence::No);
    }

    #[test]
    fn shift_examples() {
        let w = WeightSequence::constant(1.0, 8, 2.0).unwrap();
        let e0 = ComplexVector::basis(0, 3, -1).unwrap();
        let y = shift_apply(&w, &e0).unwrap();
        assert_eq!(y.get(-1), c(1.0, 0.0));
        assert_eq!(y.norm(), 1.0);

        let cs = WeightSequence::chan_sanders(8, 2.0).unwrap();
        let e0 = ComplexVector::basis(0, 1, 0).unwrap();
        let orb = shift_backward(&cs, &e0, 3).unwrap();
        for k in 0..=3 {
            assert_eq!(orb.vectors[k].get(k as i64), c(2f64.powi(-(k as i32)), 0.0));
            assert_eq!(orb.norms[k], 2f64.powi(-(k as i32)));
        }
        let edge = ComplexVector::basis(8, 1, 8).unwrap();
        assert!(matches!(shift_backward(&cs, &edge, 1), Err(LabError::WindowOverflow { .. })));
        let low = ComplexVector::basis(-8, 1, -8).unwrap();
        assert!(matches!(shift_apply(&cs, &low), Err(LabError::WindowOverflow { .. })));
    }

    #[test]
    fn g_coordinates_turn_the_shift_into_a_translation() {
        let cs = WeightSequence::chan_sanders(64, 2.0).unwrap();
        let r = r_sequence(&cs);
        let x = ComplexVector::with_offset(vec![c(1.0, 2.0), c(-0.5, 0.25), c(3.0, 0.0)], 5).unwrap();
        let tx = shift_apply(&cs, &x).unwrap();
        let xi = to_g_coords(&r, &x).unwrap();
        let txi = to_g_coords(&r, &tx).unwrap();
        for i in 0..3 {
            assert!((txi.entries()[i] - xi.entries()[i]).norm() <= 1e-14 * xi.entries()[i].norm());
        }
        assert_eq!(txi.offset(), xi.offset() - 1);
    }
}
