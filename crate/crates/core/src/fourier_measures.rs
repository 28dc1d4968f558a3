//! Finite measures on the unit circle with normalized arc length, their
//! Fourier coefficients μ̂(n) = ∫ zⁿ dμ, Cesàro means of |μ̂|², density of
//! large-coefficient sets and greedy selection of jointly small indices.
//!
//! Measure grammar, components joined by `+`, each with an optional
//! `w*` weight prefix:
//!
//! ```text
//! atom:t,mass[;t,mass...]   point masses at e^{it}; mass is a+bi
//! arc:a[,centre]            normalized arc length on |t − centre| ≤ a
//! lebesgue                  normalized arc length on the whole circle
//! cantor:ratio,depth        self-similar measure with two equal-weight maps
//! density:<path>            density samples on a uniform grid, one per line
//! ```

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::num_core::{c, C64};

/// Self-similar measure μ = ½ μ∘S₀⁻¹ + ½ μ∘S₁⁻¹ on [0, 2π) with
/// S₀(t) = ρt and S₁(t) = ρt + (1−ρ)2π.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cantor {
    pub ratio: f64,
    pub depth: usize,
}

impl Cantor {
    pub fn new(ratio: f64, depth: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 0.5) || depth == 0 {
            return Err(LabError::invalid("cantor ratio must lie in (0, 1/2) and depth be positive"));
        }
        Ok(Cantor { ratio, depth })
    }

    /// μ̂(ξ) = Π_j ½(1 + e^{iξ(1−ρ)2πρʲ}), stopped when the factors are
    /// within 1e−14 of 1 from then on, or at the declared depth.
    pub fn fourier(&self, xi: f64) -> C64 {
        let b = (1.0 - self.ratio) * TAU;
        let mut acc = c(1.0, 0.0);
        let mut scale = 1.0;
        for _ in 0..self.depth {
            let angle = xi * b * scale;
            // |½(1 + e^{iθ}) − 1| ≤ |θ|/2, and all later angles are smaller
            if angle.abs() < 2e-14 {
                break;
            }
            acc *= (c(1.0, 0.0) + C64::from_polar(1.0, angle)) * 0.5;
            scale *= self.ratio;
        }
        acc
    }

    /// Monte Carlo estimate of μ̂(n) from `samples` random points, each a
    /// random address of length `depth`.
    pub fn monte_carlo(&self, ns: &[i64], samples: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = (1.0 - self.ratio) * TAU;
        let mut acc = vec![c(0.0, 0.0); ns.len()];
        for _ in 0..samples {
            let mut t = 0.0;
            let mut scale = 1.0;
            for _ in 0..self.depth {
                if rng.gen::<bool>() {
                    t += b * scale;
                }
                scale *= self.ratio;
            }
            for (a, &n) in acc.iter_mut().zip(ns) {
                *a += C64::from_polar(1.0, n as f64 * t);
            }
        }
        acc.into_iter().map(|v| v / samples as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arc {
    pub half_width: f64,
    pub centre: f64,
    pub weight: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    /// f(2πk/M), k = 0..M−1; the measure is f dλ.
    pub samples: Vec<C64>,
    pub weight: C64,
    #[serde(skip)]
    coeffs: Vec<C64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CircleMeasure {
    /// (angle, mass)
    pub atoms: Vec<(f64, C64)>,
    pub arcs: Vec<Arc>,
    pub lebesgue: C64,
    pub densities: Vec<Density>,
    pub singular: Vec<(Cantor, C64)>,
    pub label: String,
}

impl CircleMeasure {
    pub fn delta(t: f64) -> Self {
        CircleMeasure { atoms: vec![(t, c(1.0, 0.0))], label: format!("atom:{t},1"), ..Default::default() }
    }

    pub fn lebesgue() -> Self {
        CircleMeasure { lebesgue: c(1.0, 0.0), label: "lebesgue".into(), ..Default::default() }
    }

    pub fn arc(half_width: f64, centre: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= PI) {
            return Err(LabError::invalid("arc half-width must lie in (0, π]"));
        }
        Ok(CircleMeasure {
            arcs: vec![Arc { half_width, centre, weight: c(1.0, 0.0) }],
            label: format!("arc:{half_width},{centre}"),
            ..Default::default()
        })
    }

    pub fn cantor(ratio: f64, depth: usize) -> Result<Self> {
        let k = Cantor::new(ratio, depth)?;
        Ok(CircleMeasure { singular: vec![(k, c(1.0, 0.0))], label: format!("cantor:{ratio},{depth}"), ..Default::default() })
    }

    /// Density samples on a power-of-two grid.
    pub fn density(samples: Vec<C64>) -> Result<Self> {
        let m = samples.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(LabError::invalid("density grid must be a power of two"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(LabError::invalid("density samples must be finite"));
        }
        let mut coeffs = samples.clone();
        FftPlanner::new().plan_fft_inverse(m).process(&mut coeffs);
        for v in coeffs.iter_mut() {
            *v /= m as f64;
        }
        Ok(CircleMeasure {
            densities: vec![Density { samples, weight: c(1.0, 0.0), coeffs }],
            label: format!("density:{m}"),
            ..Default::default()
        })
    }

    pub fn from_density_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| LabError::Io(e.to_string()))?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| LabError::Io(e.to_string()))?;
            let field = rec.get(0).unwrap_or("").trim();
            samples.push(parse_complex(field).map_err(|msg| LabError::Parse { pos: i, msg })?);
        }
        Self::density(samples)
    }

    pub fn scaled(mut self, w: C64) -> Self {
        for a in self.atoms.iter_mut() {
            a.1 *= w;
        }
        for a in self.arcs.iter_mut() {
            a.weight *= w;
        }
        self.lebesgue *= w;
        for d in self.densities.iter_mut() {
            d.weight *= w;
        }
        for s in self.singular.iter_mut() {
            s.1 *= w;
        }
        self.label = format!("{w}*({})", self.label);
        self
    }

    pub fn plus(mut self, other: CircleMeasure) -> Self {
        self.atoms.extend(other.atoms);
        self.arcs.extend(other.arcs);
        self.lebesgue += other.lebesgue;
        self.densities.extend(other.densities);
        self.singular.extend(other.singular);
        self.label = format!("{}+{}", self.label, other.label);
        self
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.1 != c(0.0, 0.0))
    }

    /// Largest |n| the density parts resolve, or None without densities.
    pub fn max_index(&self) -> Option<i64> {
        self.densities.iter().map(|d| (d.samples.len() / 2) as i64).min()
    }

    pub fn fourier_coeff(&self, n: i64) -> Result<C64> {
        let mut acc = c(0.0, 0.0);
        for &(t, m) in &self.atoms {
            acc += m * C64::from_polar(1.0, n as f64 * t);
        }
        for a in &self.arcs {
            let x = n as f64 * a.half_width;
            let sinc = if n == 0 { 1.0 } else { x.sin() / x };
            acc += a.weight * C64::from_polar(sinc, n as f64 * a.centre);
        }
        if n == 0 {
            acc += self.lebesgue;
        }
        for d in &self.densities {
            let m = d.coeffs.len();
            if n.unsigned_abs() as usize > m / 2 {
                return Err(LabError::Aliasing { grid: m, needed: 2 * n.unsigned_abs() as usize });
            }
            acc += d.weight * d.coeffs[n.rem_euclid(m as i64) as usize];
        }
        for (k, w) in &self.singular {
            acc += w * k.fourier(n as f64);
        }
        Ok(acc)
    }

    /// μ̂(0..=n_max).
    pub fn coefficients(&self, n_max: usize) -> Result<Vec<C64>> {
        (0..=n_max as i64).map(|n| self.fourier_coeff(n)).collect()
    }

    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.1.norm()).sum();
        let arcs: f64 = self.arcs.iter().map(|a| a.weight.norm()).sum();
        let dens: f64 = self.densities.iter().map(|d| d.weight.norm() * d.samples.iter().map(|v| v.norm()).sum::<f64>() / d.samples.len() as f64).sum();
        let sing: f64 = self.singular.iter().map(|s| s.1.norm()).sum();
        atoms + arcs + self.lebesgue.norm() + dens + sing
    }
}

/// means_n = (n+1)⁻¹ Σ_{k ≤ n} |μ̂(k)|² for n = 0..=n_max.
pub fn cesaro_profile(mu: &CircleMeasure, n_max: usize) -> Result<Vec<f64>> {
    let coeffs = mu.coefficients(n_max)?;
    let mut acc = 0.0;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(n, v)| {
            acc += v.norm_sqr();
            acc / (n + 1) as f64
        })
        .collect())
}

/// d_n = |{1 ≤ k ≤ n : |μ̂(k)| ≥ eps}| / n for n = 1..=n_max (index n−1).
pub fn density_zero_profile(mu: &CircleMeasure, eps: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(LabError::invalid("eps must be positive"));
    }
    let coeffs = mu.coefficients(n_max)?;
    let mut count = 0usize;
    Ok((1..=n_max)
        .map(|n| {
            if coeffs[n].norm() >= eps {
                count += 1;
            }
            count as f64 / n as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSubsequence {
    pub indices: Vec<usize>,
    /// max_{j ≤ k} |μ̂_j(m_k)| for each k.
    pub maxima: Vec<f64>,
    /// Positions of measures with declared atoms.
    pub atomic: Vec<usize>,
}

/// m₁ < … < m_L with max_{j ≤ min(k, M)} |μ̂_j(m_k)| < 1/k, each the first
/// admissible index after its predecessor.
pub fn select_null_subsequence(measures: &[CircleMeasure], length: usize, horizon: usize) -> Result<NullSubsequence> {
    if measures.is_empty() || length == 0 {
        return Err(LabError::invalid("need at least one measure and a positive length"));
    }
    let coeffs: Vec<Vec<C64>> = measures.iter().map(|m| m.coefficients(horizon)).collect::<Result<_>>()?;
    let atomic = measures.iter().enumerate().filter(|(_, m)| m.has_atoms()).map(|(i, _)| i).collect();
    let mut indices = Vec::with_capacity(length);
    let mut maxima = Vec::with_capacity(length);
    let mut next = 1usize;
    for k in 1..=length {
        let upto = k.min(measures.len());
        let thr = 1.0 / k as f64;
        let found = (next..=horizon).find_map(|n| {
            let m = coeffs[..upto].iter().map(|cs| cs[n].norm()).fold(0.0, f64::max);
            (m < thr).then_some((n, m))
        });
        match found {
            Some((n, m)) => {
                indices.push(n);
                maxima.push(m);
                next = n + 1;
            }
            None => {
                return Err(LabError::Exhausted {
                    stage: k,
                    reason: format!("no index in [{next}, {horizon}] with all coefficients below 1/{k}"),
                })
            }
        }
    }
    Ok(NullSubsequence { indices, maxima, atomic })
}

/// Parses "a", "a+bi", "a-bi", "bi".
pub fn parse_complex(s: &str) -> std::result::Result<C64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty number".into());
    }
    if let Some(body) = s.strip_suffix('i') {
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let mut cut = None;
        for i in (1..bytes.len()).rev() {
            if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                cut = Some(i);
                break;
            }
        }
        let (re, im) = match cut {
            Some(i) => (&body[..i], &body[i..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            v => v,
        };
        let re: f64 = re.parse().map_err(|_| format!("bad real part '{re}'"))?;
        let im: f64 = im.trim_start_matches('+').parse().map_err(|_| format!("bad imaginary part '{im}'"))?;
        Ok(c(re, im))
    } else {
        s.parse::<f64>().map(|v| c(v, 0.0)).map_err(|_| format!("bad number '{s}'"))
    }
}

/// Parses the measure grammar described in the module docs.
pub fn parse_measure(text: &str) -> Result<CircleMeasure> {
    let mut total: Option<CircleMeasure> = None;
    let mut pos = 0usize;
    for part in split_top(text) {
        let start = pos;
        pos += part.len() + 1;
        let err = |msg: String| LabError::Parse { pos: start, msg };
        let (weight, body) = match part.split_once('*') {
            Some((w, b)) if !w.contains(':') => (parse_complex(w).map_err(&err)?, b),
            _ => (c(1.0, 0.0), part),
        };
        let (kind, args) = body.split_once(':').unwrap_or((body, ""));
        let m = match kind.trim() {
            "lebesgue" => CircleMeasure::lebesgue(),
            "atom" => {
                let mut atoms = Vec::new();
                for a in args.split(';') {
                    let (t, mass) = a.split_once(',').ok_or_else(|| err(format!("atom '{a}' needs t,mass")))?;
                    let t: f64 = t.trim().parse().map_err(|_| err(format!("bad angle '{t}'")))?;
                    atoms.push((t, parse_complex(mass).map_err(&err)?));
                }
                CircleMeasure { atoms, label: format!("atom:{args}"), ..Default::default() }
            }
            "arc" => {
                let vals: Vec<f64> =
                    args.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| err(format!("bad arc '{args}'")))?;
                match vals.as_slice() {
                    [a] => CircleMeasure::arc(*a, 0.0)?,
                    [a, t] => CircleMeasure::arc(*a, *t)?,
                    _ => return Err(err("arc takes a half-width and an optional centre".into())),
                }
            }
            "cantor" => {
                let (r, d) = args.split_once(',').ok_or_else(|| err("cantor takes ratio,depth".into()))?;
                let r: f64 = r.trim().parse().map_err(|_| err(format!("bad ratio '{r}'")))?;
                let d: usize = d.trim().parse().map_err(|_| err(format!("bad depth '{d}'")))?;
                CircleMeasure::cantor(r, d)?
            }
            "density" => CircleMeasure::from_density_csv(Path::new(args.trim()))?,
            other => return Err(err(format!("unknown measure kind '{other}'"))),
        };
        let m = if weight == c(1.0, 0.0) { m } else { m.scaled(weight) };
        total = Some(match total {
            None => m,
            Some(t) => t.plus(m),
        });
    }
    total.ok_or_else(|| LabError::Parse { pos: 0, msg: "empty measure".into() })
}

const KINDS: [&str; 5] = ["atom:", "arc:", "lebesgue", "cantor:", "density:"];

// Splits at '+' signs followed by a component, i.e. a kind keyword with an
// optional "w*" prefix; other '+' signs belong to complex literals.
fn split_top(text: &str) -> Vec<&str> {
    let starts_component = |rest: &str| {
        let body = match rest.split_once('*') {
            Some((w, b)) if parse_complex(w).is_ok() => b,
            _ => rest,
        };
        KINDS.iter().any(|k| body.trim_start().starts_with(k))
    };
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        if ch == '+' && i > start && starts_component(&text[i + 1..]) {
            parts.push(&text[start..i]);
            start = i + 1;
        }
    }
    parts.push(&text[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}
