//! Command-line front end: mini-grammars for symbols, weights, vectors and
//! rate functions, one runner per subcommand, and the JSON report.
//!
//! Symbol grammar:
//!
//! ```text
//! poly:c0,c1,...        g = c0 + c1 z + ...; coefficients a or a+bi
//! const:c               constant symbol
//! tridiag:a,b,c         a/z + b + cz
//! outer-from:<path>     outer function with log|g| read from a CSV column
//! builtin:cs-halfplane  (3+z)/2
//! builtin:feldman       2+z
//! ```
//!
//! Exit codes: 0 when every record passes or is evidence, 1 when a check
//! fails or a hypothesis is violated, 2 on numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LabError, Result};
use crate::fourier_measures::{cesaro_profile, density_zero_profile, parse_complex, parse_measure, select_null_subsequence};
use crate::num_core::{c, ComplexVector, C64};
use crate::orbit_lab::{
    backward_shift_matrix, commutant_identity, exact_coanalytic_orbit, quadratic_growth_bound, iterate_orbit, random_contraction,
    resolvent_power_decay, summability_certificate, superpoly_profile, taylor_norms, CoanalyticToeplitz, DyadicPolynomial,
    ExactVector, OrbitProfile, ShiftOperator, TailCertificate,
};
use crate::shifts::{classify_bws, WeightSequence, DEFAULT_WINDOW};
use crate::symbols::{cap_function, outer_from_log_modulus, LogModulus, SymbolSeries};
use crate::toeplitz_ops::{
    dominance_check, hypercyclicity_classify, hyponormality_check, kernel_eigencheck, positivity_equiv, tridiag_eigen,
    HcVerdict, SymbolInput, Tridiag,
};
use crate::whc_construct::{
    assemble, build_theta, cyclic_phi, random_battery, rational_targets, slow_growth_search, weak_visit_report,
    SlowGrowthConfig, WhcInstance,
};

pub const SCHEMA_VERSION: &str = "1";
pub const TOL_ENV: &str = "ORBITLAB_TOL";

// ---------------------------------------------------------------------------
// arguments

#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "orbitlab", version, about = "Orbit growth, Toeplitz positivity and weak-visit constructions at truncation scale")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Write the main profile of the job as CSV.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    /// Omit wall-clock fields so identical jobs give identical bytes.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub canonical: bool,
    /// Tolerance for every pass/fail comparison; overrides ORBITLAB_TOL.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads for batch jobs and parameter grids.
    #[arg(long, global = true, default_value_t = 1)]
    #[serde(skip)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Taylor norms of (1−z)^k (1+c−cz)^{−n}.
    TaylorNorms {
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 4096)]
        n_max: usize,
    },
    /// Norm profile of an orbit of T_g* or of a weighted shift.
    Orbit(OrbitArgs),
    /// Positivity, dominance, hyponormality, spectra and classification.
    ToeplitzCheck(ToeplitzArgs),
    /// Window-scale evidence for the weighted shift criterion.
    ShiftClassify {
        /// Weights of a bilateral shift: cs, const:v or a csv path.
        #[arg(long, default_value = "cs")]
        weights: String,
        /// Weights are stored on [−window, window].
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: i64,
        /// Exponent of the sequence space.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Cesàro means of |μ̂|².
    FourierCesaro {
        /// Measure, e.g. arc:1.57, atom:0,1, cantor:0.333,20 or 0.5*arc:1+atom:0,0.5.
        #[arg(long)]
        measure: String,
        #[arg(long, default_value_t = 999)]
        n_max: usize,
    },
    /// Fraction of k ≤ n with |μ̂(k)| ≥ eps.
    FourierDensity {
        /// Measure, e.g. arc:1.57, atom:0,1, cantor:0.333,20 or 0.5*arc:1+atom:0,0.5.
        #[arg(long)]
        measure: String,
        /// Threshold on |μ̂(k)|.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        n_max: usize,
    },
    /// Joint null subsequence for several measures.
    FourierSelect {
        /// Measure grammar as for fourier-cesaro; repeat the flag.
        #[arg(long = "measure", required = true)]
        measures: Vec<String>,
        /// Number of indices to select.
        #[arg(long, default_value_t = 10)]
        length: usize,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
    },
    /// Staged schedule and assembly for a weighted shift.
    WhcBuild(WhcArgs),
    /// Schedule, assembly and weak-visit errors against random functionals.
    WhcVisit(WhcArgs),
    /// Slow orbit of a coanalytic Toeplitz operator along a subsequence.
    WhcSlow {
        /// log, loglog, pow:a or sqrt.
        #[arg(long, default_value = "log")]
        q: String,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        #[arg(long, default_value_t = 4096)]
        window: usize,
    },
    /// T*T − R*R − I = c(I − S*S) for random contractions S.
    Commutant {
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long = "c", value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
        cs: Vec<f64>,
    },
    /// ‖(I−S)^k (I+c−cS)^{−n}‖ against its bound.
    ResolventDecay {
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 256)]
        n_max: usize,
        /// backward-shift or random-contraction.
        #[arg(long, default_value = "backward-shift")]
        matrix: String,
    },
    /// Runs a JSON array of argument lists, merging the reports by index.
    Batch {
        /// JSON array of argument lists.
        file: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OrbitArgs {
    /// Symbol g: poly:a0,a1,.., const:v, tridiag:a,b,c, outer-from:<csv> or builtin:<name>.
    #[arg(long, conflicts_with = "weights")]
    pub symbol: Option<String>,
    /// Weights of a bilateral shift: cs, const:v or a csv path.
    #[arg(long)]
    pub weights: Option<String>,
    /// kernel:w, basis:j, ones, random or csv:<path>.
    #[arg(long, default_value = "basis:0")]
    pub x: String,
    /// Number of iterations.
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    /// Window length for Toeplitz orbits.
    #[arg(long, default_value_t = 2048)]
    pub dim: usize,
    /// Weights are stored on [−window, window].
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: i64,
    /// Exponent of the sequence space.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// superpoly:k[,k...], growth:<symbol|cap>, summable:c.
    #[arg(long)]
    pub check: Vec<String>,
    /// Use floating point even when an exact dyadic orbit is available.
    #[arg(long)]
    pub float: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ToeplitzArgs {
    /// Symbol g: poly:a0,a1,.., const:v, tridiag:a,b,c, outer-from:<csv> or builtin:<name>.
    #[arg(long)]
    pub symbol: String,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// classify, hyponormal, positivity, dominance, kernel:w, eigen:z.
    #[arg(long)]
    pub check: Vec<String>,
    /// Symbols h for positivity and dominance; cap(g) and 1 by default.
    #[arg(long)]
    pub h: Vec<String>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct WhcArgs {
    /// JSON job file; its fields override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub job: Option<PathBuf>,
    /// Weights of a bilateral shift: cs, const:v or a csv path.
    #[arg(long, default_value = "cs")]
    pub weights: String,
    /// Number of random rational targets.
    #[arg(long, default_value_t = 4)]
    pub targets: usize,
    /// Targets are supported on [−radius, radius].
    #[arg(long, default_value_t = 4)]
    pub radius: i64,
    /// Number of stages in the schedule.
    #[arg(long, default_value_t = 8)]
    pub stages: usize,
    /// Weights are stored on [−window, window].
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: i64,
    /// Number of random test functionals.
    #[arg(long, default_value_t = 5)]
    pub battery: usize,
    /// Test functionals are supported on [−radius, radius].
    #[arg(long, default_value_t = 16)]
    pub battery_radius: i64,
    /// Largest visit error that passes.
    #[arg(long, default_value_t = 0.1)]
    pub visit_tol: f64,
    #[arg(skip)]
    #[serde(default)]
    pub explicit_targets: Option<Vec<Vec<f64>>>,
    #[arg(skip)]
    #[serde(default)]
    pub admissible: Option<Vec<u64>>,
}

/// Fields a WHC job file may set.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhcJobFile {
    weights: Option<String>,
    targets: Option<Value>,
    radius: Option<i64>,
    stages: Option<usize>,
    window: Option<i64>,
    battery: Option<usize>,
    battery_radius: Option<i64>,
    visit_tol: Option<f64>,
    seed: Option<u64>,
    admissible: Option<Vec<u64>>,
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Evidence,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub name: String,
    pub anchor: &'static str,
    pub verdict: Verdict,
    pub payload: Value,
    #[serde(skip)]
    exit: i32,
}

impl Record {
    fn new(name: &str, verdict: Verdict, payload: Value) -> Self {
        let exit = if verdict == Verdict::Fail { 1 } else { 0 };
        Record { name: name.to_string(), anchor: anchor(name), verdict, payload, exit }
    }

    fn pass_if(name: &str, ok: bool, payload: Value) -> Self {
        Self::new(name, if ok { Verdict::Pass } else { Verdict::Fail }, payload)
    }

    fn error(name: &str, e: &LabError) -> Self {
        let kind = if e.is_hypothesis() { "hypothesis" } else { "numerical" };
        let mut r = Self::new(name, Verdict::Error, json!({ "kind": kind, "message": e.to_string() }));
        r.exit = if e.is_hypothesis() { 1 } else { 2 };
        r
    }

    pub fn exit_code(&self) -> i32 {
        self.exit
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub version: &'static str,
    pub job: Value,
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub records: Vec<Record>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
}

impl Report {
    /// 0 when everything passed or is evidence, 1 for failed checks and
    /// violated hypotheses, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        self.records.iter().map(|r| r.exit).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Fixed table of content-named anchors, one per check.
pub const ANCHORS: &[(&str, &str)] = &[
    ("taylor.closed-form", "taylor-coefficients-closed-form"),
    ("taylor.crosscheck", "taylor-norm-series-vs-contour"),
    ("taylor.decay", "taylor-norm-decay-rate"),
    ("orbit.profile", "orbit-norm-profile"),
    ("orbit.superpoly", "superpolynomial-orbit-growth"),
    ("orbit.growth", "quadratic-growth-from-commuting-pair"),
    ("orbit.summable", "inverse-norm-power-summability"),
    ("toeplitz.classify", "toeplitz-hypercyclicity-classification"),
    ("toeplitz.hyponormal", "analytic-toeplitz-hyponormality"),
    ("toeplitz.positivity", "toeplitz-positivity-from-boundary-function"),
    ("toeplitz.dominance", "toeplitz-product-dominance"),
    ("toeplitz.kernel", "reproducing-kernel-eigenvector"),
    ("toeplitz.eigen", "tridiagonal-point-spectrum"),
    ("shift.classify", "weighted-shift-weak-visit-criterion"),
    ("fourier.cesaro", "cesaro-mean-of-squared-coefficients"),
    ("fourier.density", "density-zero-of-large-coefficients"),
    ("fourier.select", "joint-null-subsequence"),
    ("whc.schedule", "staged-schedule-conditions"),
    ("whc.assembly", "backward-tail-summability"),
    ("whc.gram", "almost-orthogonal-weak-approach"),
    ("whc.visit", "weak-visit-diagnostic"),
    ("whc.slow", "slow-orbit-along-subsequence"),
    ("whc.slow-profile", "slow-orbit-dips-in-profile"),
    ("commutant", "contraction-commutant-identity"),
    ("resolvent", "power-resolvent-decay"),
    ("batch", "batch-job"),
    ("job", "job-setup"),
];

pub fn anchor(name: &str) -> &'static str {
    ANCHORS.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).unwrap_or("unlisted")
}

// ---------------------------------------------------------------------------
// grammars

/// A parsed symbol: an analytic series or a tridiagonal triple.
#[derive(Debug, Clone)]
pub enum ParsedSymbol {
    Series(SymbolSeries),
    Tridiagonal(Tridiag),
}

impl ParsedSymbol {
    pub fn series(self) -> Result<SymbolSeries> {
        match self {
            ParsedSymbol::Series(s) => Ok(s),
            ParsedSymbol::Tridiagonal(_) => Err(LabError::invalid("this check needs an analytic symbol")),
        }
    }

    pub fn input(self) -> SymbolInput {
        match self {
            ParsedSymbol::Series(s) => SymbolInput::Analytic(s),
            ParsedSymbol::Tridiagonal(t) => SymbolInput::Tridiagonal(t),
        }
    }
}

fn complex_list(body: &str, start: usize) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    let mut pos = start;
    for item in body.split(',') {
        let v = parse_complex(item).map_err(|msg| LabError::Parse { pos, msg })?;
        out.push(v);
        pos += item.len() + 1;
    }
    Ok(out)
}

pub fn parse_symbol(text: &str) -> Result<ParsedSymbol> {
    let (kind, body) = text.split_once(':').ok_or_else(|| LabError::Parse { pos: 0, msg: "expected kind:value".into() })?;
    let start = kind.len() + 1;
    match kind {
        "poly" => {
            let cs = complex_list(body, start)?;
            Ok(ParsedSymbol::Series(SymbolSeries::polynomial(cs, text)?))
        }
        "const" => {
            let v = parse_complex(body).map_err(|msg| LabError::Parse { pos: start, msg })?;
            Ok(ParsedSymbol::Series(SymbolSeries::constant(v).with_label(text)))
        }
        "tridiag" => {
            let cs = complex_list(body, start)?;
            if cs.len() != 3 {
                return Err(LabError::Parse { pos: start, msg: format!("tridiag takes 3 values, got {}", cs.len()) });
            }
            Ok(ParsedSymbol::Tridiagonal(Tridiag::new(cs[0], cs[1], cs[2])))
        }
        "outer-from" => {
            let q = LogModulus::from_csv(Path::new(body))?;
            let m = (q.len() / 8).max(1);
            Ok(ParsedSymbol::Series(outer_from_log_modulus(&q, m)?.with_label(text)))
        }
        "builtin" => match body {
            "cs-halfplane" => Ok(ParsedSymbol::Series(SymbolSeries::from_real(&[1.5, 0.5])?.with_label("(3+z)/2"))),
            "feldman" => Ok(ParsedSymbol::Series(SymbolSeries::from_real(&[2.0, 1.0])?.with_label("2+z"))),
            other => Err(LabError::Parse { pos: start, msg: format!("unknown builtin {other:?}") }),
        },
        other => Err(LabError::Parse { pos: 0, msg: format!("unknown symbol kind {other:?}") }),
    }
}

/// "cs", "const:v" or a CSV path with one weight per line.
pub fn parse_weights(text: &str, window: i64, p: f64) -> Result<WeightSequence> {
    if text == "cs" || text == "weights:cs" {
        return WeightSequence::chan_sanders(window, p);
    }
    let t = text.strip_prefix("weights:").unwrap_or(text);
    if let Some(v) = t.strip_prefix("const:") {
        let v: f64 = v.parse().map_err(|_| LabError::Parse { pos: 6, msg: format!("not a number: {v:?}") })?;
        return WeightSequence::constant(v, window, p);
    }
    WeightSequence::from_csv(Path::new(t), p)
}

/// Rate functions q for the slow-growth search.
pub fn parse_rate(text: &str) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match text {
        "log" => Ok(Box::new(|x: f64| 1.0 + (1.0 + x).ln())),
        "loglog" => Ok(Box::new(|x: f64| 1.0 + (1.0 + (1.0 + x).ln()).ln())),
        "sqrt" => Ok(Box::new(|x: f64| (1.0 + x).sqrt())),
        _ => {
            let a = text
                .strip_prefix("pow:")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| LabError::Parse { pos: 0, msg: format!("unknown rate {text:?}") })?;
            Ok(Box::new(move |x: f64| (1.0 + x).powf(a)))
        }
    }
}

/// A decimal literal as an exact fraction, when it is one.
fn decimal_fraction(text: &str) -> Option<(i64, i64)> {
    let (neg, t) = match text.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (ip, fp) = t.split_once('.').unwrap_or((t, ""));
    if ip.is_empty() && fp.is_empty() || !ip.chars().chain(fp.chars()).all(|ch| ch.is_ascii_digit()) || fp.len() > 17 {
        return None;
    }
    let den = 10i64.checked_pow(fp.len() as u32)?;
    let whole: i64 = if ip.is_empty() { 0 } else { ip.parse().ok()? };
    let frac: i64 = if fp.is_empty() { 0 } else { fp.parse().ok()? };
    let num = whole.checked_mul(den)?.checked_add(frac)?;
    Some((if neg { -num } else { num }, den))
}

enum Start {
    Float(ComplexVector),
    Exact(ExactVector),
}

fn parse_start(text: &str, dim: usize, offset: i64, seed: u64, exact_ok: bool) -> Result<Start> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    let pos = kind.len() + 1;
    match kind {
        "kernel" => {
            if exact_ok {
                if let Some((num, den)) = decimal_fraction(body) {
                    return Ok(Start::Exact(ExactVector::kernel(num, den, dim)?));
                }
            }
            let w = parse_complex(body).map_err(|msg| LabError::Parse { pos, msg })?;
            if !(w.norm() < 1.0) {
                return Err(LabError::invalid(format!("kernel point {w} is not inside the unit disc")));
            }
            let mut e = Vec::with_capacity(dim);
            let mut p = c(1.0, 0.0);
            for _ in 0..dim {
                e.push(p);
                p *= w.conj();
            }
            Ok(Start::Float(ComplexVector::with_offset(e, offset)?))
        }
        "basis" => {
            let j: i64 = body.parse().map_err(|_| LabError::Parse { pos, msg: format!("not an index: {body:?}") })?;
            Ok(Start::Float(ComplexVector::basis(j, 1, j)?))
        }
        "ones" => Ok(Start::Float(ComplexVector::with_offset(vec![c(1.0, 0.0); dim], offset)?)),
        "random" => {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<C64> = (0..dim).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let v = ComplexVector::with_offset(e, offset)?;
            let n = v.norm();
            Ok(Start::Float(v.scale(c(1.0 / n, 0.0))))
        }
        "csv" => {
            let text = std::fs::read_to_string(body)?;
            let mut e = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                e.push(parse_complex(line).map_err(|msg| LabError::Parse { pos: i + 1, msg })?);
            }
            Ok(Start::Float(ComplexVector::with_offset(e, offset)?))
        }
        other => Err(LabError::Parse { pos: 0, msg: format!("unknown vector kind {other:?}") }),
    }
}

// ---------------------------------------------------------------------------
// running

struct Ctx {
    seed: u64,
    tol: Option<f64>,
    csv: Option<PathBuf>,
    jobs: usize,
}

impl Ctx {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

fn env_tol() -> Result<Option<f64>> {
    match std::env::var(TOL_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0)
            .map(Some)
            .ok_or_else(|| LabError::invalid(format!("{TOL_ENV}={v:?} is not a positive number"))),
        Err(_) => Ok(None),
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| LabError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| LabError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Runs a parsed command line and returns the report.
pub fn run(cli: &Cli) -> Report {
    let t0 = Instant::now();
    let mut records = Vec::new();
    let tol = match cli.tol {
        Some(t) => Some(t),
        None => match env_tol() {
            Ok(t) => t,
            Err(e) => {
                records.push(Record::error("job", &e));
                None
            }
        },
    };
    let ctx = Ctx { seed: cli.seed, tol, csv: cli.csv.clone(), jobs: cli.jobs.max(1) };
    if records.is_empty() {
        records = dispatch(&cli.command, &ctx);
    }
    let (wall, finished) = if cli.canonical {
        (None, None)
    } else {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).ok();
        (Some(t0.elapsed().as_secs_f64() * 1e3), now)
    };
    Report {
        schema: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        job: to_value(&cli.command),
        seed: cli.seed,
        tolerance: tol,
        records,
        wall_clock_ms: wall,
        finished_unix: finished,
    }
}

fn dispatch(cmd: &Command, ctx: &Ctx) -> Vec<Record> {
    let (name, out) = match cmd {
        Command::TaylorNorms { k, c, n_max } => ("taylor.closed-form", run_taylor(*k, *c, *n_max, ctx)),
        Command::Orbit(a) => ("orbit.profile", run_orbit(a, ctx)),
        Command::ToeplitzCheck(a) => ("toeplitz.classify", run_toeplitz(a, ctx)),
        Command::ShiftClassify { weights, window, p } => ("shift.classify", run_shift(weights, *window, *p)),
        Command::FourierCesaro { measure, n_max } => ("fourier.cesaro", run_cesaro(measure, *n_max, ctx)),
        Command::FourierDensity { measure, eps, n_max } => ("fourier.density", run_density(measure, *eps, *n_max, ctx)),
        Command::FourierSelect { measures, length, horizon } => ("fourier.select", run_select(measures, *length, *horizon)),
        Command::WhcBuild(a) => ("whc.schedule", run_whc(a, false, ctx)),
        Command::WhcVisit(a) => ("whc.schedule", run_whc(a, true, ctx)),
        Command::WhcSlow { q, stages, window } => ("whc.slow", run_slow(q, *stages, *window, ctx)),
        Command::Commutant { dim, count, cs } => ("commutant", run_commutant(*dim, *count, cs, ctx)),
        Command::ResolventDecay { dim, k, c, n_max, matrix } => ("resolvent", run_resolvent(*dim, *k, *c, *n_max, matrix, ctx)),
        Command::Batch { file } => ("batch", run_batch(file, ctx)),
    };
    out.unwrap_or_else(|e| vec![Record::error(name, &e)])
}

fn run_taylor(k: u32, cp: f64, n_max: usize, ctx: &Ctx) -> Result<Vec<Record>> {
    let t = taylor_norms(k, cp, n_max)?;
    let mut out = Vec::new();
    if let Some(row) = t.rows.first() {
        out.push(Record::new("taylor.closed-form", Verdict::Evidence, json!({ "n": row.n, "norm": row.norm, "tail_bound": row.tail_bound })));
    }
    let tol = ctx.tol(1e-8);
    out.push(Record::pass_if(
        "taylor.crosscheck",
        t.max_crosscheck_error <= tol,
        json!({ "max_error": t.max_crosscheck_error, "tol": tol }),
    ));
    out.push(Record::new(
        "taylor.decay",
        Verdict::Evidence,
        json!({ "k": t.k, "c": t.c, "sup_scaled": t.sup_scaled, "argsup": t.argsup, "fitted_slope": t.fitted_slope }),
    ));
    if let Some(path) = &ctx.csv {
        write_rows(
            path,
            &["n", "norm", "tail_bound", "terms"],
            t.rows.iter().map(|r| vec![r.n.to_string(), format!("{:e}", r.norm), format!("{:e}", r.tail_bound), r.terms.to_string()]),
        )?;
    }
    Ok(out)
}

/// Window long enough that the dropped tail of k_w, amplified by at most
/// ‖T‖ⁿ against the eigenvalue growth |g(w)|ⁿ, stays below 1e−16 relative.
fn kernel_window(x: &str, g: &SymbolSeries, horizon: usize) -> Option<usize> {
    let w = parse_complex(x.strip_prefix("kernel:")?).ok()?;
    let r = w.norm();
    let lam = g.eval(w.conj()).norm().max(g.eval(w).norm());
    if !(r > 0.0 && r < 1.0) || lam == 0.0 {
        return None;
    }
    let gain = (g.sup_bound() / lam).ln().max(0.0);
    let need = (horizon as f64 * gain + 37.0) / -r.ln();
    (need.is_finite() && need < 1e7).then(|| need.ceil() as usize)
}

fn run_orbit(a: &OrbitArgs, ctx: &Ctx) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let (profile, g): (OrbitProfile, Option<SymbolSeries>) = match (&a.symbol, &a.weights) {
        (Some(s), None) => {
            let g = parse_symbol(s)?.series()?;
            let dy = if a.float { None } else { DyadicPolynomial::from_symbol(&g).ok() };
            let dim = kernel_window(&a.x, &g, a.horizon).map_or(a.dim, |n| n.max(a.dim));
            match parse_start(&a.x, dim, 0, ctx.seed, dy.is_some())? {
                Start::Exact(x) => {
                    let (p, _) = exact_coanalytic_orbit(dy.as_ref().expect("checked"), &x, a.horizon, 0)?;
                    (p, Some(g))
                }
                Start::Float(x) => {
                    let op = CoanalyticToeplitz::new(&g, x.len().max(2))?;
                    let (x, _) = x.rewindow(0, x.len().max(2));
                    (iterate_orbit(&op, &x, a.horizon)?, Some(g))
                }
            }
        }
        (None, Some(w)) => {
            let ws = parse_weights(w, a.window, a.p)?;
            let half = (a.dim.min(64) / 2) as i64;
            let x = match parse_start(&a.x, 2 * half as usize + 1, -half, ctx.seed, false)? {
                Start::Float(x) => x,
                Start::Exact(_) => unreachable!("exact starts are only built for symbols"),
            };
            let op = ShiftOperator { weights: ws };
            (iterate_orbit(&op, &x, a.horizon)?, None)
        }
        _ => return Err(LabError::invalid("give exactly one of --symbol and --weights")),
    };
    out.push(Record::new(
        "orbit.profile",
        Verdict::Evidence,
        json!({
            "operator": profile.operator_label,
            "vector": profile.vector_label,
            "horizon": profile.horizon(),
            "first": profile.norms.first(),
            "last": profile.norms.last(),
            "spill_bound": profile.spill_bound,
        }),
    ));
    let mut pair_cert: Option<f64> = None;
    for check in &a.check {
        let (kind, body) = check.split_once(':').unwrap_or((check.as_str(), ""));
        let rec = match kind {
            "superpoly" => (|| {
                let ks = body.split(',').map(|v| v.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| LabError::Parse {
                    pos: 10,
                    msg: format!("bad exponent list {body:?}"),
                })?;
                let rep = superpoly_profile(&profile, &ks, None)?;
                let per: Vec<Value> = rep
                    .per_k
                    .iter()
                    .map(|p| json!({ "k": p.k, "argmin": p.argmin, "min_value": p.min_value, "increasing_after_min": p.increasing_after_min, "dips_after_min": p.dips_after_min }))
                    .collect();
                Ok(Record::new("orbit.superpoly", Verdict::Evidence, json!({ "per_k": per, "note": rep.note })))
            })(),
            "growth" => (|| {
                let g = g.clone().ok_or_else(|| LabError::invalid("growth check needs --symbol"))?;
                let h = if body == "cap" || body.is_empty() { cap_function(&g)? } else { parse_symbol(body)?.series()? };
                let x = match parse_start(&a.x, a.dim.min(512), 0, ctx.seed, false)? {
                    Start::Float(x) => x,
                    Start::Exact(_) => unreachable!(),
                };
                let t = CoanalyticToeplitz::new(&g, x.len())?;
                let s = CoanalyticToeplitz::new(&h, x.len())?;
                let rep = quadratic_growth_bound(&t, &s, &x, a.horizon)?;
                pair_cert = Some(rep.s2x_norm);
                Ok(Record::pass_if("orbit.growth", rep.violations.is_empty(), to_value(&rep)))
            })(),
            "summable" => (|| {
                let ce: f64 = body.parse().map_err(|_| LabError::Parse { pos: 9, msg: format!("bad exponent {body:?}") })?;
                let cert = pair_cert.map(|s| TailCertificate::CommutingPair { s2x_norm: s }).unwrap_or(TailCertificate::None);
                let rep = summability_certificate(&profile, ce, cert)?;
                let total = rep.partial_sums.last().copied();
                Ok(Record::new(
                    "orbit.summable",
                    Verdict::Evidence,
                    json!({ "exponent": ce, "partial_sum": total, "tail_bound": rep.tail_bound, "total_upper": rep.total_upper, "verdict": rep.verdict }),
                ))
            })(),
            _ => Err(LabError::Parse { pos: 0, msg: format!("unknown check {check:?}") }),
        };
        out.push(rec.unwrap_or_else(|e| Record::error(&format!("orbit.{kind}"), &e)));
    }
    if let Some(path) = &ctx.csv {
        profile.write_csv(path)?;
    }
    Ok(out)
}

fn default_h(g: &SymbolSeries) -> Result<Vec<SymbolSeries>> {
    Ok(vec![cap_function(g)?, SymbolSeries::constant(c(1.0, 0.0))])
}

fn run_toeplitz(a: &ToeplitzArgs, ctx: &Ctx) -> Result<Vec<Record>> {
    let sym = parse_symbol(&a.symbol)?;
    let checks: Vec<String> = if a.check.is_empty() {
        vec!["classify".into(), "hyponormal".into()]
    } else {
        a.check.clone()
    };
    let hs = || -> Result<Vec<SymbolSeries>> {
        if a.h.is_empty() {
            default_h(&sym.clone().series()?)
        } else {
            a.h.iter().map(|t| parse_symbol(t)?.series()).collect()
        }
    };
    let mut out = Vec::new();
    for check in &checks {
        let (kind, body) = check.split_once(':').unwrap_or((check.as_str(), ""));
        let rec = (|| match kind {
            "classify" => {
                let rep = hypercyclicity_classify(&sym.clone().input());
                let v = if rep.verdict == HcVerdict::BoundaryMarginal { Verdict::Evidence } else { Verdict::Pass };
                Ok(Record::new("toeplitz.classify", v, to_value(&rep)))
            }
            "hyponormal" => {
                let rep = hyponormality_check(&sym.clone().input(), a.dim.min(512))?;
                Ok(Record::pass_if("toeplitz.hyponormal", rep.min_eigenvalue >= -rep.tol, to_value(&rep)))
            }
            "positivity" => {
                let g = sym.clone().series()?;
                let rep = positivity_equiv(&hs()?, &[g], a.dim)?;
                Ok(Record::pass_if("toeplitz.positivity", rep.implication_holds, to_value(&rep)))
            }
            "dominance" => {
                let g = sym.clone().series()?;
                let rep = dominance_check(&hs()?, &g, a.dim)?;
                Ok(Record::new("toeplitz.dominance", Verdict::Evidence, to_value(&rep)))
            }
            "kernel" => {
                let g = sym.clone().series()?;
                let w = parse_complex(body).map_err(|msg| LabError::Parse { pos: 7, msg })?;
                let rep = kernel_eigencheck(&g, w, a.dim)?;
                let tol = ctx.tol(0.0);
                Ok(Record::pass_if("toeplitz.kernel", rep.residual <= rep.bound + tol + 1e-13, to_value(&rep)))
            }
            "eigen" => {
                let t = match &sym {
                    ParsedSymbol::Tridiagonal(t) => *t,
                    _ => return Err(LabError::invalid("eigen check needs a tridiag symbol")),
                };
                let z = parse_complex(body).map_err(|msg| LabError::Parse { pos: 6, msg })?;
                let rep = tridiag_eigen(&t, z, a.dim)?;
                let tol = ctx.tol(1e-10);
                let payload = json!({
                    "z": rep.z, "lambda": rep.lambda, "residual": rep.residual, "degenerate": rep.degenerate,
                    "literal_candidate": rep.literal_candidate, "literal_residual": rep.literal_residual,
                    "tails_resolved": rep.tails_resolved, "tol": tol,
                });
                Ok(Record::pass_if("toeplitz.eigen", rep.residual <= tol, payload))
            }
            _ => Err(LabError::Parse { pos: 0, msg: format!("unknown check {check:?}") }),
        })();
        out.push(rec.unwrap_or_else(|e| Record::error(&format!("toeplitz.{kind}"), &e)));
    }
    Ok(out)
}

fn run_shift(weights: &str, window: i64, p: f64) -> Result<Vec<Record>> {
    let w = parse_weights(weights, window, p)?;
    let rep = classify_bws(&w);
    Ok(vec![Record::new("shift.classify", Verdict::Evidence, to_value(&rep))])
}

fn run_cesaro(measure: &str, n_max: usize, ctx: &Ctx) -> Result<Vec<Record>> {
    let mu = parse_measure(measure)?;
    let prof = cesaro_profile(&mu, n_max)?;
    if let Some(path) = &ctx.csv {
        write_rows(path, &["n", "mean"], prof.iter().enumerate().map(|(n, v)| vec![n.to_string(), format!("{v:e}")]))?;
    }
    Ok(vec![Record::new(
        "fourier.cesaro",
        Verdict::Evidence,
        json!({ "n_max": n_max, "final_mean": prof.last(), "has_atoms": mu.has_atoms(), "total_variation": mu.total_variation() }),
    )])
}

fn run_density(measure: &str, eps: f64, n_max: usize, ctx: &Ctx) -> Result<Vec<Record>> {
    let mu = parse_measure(measure)?;
    let prof = density_zero_profile(&mu, eps, n_max)?;
    if let Some(path) = &ctx.csv {
        write_rows(path, &["n", "fraction"], prof.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), format!("{v:e}")]))?;
    }
    Ok(vec![Record::new(
        "fourier.density",
        Verdict::Evidence,
        json!({ "eps": eps, "n_max": n_max, "final_fraction": prof.last() }),
    )])
}

fn run_select(measures: &[String], length: usize, horizon: usize) -> Result<Vec<Record>> {
    let ms = measures.iter().map(|m| parse_measure(m)).collect::<Result<Vec<_>>>()?;
    let sel = select_null_subsequence(&ms, length, horizon)?;
    Ok(vec![Record::new("fourier.select", Verdict::Evidence, to_value(&sel))])
}

fn merge_whc_job(a: &WhcArgs, ctx: &Ctx) -> Result<(WhcArgs, u64)> {
    let mut a = a.clone();
    let mut seed = ctx.seed;
    if let Some(path) = &a.job {
        let text = std::fs::read_to_string(path)?;
        let f: WhcJobFile = serde_json::from_str(&text).map_err(|e| LabError::Parse { pos: e.column(), msg: e.to_string() })?;
        if let Some(v) = f.weights {
            a.weights = v;
        }
        match f.targets {
            None => {}
            Some(Value::Number(n)) => {
                a.targets = n.as_u64().ok_or_else(|| LabError::invalid("targets must be a count or a list"))? as usize
            }
            Some(v @ Value::Array(_)) => {
                let list: Vec<Vec<f64>> = serde_json::from_value(v).map_err(|e| LabError::Parse { pos: 0, msg: e.to_string() })?;
                a.targets = list.len();
                a.explicit_targets = Some(list);
            }
            Some(_) => return Err(LabError::invalid("targets must be a count or a list")),
        }
        a.radius = f.radius.unwrap_or(a.radius);
        a.stages = f.stages.unwrap_or(a.stages);
        a.window = f.window.unwrap_or(a.window);
        a.battery = f.battery.unwrap_or(a.battery);
        a.battery_radius = f.battery_radius.unwrap_or(a.battery_radius);
        a.visit_tol = f.visit_tol.unwrap_or(a.visit_tol);
        seed = f.seed.unwrap_or(seed);
        a.admissible = f.admissible.or(a.admissible);
    }
    Ok((a, seed))
}

fn run_whc(args: &WhcArgs, visit: bool, ctx: &Ctx) -> Result<Vec<Record>> {
    let (a, seed) = merge_whc_job(args, ctx)?;
    let weights = parse_weights(&a.weights, a.window, 2.0)?;
    let targets = match &a.explicit_targets {
        Some(list) => list
            .iter()
            .map(|t| {
                let r = (t.len() / 2) as i64;
                ComplexVector::with_offset(t.iter().map(|&v| c(v, 0.0)).collect(), -r)
            })
            .collect::<Result<Vec<_>>>()?,
        None => rational_targets(a.targets, a.radius, seed),
    };
    let inst = WhcInstance::new(weights, targets)?;
    let phi = cyclic_phi(inst.target_count(), a.stages)?;
    let sched = build_theta(&inst, &phi, a.admissible.as_deref())?;
    let mut out = vec![Record::new(
        "whc.schedule",
        Verdict::Pass,
        json!({ "phi": sched.phi, "theta": sched.theta, "checks": sched.checks, "operator_norm": inst.operator_norm() }),
    )];
    let asm = assemble(&inst, &sched)?;
    let ok = asm.splits.iter().all(|s| s.b_bound <= s.b_limit * (1.0 + 1e-12));
    out.push(Record::pass_if("whc.assembly", ok, json!({ "ln_u_norm": asm.ln_u_norm, "splits": asm.splits })));
    out.push(Record::new("whc.gram", Verdict::Evidence, to_value(&asm.gram)));
    if visit {
        let battery = random_battery(a.battery, a.battery_radius, seed);
        let rep = weak_visit_report(&inst, &sched, &asm, &battery)?;
        let ok = rep.max_error < a.visit_tol;
        let mut payload = to_value(&rep);
        payload["tol"] = json!(a.visit_tol);
        out.push(Record::pass_if("whc.visit", ok, payload));
    }
    Ok(out)
}

fn run_slow(q: &str, stages: usize, window: usize, ctx: &Ctx) -> Result<Vec<Record>> {
    let rate = parse_rate(q)?;
    let tr = slow_growth_search(&*rate, &SlowGrowthConfig::new(stages, window))?;
    let flagged: Vec<bool> = tr.stages.iter().map(|s| tr.superpoly.rate_dips.contains(&s.k)).collect();
    if let Some(path) = &ctx.csv {
        tr.profile.write_csv(path)?;
    }
    Ok(vec![
        Record::pass_if(
            "whc.slow",
            tr.all_verified,
            json!({
                "stages": tr.stages, "q_scale": tr.q_scale, "bump": tr.bump, "symbol_terms": tr.symbol_terms,
                "symbol_tail": tr.symbol_tail, "f_norm": tr.f_norm, "f_truncation": tr.f_truncation,
            }),
        ),
        Record::new("whc.slow-profile", Verdict::Evidence, json!({ "dips_flagged": flagged, "note": tr.superpoly.note })),
    ])
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| LabError::invalid(e.to_string()))
}

fn run_commutant(dim: usize, count: usize, cs: &[f64], ctx: &Ctx) -> Result<Vec<Record>> {
    if dim == 0 || count == 0 || cs.is_empty() {
        return Err(LabError::invalid("need dim, count and at least one c"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mats: Vec<_> = (0..count).map(|_| random_contraction(dim, 1.0, &mut rng)).collect();
    let grid: Vec<(usize, f64)> = (0..count).flat_map(|i| cs.iter().map(move |&cv| (i, cv))).collect();
    let reps = pool(ctx.jobs)?.install(|| grid.par_iter().map(|&(i, cv)| commutant_identity(&mats[i], cv)).collect::<Result<Vec<_>>>())?;
    let worst = reps.iter().map(|r| r.residual).fold(0.0, f64::max);
    let tol = ctx.tol(1e-12);
    let mut by_c: BTreeMap<String, f64> = BTreeMap::new();
    for r in &reps {
        let e = by_c.entry(format!("{}", r.c)).or_insert(0.0);
        *e = e.max(r.residual);
    }
    Ok(vec![Record::pass_if("commutant", worst <= tol, json!({ "dim": dim, "count": count, "max_residual": worst, "max_residual_by_c": by_c, "tol": tol }))])
}

fn run_resolvent(dim: usize, k: u32, cp: f64, n_max: usize, matrix: &str, ctx: &Ctx) -> Result<Vec<Record>> {
    let s = match matrix {
        "backward-shift" => backward_shift_matrix(dim),
        "random-contraction" => random_contraction(dim, 1.0, &mut ChaCha8Rng::seed_from_u64(ctx.seed)),
        other => return Err(LabError::invalid(format!("unknown matrix {other:?}"))),
    };
    let t = resolvent_power_decay(&s, cp, k, n_max)?;
    if let Some(path) = &ctx.csv {
        write_rows(path, &["n", "value", "bound"], t.rows.iter().map(|r| vec![r.n.to_string(), format!("{:e}", r.value), format!("{:e}", r.bound)]))?;
    }
    Ok(vec![Record::pass_if(
        "resolvent",
        t.bound_holds,
        json!({ "k": t.k, "c": t.c, "sup_power_norm": t.sup_power_norm, "constant_a": t.constant_a, "fitted_exponent": t.fitted_exponent, "last": t.rows.last() }),
    )])
}

fn run_batch(file: &Path, ctx: &Ctx) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(file)?;
    let jobs: Vec<Vec<String>> = serde_json::from_str(&text).map_err(|e| LabError::Parse { pos: e.column(), msg: e.to_string() })?;
    let parsed = jobs
        .iter()
        .enumerate()
        .map(|(i, args)| {
            let argv = std::iter::once("orbitlab".to_string()).chain(args.iter().cloned());
            Cli::try_parse_from(argv).map_err(|e| LabError::Parse { pos: i, msg: e.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    if parsed.iter().any(|c| matches!(c.command, Command::Batch { .. })) {
        return Err(LabError::invalid("batch files cannot nest"));
    }
    let reports: Vec<Report> = pool(ctx.jobs)?.install(|| {
        parsed
            .par_iter()
            .map(|c| {
                let mut c = c.clone();
                c.canonical = true;
                c.out = None;
                c.csv = None;
                if c.tol.is_none() {
                    c.tol = ctx.tol;
                }
                run(&c)
            })
            .collect()
    });
    let mut out = Vec::new();
    for (i, r) in reports.into_iter().enumerate() {
        for mut rec in r.records {
            rec.name = format!("job{i}.{}", rec.name);
            out.push(rec);
        }
    }
    Ok(out)
}

/// Parses an argument list whose first element is the program name.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| e.to_string())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let report = run(&cli);
    let text = report.to_json();
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("cannot write {}: {e}", path.display());
                return 2;
            }
        }
        None => print!("{text}"),
    }
    report.exit_code()
}
