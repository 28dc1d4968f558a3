use std::time::Instant;

use orbitlab::cli;
use orbitlab::num_core::{c, ComplexVector, UpperToeplitz, FFT_THRESHOLD, C64};
use orbitlab::orbit_lab::*;
use orbitlab::symbols::{cap_function, SymbolSeries};
use orbitlab::toeplitz_ops::*;
use orbitlab::whc_construct::*;
use orbitlab::fourier_measures::{cesaro_profile, density_zero_profile, CircleMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

// name, check, time budget in seconds
type Criterion = (&'static str, fn() -> Outcome, Option<f64>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn half_plane() -> SymbolSeries {
    SymbolSeries::from_real(&[1.5, 0.5]).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    let v = (0..n).map(|j| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + j as f64 / 8.0)).collect();
    ComplexVector::new(v).unwrap()
}

fn random_poly(rng: &mut ChaCha8Rng) -> SymbolSeries {
    let deg = rng.gen_range(0..6);
    let cs = (0..=deg).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    SymbolSeries::polynomial(cs, "random").unwrap()
}

fn taylor() -> Outcome {
    let (a, _) = taylor_coefficients(2, 1.0, 1);
    ensure(a[0] == 0.5 && a[1] == -0.75, format!("a0={} a1={}", a[0], a[1]))?;
    for (m, v) in a.iter().enumerate().skip(2).take(40) {
        ensure(*v == 2f64.powi(-(m as i32 + 1)), format!("a{m}={v}"))?;
    }
    let t = taylor_norms(2, 1.0, 4096).map_err(err)?;
    ensure((t.rows[0].norm - 1.5).abs() < 1e-14, format!("N(1)={}", t.rows[0].norm))?;
    let checked = t.rows.iter().filter(|r| r.crosscheck_error.is_some()).count();
    ensure(checked >= 10, format!("{checked} rows cross-checked"))?;
    ensure(t.max_crosscheck_error <= 1e-8, format!("series vs contour {:.2e}", t.max_crosscheck_error))?;
    ensure(t.sup_scaled.is_finite(), "sup N(n)·n^{1/2} not finite")?;
    let slope = t.fitted_slope.ok_or("no slope")?;
    ensure((-1.1..=-0.45).contains(&slope), format!("slope {slope}"))?;
    Ok(format!("sup={:.4} at n={}, slope={slope:.4}, crosscheck={:.1e}", t.sup_scaled, t.argsup, t.max_crosscheck_error))
}

fn growth() -> Outcome {
    let g = half_plane();
    let h = cap_function(&g).map_err(err)?;
    let n = 512;
    let t = CoanalyticToeplitz::new(&g, n).map_err(err)?;
    let s = CoanalyticToeplitz::new(&h, n).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<ComplexVector> = (0..20).map(|_| random_vector(&mut rng, n)).collect();
    let reports = quadratic_growth_batch(&t, &s, &xs, 200).map_err(err)?;
    let worst_premise = reports[0].premise_min_eig;
    ensure(worst_premise >= -1e-8, format!("premise {worst_premise:.3e}"))?;
    let mut worst_ratio = f64::INFINITY;
    for (i, r) in reports.iter().enumerate() {
        ensure(r.violations.is_empty(), format!("vector {i}: violations at {:?}", r.violations))?;
        worst_ratio = worst_ratio.min(r.min_ratio.unwrap_or(f64::INFINITY));
    }
    Ok(format!("premise min eig {worst_premise:.2e}, min ratio {worst_ratio:.3}"))
}

fn fourier() -> Outcome {
    let arc = CircleMeasure::arc(std::f64::consts::FRAC_PI_2, 0.0).map_err(err)?;
    let p = cesaro_profile(&arc, 999).map_err(err)?;
    ensure((p[999] - 1.5e-3).abs() <= 2e-4, format!("arc mean {:.4e}", p[999]))?;
    let d = cesaro_profile(&CircleMeasure::delta(0.7), 999).map_err(err)?;
    ensure(d.iter().all(|&v| (v - 1.0).abs() <= 1e-15), "delta mean is not 1")?;
    let dens = density_zero_profile(&arc, 0.5, 10_000).map_err(err)?;
    let last = *dens.last().unwrap();
    ensure((last - 1e-4).abs() <= 1e-15, format!("density {last:e}"))?;
    Ok(format!("arc mean {:.4e}, density {last:e}", p[999]))
}

fn tridiagonal() -> Outcome {
    let t = Tridiag::new(c(1.0, 0.0), c(0.0, 0.0), c(0.25, 0.0));
    let mut out = Vec::new();
    for z in [0.6, 0.5] {
        let e = tridiag_eigen(&t, c(z, 0.0), 2000).map_err(err)?;
        ensure(e.residual <= 1e-10, format!("z={z}: residual {:.2e}", e.residual))?;
        ensure(e.literal_residual > 1e-2, format!("z={z}: literal residual {:.2e}", e.literal_residual))?;
        out.push(format!("z={z} residual {:.1e}", e.residual));
    }
    let hc = hypercyclicity_classify(&SymbolInput::Tridiagonal(t));
    ensure(hc.verdict == HcVerdict::Hypercyclic, format!("{:?}", hc.verdict))?;
    ensure(
        (hc.min_modulus - 0.75).abs() < 1e-9 && (hc.max_modulus - 1.25).abs() < 1e-9,
        format!("|g| range [{}, {}]", hc.min_modulus, hc.max_modulus),
    )?;
    Ok(format!("{}, |g| in [{:.3}, {:.3}]", out.join(", "), hc.min_modulus, hc.max_modulus))
}

fn positivity() -> Outcome {
    let n = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nonneg = 0;
    for i in 0..50 {
        let g1 = random_poly(&mut rng);
        let g2 = random_poly(&mut rng);
        // half the families are H ≥ 0 by construction: |a g1|² ≤ |g1|²
        let minus = if i % 2 == 0 {
            vec![g1.scale(c(rng.gen_range(-1.0..1.0), 0.0))]
        } else {
            vec![random_poly(&mut rng)]
        };
        let r = positivity_equiv(&[g1, g2], &minus, n).map_err(err)?;
        ensure(r.implication_holds, format!("family {i}: H ≥ 0 but min eig {:.3e}", r.min_eigenvalue))?;
        nonneg += r.h_nonnegative as usize;
    }
    let g = half_plane();
    let d = dominance_check(&[cap_function(&g).map_err(err)?, SymbolSeries::constant(c(1.0, 0.0))], &g, n).map_err(err)?;
    ensure(d.star_right_min_eig >= -d.tol, format!("dominance min eig {:.3e}", d.star_right_min_eig))?;
    let s = positivity_equiv(&[SymbolSeries::constant(c(1.0, 0.0))], &[SymbolSeries::constant(c(2.0, 0.0))], n).map_err(err)?;
    ensure((s.min_eigenvalue + 3.0).abs() <= 1e-9, format!("scalar case {}", s.min_eigenvalue))?;
    Ok(format!("{nonneg}/50 families with H ≥ 0, dominance min eig {:.2e}", d.star_right_min_eig))
}

fn commutant_and_resolvent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s = random_contraction(32, 1.0, &mut rng);
        for cp in [0.5, 1.0, 2.0] {
            worst = worst.max(commutant_identity(&s, cp).map_err(err)?.residual);
        }
    }
    ensure(worst <= 1e-12, format!("commutant residual {worst:.2e}"))?;
    let d = resolvent_power_decay(&backward_shift_matrix(64), 1.0, 3, 128).map_err(err)?;
    let e = d.fitted_exponent.ok_or("no exponent")?;
    ensure(e <= -0.9, format!("exponent {e}"))?;
    ensure(d.bound_holds, "resolvent bound violated")?;
    Ok(format!("commutant residual {worst:.1e}, resolvent exponent {e:.2}"))
}

fn whc() -> Outcome {
    let inst = WhcInstance::chan_sanders(4096, rational_targets(4, 4, 0)).map_err(err)?;
    let phi = cyclic_phi(4, 8).map_err(err)?;
    let sched = build_theta(&inst, &phi, None).map_err(err)?;
    verify_schedule(&inst, &sched).map_err(err)?;
    for ch in &sched.checks {
        ensure(
            ch.orthogonality_ratio < 1.0 && ch.cross_ratio < 1.0 && ch.smallness_margin > 0.0,
            format!("stage {} conditions {:?}", ch.stage, ch),
        )?;
    }
    let asm = assemble(&inst, &sched).map_err(err)?;
    for (i, sp) in asm.splits.iter().enumerate() {
        ensure(sp.b_bound <= 2f64.powi(-(i as i32 + 1)) * (1.0 + 1e-12), format!("stage {}: b bound {:.3e}", i + 1, sp.b_bound))?;
    }
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let rep = weak_visit_report(&inst, &sched, &asm, &random_battery(5, 16, seed)).map_err(err)?;
        worst = worst.max(rep.max_error);
    }
    ensure(worst < 0.1, format!("visit error {worst:.3e}"))?;
    Ok(format!("theta={:?}, max visit error {worst:.2e}", sched.theta))
}

fn slow() -> Outcome {
    let q = |x: f64| 1.0 + (1.0 + x).ln();
    let t = slow_growth_search(&q, &SlowGrowthConfig::new(3, 4096)).map_err(err)?;
    let ks: Vec<usize> = t.stages.iter().map(|s| s.k).collect();
    ensure(ks == [321, 322, 323], format!("k = {ks:?}"))?;
    ensure(t.all_verified, "not all stages verified")?;
    for k in &ks {
        ensure(t.superpoly.rate_dips.contains(k), format!("k={k} not flagged"))?;
    }
    Ok(format!("k = {ks:?}, verified and flagged"))
}

fn kernel() -> Outcome {
    let horizon = 500;
    let dy = DyadicPolynomial::from_symbol(&half_plane()).map_err(err)?;
    let x = ExactVector::kernel(-9, 10, 7 * horizon + 100).map_err(err)?;
    let (p, _) = exact_coanalytic_orbit(&dy, &x, horizon, 0).map_err(err)?;
    let f0 = p.norms[0];
    for (n, v) in p.norms.iter().enumerate() {
        let want = 1.05f64.powi(n as i32) * f0;
        ensure((v - want).abs() <= 1e-6 * want, format!("n={n}: {v} vs {want}"))?;
    }
    let rep = superpoly_profile(&p, &[3.0], None).map_err(err)?;
    let k3 = &rep.per_k[0];
    ensure((58..=65).contains(&k3.argmin), format!("argmin {}", k3.argmin))?;
    ensure(k3.increasing_after_min, "not increasing after the minimum")?;
    Ok(format!("n^-3 minimum at n={}", k3.argmin))
}

fn fft_and_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut above = 0;
    for _ in 0..200 {
        let dim = rng.gen_range(1..2 * FFT_THRESHOLD + 200);
        let len = rng.gen_range(1..=dim);
        let mut z = || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let coeffs: Vec<C64> = (0..len).map(|_| z()).collect();
        let x: Vec<C64> = (0..dim).map(|_| z()).collect();
        let t = UpperToeplitz::new(coeffs, dim).map_err(err)?;
        let a = t.apply_fft(&x).map_err(err)?;
        let b = t.apply_direct(&x).map_err(err)?;
        let scale = b.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let e = a.iter().zip(&b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max) / scale;
        worst = worst.max(e);
        above += (dim >= FFT_THRESHOLD) as usize;
    }
    ensure(worst <= 1e-12, format!("fft vs direct {worst:.2e}"))?;
    let args = ["orbitlab", "--canonical", "--seed", "42", "whc-visit", "--stages", "4", "--window", "1024"];
    let r1 = cli::run(&cli::parse_args(args).map_err(err)?).to_json();
    let r2 = cli::run(&cli::parse_args(args).map_err(err)?).to_json();
    ensure(r1 == r2, "canonical reports differ")?;
    Ok(format!("fft vs direct {worst:.1e} ({above} cases above threshold), reports identical ({} bytes)", r1.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("taylor norms of (1-z)^k (1+c-cz)^-n", taylor, Some(30.0)),
        ("quadratic orbit growth for a commuting pair", growth, Some(20.0)),
        ("cesaro means and density of large coefficients", fourier, None),
        ("tridiagonal point spectrum and classification", tridiagonal, None),
        ("toeplitz positivity and dominance", positivity, None),
        ("commutant identity and resolvent decay", commutant_and_resolvent, None),
        ("weakly hypercyclic shift construction", whc, Some(60.0)),
        ("slow orbit along a subsequence", slow, None),
        ("kernel eigenvector orbit", kernel, None),
        ("fft agreement and deterministic reports", fft_and_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if secs > *b => Err(format!("took {secs:.1}s, budget {b}s")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {:>2}: {name} [{secs:.2}s] {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name} [{secs:.2}s] {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
