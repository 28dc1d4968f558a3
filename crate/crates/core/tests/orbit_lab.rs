use orbitlab::num_core::{c, ComplexVector};
use orbitlab::orbit_lab::*;
use orbitlab::symbols::{cap_function, SymbolSeries};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// coefficients of (1−z)^k (1+c−cz)^{−n} by repeated series division
fn series_oracle(k: u32, cp: f64, n: usize, len: usize) -> Vec<f64> {
    let mut a = vec![0.0; len];
    a[0] = 1.0;
    for _ in 0..k {
        for m in (1..len).rev() {
            a[m] -= a[m - 1];
        }
    }
    // divide by (1+c) − cz: b_m = (a_m + c b_{m−1}) / (1+c)
    for _ in 0..n {
        let mut prev = 0.0;
        for v in a.iter_mut() {
            prev = (*v + cp * prev) / (1.0 + cp);
            *v = prev;
        }
    }
    a
}

#[test]
fn taylor_coefficients_match_series_division() {
    for (k, cp, n) in [(2, 1.0, 1), (2, 1.0, 7), (3, 0.5, 12), (1, 2.0, 30)] {
        let (a, _) = taylor_coefficients(k, cp, n);
        let want = series_oracle(k, cp, n, a.len());
        for (m, (x, y)) in a.iter().zip(&want).enumerate() {
            assert!((x - y).abs() <= 1e-13, "k={k} c={cp} n={n} m={m}: {x} vs {y}");
        }
    }
}

#[test]
fn first_taylor_row_closed_form() {
    let (a, _) = taylor_coefficients(2, 1.0, 1);
    assert_eq!(a[0], 0.5);
    assert_eq!(a[1], -0.75);
    for (m, v) in a.iter().enumerate().skip(2).take(30) {
        assert_eq!(*v, 2f64.powi(-(m as i32 + 1)));
    }
    let t = taylor_norms(2, 1.0, 1).unwrap();
    assert!((t.rows[0].norm - 1.5).abs() < 1e-14);
}

#[test]
fn kernel_orbit_exact_and_float_agree() {
    let g = SymbolSeries::from_real(&[1.5, 0.5]).unwrap();
    let dy = DyadicPolynomial::from_symbol(&g).unwrap();
    // the dropped tail grows like 2ⁿ·0.9^N, so N ≈ 7·horizon keeps it negligible
    let len = 7 * 300 + 100;
    let x = ExactVector::kernel(-9, 10, len).unwrap();
    let (exact, _) = exact_coanalytic_orbit(&dy, &x, 300, 0).unwrap();
    let f0 = exact.norms[0];
    for (n, v) in exact.norms.iter().enumerate() {
        let want = 1.05f64.powi(n as i32) * f0;
        assert!((v - want).abs() <= 1e-6 * want, "n={n}");
    }
    let op = CoanalyticToeplitz::new(&g, len).unwrap();
    let xf = x.to_float().unwrap();
    // float rounding grows like (‖T‖/1.05)ⁿ ≈ 1.9ⁿ off the eigendirection
    let float = iterate_orbit(&op, &xf, 25).unwrap();
    for n in 0..=25 {
        assert!((float.norms[n] - exact.norms[n]).abs() <= 1e-8 * exact.norms[n]);
    }
}

#[test]
fn commutant_identity_holds_for_random_contractions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let s = random_contraction(16, 0.9, &mut rng);
        for cp in [0.5, 1.0, 2.0] {
            let r = commutant_identity(&s, cp).unwrap();
            assert!(r.residual <= 1e-12);
            assert!(r.premise_min_eig >= -1e-12);
        }
    }
    let big = backward_shift_matrix(4) * c(2.0, 0.0);
    assert!(commutant_identity(&big, 1.0).unwrap_err().is_hypothesis());
}

#[test]
fn resolvent_decay_bound_holds_for_backward_shift() {
    let t = resolvent_power_decay(&backward_shift_matrix(64), 1.0, 3, 128).unwrap();
    assert!(t.bound_holds);
    assert!(t.fitted_exponent.unwrap() <= -0.9);
}

fn random_x(seed: u64, n: usize) -> ComplexVector {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<_> = (0..n).map(|j| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + j as f64 / 8.0)).collect();
    ComplexVector::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orbits_of_expanding_symbols_increase(seed in 0u64..10_000, a in 2.0f64..3.0) {
        // g(z) = a + z keeps g(𝔻) outside 𝔻 for a ≥ 2
        let g = SymbolSeries::from_real(&[a, 1.0]).unwrap();
        let op = CoanalyticToeplitz::new(&g, 256).unwrap();
        let p = iterate_orbit(&op, &random_x(seed, 256), 40).unwrap();
        for w in p.norms.windows(2) {
            prop_assert!(w[1] > w[0] - 1e-12 * w[0]);
        }
    }

    #[test]
    fn growth_bound_has_no_violation_when_premise_holds(seed in 0u64..10_000) {
        let g = SymbolSeries::from_real(&[1.5, 0.5]).unwrap();
        let h = cap_function(&g).unwrap();
        let n = 96;
        let t = CoanalyticToeplitz::new(&g, n).unwrap();
        let s = CoanalyticToeplitz::new(&h, n).unwrap();
        let r = quadratic_growth_bound(&t, &s, &random_x(seed, n), 60).unwrap();
        prop_assert!(r.premise_min_eig >= -1e-8);
        prop_assert!(r.violations.is_empty());
    }

    #[test]
    fn summability_partial_sums_are_monotone(norms in prop::collection::vec(0.01f64..100.0, 1..80), ce in 0.1f64..3.0) {
        let p = OrbitProfile::from_norms(norms, "t", "x");
        let r = summability_certificate(&p, ce, TailCertificate::None).unwrap();
        for w in r.partial_sums.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }
}
