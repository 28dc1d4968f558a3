use orbitlab::num_core::{c, C64};
use orbitlab::symbols::SymbolSeries;
use orbitlab::toeplitz_ops::*;
use proptest::prelude::*;

fn series(v: &[(f64, f64)]) -> SymbolSeries {
    SymbolSeries::polynomial(v.iter().map(|&(a, b)| c(a, b)).collect(), "p").unwrap()
}

fn coeffs(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_len)
}

#[test]
fn coanalytic_truncation_is_exact_for_window_inputs() {
    let g = series(&[(1.5, 0.0), (0.5, 0.25), (-0.25, 0.0)]);
    let n = 200;
    let small = build(&g, n, Flavor::Coanalytic).unwrap();
    let big = build(&g, 2 * n, Flavor::Coanalytic).unwrap();
    let mut x: Vec<C64> = (0..n).map(|j| c((j as f64).cos(), 1.0 / (j + 1) as f64)).collect();
    let mut y: Vec<C64> = x.iter().cloned().chain(std::iter::repeat_n(c(0.0, 0.0), n)).collect();
    for _ in 0..10 {
        x = small.apply(&x).unwrap();
        y = big.apply(&y).unwrap();
        assert_eq!(&x[..], &y[..n]);
    }
}

#[test]
fn scalar_violation_reports_minus_three() {
    let one = SymbolSeries::constant(c(1.0, 0.0));
    let two = SymbolSeries::constant(c(2.0, 0.0));
    let r = positivity_equiv(&[one], &[two], 256).unwrap();
    assert!((r.min_eigenvalue + 3.0).abs() <= 1e-9);
    assert!(!r.h_nonnegative);
    assert!(r.implication_holds);
}

#[test]
fn kernel_residual_decays_geometrically() {
    let g = series(&[(1.5, 0.0), (0.5, 0.0), (0.0, 0.3)]);
    let w = c(0.6, 0.5);
    let r = w.norm();
    let res: Vec<f64> = [20, 30, 40, 50].iter().map(|&n| kernel_eigencheck(&g, w, n).unwrap().residual).collect();
    for pair in res.windows(2) {
        let ratio = (pair[1] / pair[0]).powf(0.1);
        assert!(ratio <= r + 0.02, "per-step ratio {ratio} vs |w| = {r}");
    }
}

#[test]
fn tridiagonal_example_branches() {
    let t = Tridiag::new(c(1.0, 0.0), c(0.0, 0.0), c(0.25, 0.0));
    for z in [0.6, 0.5] {
        let e = tridiag_eigen(&t, c(z, 0.0), 2000).unwrap();
        assert!(e.residual <= 1e-10);
        assert!(e.literal_residual > 1e-2);
    }
    let rep = hypercyclicity_classify(&SymbolInput::Tridiagonal(t));
    assert_eq!(rep.verdict, HcVerdict::Hypercyclic);
    assert!((rep.min_modulus - 0.75).abs() < 1e-9 && (rep.max_modulus - 1.25).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_terms_moves_min_eigenvalue_monotonically(h in coeffs(4), g in coeffs(4), extra in coeffs(4)) {
        let (h, g, extra) = (series(&h), series(&g), series(&extra));
        let n = 48;
        let base = positivity_equiv(std::slice::from_ref(&h), std::slice::from_ref(&g), n).unwrap();
        let more_plus = positivity_equiv(&[h.clone(), extra.clone()], std::slice::from_ref(&g), n).unwrap();
        let more_minus = positivity_equiv(&[h], &[g, extra], n).unwrap();
        let tol = base.tol.max(1e-12);
        prop_assert!(more_plus.min_eigenvalue >= base.min_eigenvalue - tol);
        prop_assert!(more_minus.min_eigenvalue <= base.min_eigenvalue + tol);
    }

    #[test]
    fn nonnegative_boundary_function_gives_positive_compression(a in coeffs(5), b in coeffs(5), slack in 0.0f64..0.5) {
        // plus = {a, b, s}, minus = {a}; H = |b|² + |s|² ≥ 0
        let (a, b) = (series(&a), series(&b));
        let s = SymbolSeries::constant(c(slack, 0.0));
        let r = positivity_equiv(&[a.clone(), b, s], &[a], 256).unwrap();
        prop_assert!(r.h_nonnegative);
        prop_assert!(r.min_eigenvalue >= -r.tol, "{} < -{}", r.min_eigenvalue, r.tol);
    }

    #[test]
    fn dominance_orderings_agree_for_invertible_symbols(a0 in 2.5f64..4.0, h in coeffs(3), g1 in -0.5f64..0.5) {
        let g = series(&[(a0, 0.0), (g1, 0.2)]);
        let h = series(&h);
        let r = dominance_check(&[h], &g, 96).unwrap();
        prop_assert!(r.orderings_agree, "{r:?}");
    }
}
