use nalgebra::{DMatrix, DVector};
use orbitlab::num_core::*;
use proptest::prelude::*;

fn cvec(max_len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), 1..=max_len)
}

// y_i = Σ_d a_d x_{i+d}, written out independently of the library
fn naive_upper(a: &[C64], x: &[C64]) -> Vec<C64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..a.len()).filter(|d| i + d < n).map(|d| a[d] * x[i + d]).sum())
        .collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_matches_direct(x in cvec(512), band in 1usize..64) {
        let n = x.len();
        let coeffs: Vec<C64> = (0..band.min(n)).map(|d| c(1.0 / (d + 1) as f64, (d as f64).sin())).collect();
        let t = UpperToeplitz::new(coeffs.clone(), n).unwrap();
        let fast = t.apply_fft(&x).unwrap();
        let slow = t.apply_direct(&x).unwrap();
        prop_assert!(max_diff(&fast, &slow) <= 1e-12);
        prop_assert!(max_diff(&slow, &naive_upper(&coeffs, &x)) <= 1e-13);
    }

    #[test]
    fn toeplitz_apply_is_linear(x in cvec(200), y_seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let n = x.len();
        let y: Vec<C64> = (0..n).map(|i| c(((i as u64 + y_seed) as f64).cos(), 0.5)).collect();
        let t = UpperToeplitz::new(vec![c(2.0, 0.0), c(-1.0, 0.5), c(0.25, 0.0)].into_iter().take(n).collect(), n).unwrap();
        let xv = ComplexVector::new(x.clone()).unwrap();
        let yv = ComplexVector::new(y).unwrap();
        let (a, b) = (c(alpha, 0.0), c(beta, -alpha));
        let lhs = toeplitz_apply(&t, &xv.scale(a).add(&yv.scale(b))).unwrap();
        let rhs = toeplitz_apply(&t, &xv).unwrap().scale(a).add(&toeplitz_apply(&t, &yv).unwrap().scale(b));
        prop_assert!(max_diff(lhs.entries(), rhs.entries()) <= 1e-12);
    }

    #[test]
    fn min_eigenvalue_of_direct_sum(n1 in 1usize..12, n2 in 1usize..12, seed in 0u64..500) {
        let herm = |n: usize, s: u64| {
            let m = DMatrix::from_fn(n, n, |i, j| c(((i * 7 + j * 3) as f64 + s as f64).sin(), ((i + 2 * j) as f64 * 0.3 + s as f64).cos()));
            (&m + m.adjoint()) * c(0.5, 0.0)
        };
        let a = herm(n1, seed);
        let b = herm(n2, seed + 1);
        let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(&a);
        m.view_mut((n1, n1), (n2, n2)).copy_from(&b);
        let la = min_eigenvalue(&DenseHermitian::new(a).unwrap()).unwrap();
        let lb = min_eigenvalue(&DenseHermitian::new(b).unwrap()).unwrap();
        let lab = min_eigenvalue(&DenseHermitian::new(m).unwrap()).unwrap();
        prop_assert!((lab - la.min(lb)).abs() <= 1e-10);
    }
}

#[test]
fn norm_p_matches_definition() {
    let x = ComplexVector::from_real(&[3.0, -4.0]).unwrap();
    assert!((norm_p(&x, 2.0).unwrap() - 5.0).abs() < 1e-15);
    assert!((norm_p(&x, 1.0).unwrap() - 7.0).abs() < 1e-15);
    assert!(norm_p(&x, 0.5).is_err());
}

#[test]
fn non_hermitian_is_rejected() {
    let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    assert!(matches!(DenseHermitian::new(m), Err(orbitlab::error::LabError::NonHermitian { .. })));
}

#[test]
fn large_matrix_min_eigenvalue() {
    // H D H with a Householder reflector H: spectrum is that of D, with the
    // minimum separated from the rest
    let n = 1100;
    let v = DVector::from_fn(n, |i, _| c((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
    let v = &v / c(v.norm(), 0.0);
    let dv = DVector::from_fn(n, |i, _| c(if i == 17 { -1.0 } else { 1.0 + i as f64 / n as f64 }, 0.0));
    let vdv = v.dotc(&dv.component_mul(&v));
    let dvv = dv.component_mul(&v);
    // (I − 2vv*) D (I − 2vv*) expanded as rank-two updates of D
    let mut a = DMatrix::from_diagonal(&dv);
    a -= (&dvv * v.adjoint() + &v * dvv.adjoint()) * c(2.0, 0.0);
    a += (&v * v.adjoint()) * (vdv * c(4.0, 0.0));
    let got = min_eigenvalue(&DenseHermitian::new(a).unwrap()).unwrap();
    assert!((got + 1.0).abs() < 1e-9, "{got}");
}
