use nalgebra::DMatrix;
use orbitlab::num_core::{c, inner, ComplexVector, C64};
use orbitlab::shifts::WeightSequence;
use orbitlab::whc_construct::*;
use proptest::prelude::*;

// largest eigenvalue of the normalized Gram matrix, computed directly
fn gram_lambda_max(vs: &[ComplexVector]) -> f64 {
    let m = vs.len();
    let g = DMatrix::from_fn(m, m, |i, j| inner(&vs[i], &vs[j]) / (vs[i].norm() * vs[j].norm()));
    let g = (&g + g.adjoint()) * c(0.5, 0.0);
    g.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn family() -> impl Strategy<Value = Vec<ComplexVector>> {
    (2usize..12, 2usize..24).prop_flat_map(|(count, dim)| {
        prop::collection::vec(prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim), count).prop_map(|vs| {
            vs.into_iter()
                .map(|v| {
                    let mut e: Vec<C64> = v.into_iter().map(|(a, b)| c(a, b)).collect();
                    e[0] += c(1e-3, 0.0);
                    ComplexVector::new(e).unwrap()
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gram_spectrum_stays_below_sound_bound(vs in family()) {
        let r = gram_check(&vs, &[]).unwrap();
        let lmax = gram_lambda_max(&vs);
        prop_assert!((r.max_gram_eigenvalue.unwrap() - lmax).abs() <= 1e-9);
        prop_assert!(lmax <= r.sound_bound + 1e-9, "{} > {}", lmax, r.sound_bound);
    }
}

#[test]
fn stated_gram_constant_fails_for_two_correlated_vectors() {
    // ⟨u, v⟩ = ρ gives λmax = 1 + ρ but 1 + √(r/2) = 1 + ρ/√2
    let rho = 0.6;
    let u = ComplexVector::from_real(&[1.0, 0.0]).unwrap();
    let v = ComplexVector::from_real(&[rho, (1.0f64 - rho * rho).sqrt()]).unwrap();
    let r = gram_check(&[u, v], &[]).unwrap();
    assert!((r.max_gram_eigenvalue.unwrap() - 1.6).abs() < 1e-12);
    assert!((r.stated_bound - (1.0 + rho / 2f64.sqrt())).abs() < 1e-12);
    assert!(r.stated_bound_violated);
    assert!(r.max_gram_eigenvalue.unwrap() <= r.sound_bound);
}

// occurrences, last stage and ratio of target 1, recounted from the values
fn recount(values: &[usize], cn: &dyn Fn(usize) -> f64, dn: &dyn Fn(usize) -> f64) -> (usize, usize, f64) {
    let occ = values.iter().filter(|&&v| v == 1).count();
    let last = values.iter().rposition(|&v| v == 1).unwrap() + 1;
    let sum: f64 = values[..last].iter().map(|&v| cn(v)).sum();
    (occ, last, sum / dn(occ))
}

#[test]
fn block_schedule_for_unit_targets() {
    let cn = |_: usize| 1.0;
    let dn = |m: usize| m as f64 * (m as f64 + 1.0).ln();
    let p = phi_map(&cn, &dn, 1_000_000).unwrap();
    assert_eq!(p.block_reps, vec![Some(2), Some(54), Some(8103), None]);
    assert_eq!(p.values.len(), 1_000_000);
    let (occ, last, ratio) = recount(&p.values, &cn, &dn);
    assert_eq!((occ, last), (252_055, 1_000_000));
    assert!((ratio - 0.31899).abs() < 1e-4, "{ratio}");
    assert!((p.final_ratio - ratio).abs() < 1e-12);
}

#[test]
fn block_schedule_for_linear_targets() {
    let cn = |n: usize| n as f64;
    let dn = |m: usize| m as f64 * (m as f64 + 1.0).ln();
    let p = phi_map(&cn, &dn, 1_000_000).unwrap();
    assert_eq!(p.block_reps, vec![Some(2), Some(2980), None]);
    let (occ, last, ratio) = recount(&p.values, &cn, &dn);
    assert_eq!((occ, last), (334_328, 999_998));
    let sum: f64 = p.values[..last].iter().map(|&v| v as f64).sum();
    assert_eq!(sum, 1_997_013.0);
    assert!((ratio - 0.469).abs() < 1e-3, "{ratio}");
}

#[test]
fn single_stage_construction() {
    let inst = WhcInstance::chan_sanders(256, rational_targets(1, 2, 3)).unwrap();
    let phi = cyclic_phi(1, 1).unwrap();
    let s = build_theta(&inst, &phi, None).unwrap();
    assert_eq!(s.theta, vec![0]);
    let asm = assemble(&inst, &s).unwrap();
    assert!(asm.splits.iter().all(|x| x.decomposition_error <= DECOMPOSITION_TOL));
}

#[test]
fn chan_sanders_six_stages() {
    let inst = WhcInstance::chan_sanders(2048, rational_targets(3, 3, 5)).unwrap();
    let phi = cyclic_phi(3, 6).unwrap();
    let s = build_theta(&inst, &phi, None).unwrap();
    verify_schedule(&inst, &s).unwrap();
    for w in s.theta.windows(2) {
        assert!(w[0] < w[1]);
    }
    let asm = assemble(&inst, &s).unwrap();
    for (r, sp) in asm.splits.iter().enumerate() {
        assert!(sp.b_bound <= 2f64.powi(-(r as i32 + 1)) * (1.0 + 1e-12));
        assert!(sp.decomposition_error <= DECOMPOSITION_TOL);
    }
    // each target tested against its own normalized functional
    let own: Vec<ComplexVector> = rational_targets(3, 3, 5).iter().map(|t| t.scale(c(1.0 / t.norm(), 0.0))).collect();
    let v = weak_visit_report(&inst, &s, &asm, &own).unwrap();
    assert!(v.max_error < 0.5, "{}", v.max_error);
}

#[test]
fn contractive_and_oversized_instances_are_rejected() {
    let w = WeightSequence::constant(0.5, 64, 2.0).unwrap();
    assert!(WhcInstance::new(w, rational_targets(1, 2, 0)).unwrap_err().is_hypothesis());
    let inst = WhcInstance::chan_sanders(64, rational_targets(4, 4, 0)).unwrap();
    let phi = cyclic_phi(4, 20).unwrap();
    assert!(matches!(build_theta(&inst, &phi, None), Err(orbitlab::error::LabError::WindowOverflow { .. })));
}

#[test]
fn slow_growth_meets_its_own_constraints() {
    let q = |x: f64| 1.0 + (1.0 + x).ln();
    let t = slow_growth_search(&q, &SlowGrowthConfig::new(3, 4096)).unwrap();
    assert!(t.all_verified);
    let mut prev = 0;
    for s in &t.stages {
        assert!(s.k > prev);
        prev = s.k;
        assert!(s.phi_l2 <= s.q_at_k / 4.0 * (1.0 + 1e-12));
        assert!(s.orbit_norm < s.q_at_k);
    }
}
