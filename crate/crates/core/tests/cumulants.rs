use faer::Mat;
use proptest::prelude::*;
use sheetlaw::cumulants::{
    contraction_eig_gap, contractions, corollary2_kernel, cumulant_coefficient, cumulant_m, fubini_check,
    fubini_check_with_spectra, phi_value, random_kernel, Kernel4, TRACE_TOL,
};
use sheetlaw::rng::NormalStream;
use sheetlaw::spectral::{analytic_spectrum, kl_samples, spectrum_from_matrix, tensor_spectrum};
use sheetlaw::stats::{batched_k_statistic, mean_se};
use sheetlaw::ProcessKind;

fn diag_trace(m: &Mat<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Row-major copy of `w · m`.
fn weighted_values(m: &Mat<f64>, w: f64) -> Vec<f64> {
    let side = m.nrows();
    (0..side * side).map(|k| w * m[(k / side, k % side)]).collect()
}

/// Sample variance and its standard error from squared deviations.
fn variance_se(xs: &[f64]) -> (f64, f64) {
    let (m, _) = mean_se(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    mean_se(&dev)
}

#[test]
fn identity_contractions() {
    let n = 3;
    let k = Kernel4::from_fn(n, |p, q| if p == q { 1.0 } else { 0.0 }).unwrap();
    let pair = contractions(&k);
    let h2 = 1.0 / 9.0;
    for i in 0..9 {
        for j in 0..9 {
            let expected = if i == j { h2 } else { 0.0 };
            assert!((pair.phi1[(i, j)] - expected).abs() < 1e-16);
            assert!((pair.phi2[(i, j)] - expected).abs() < 1e-16);
        }
    }
}

#[test]
fn random_contractions_are_symmetric_psd() {
    let pair = contractions(&random_kernel(5, 3).unwrap());
    for m in [&pair.phi1, &pair.phi2] {
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        let s = spectrum_from_matrix(&weighted_values(m, 1.0), 25, 1.0, "gram").unwrap();
        // spectrum_from_matrix rejects eigenvalues below -1e-10 · top
        assert!(s.eigs[0] > 0.0);
    }
}

#[test]
fn phi1_trace_approaches_bridge_trace() {
    // ∫ (t1 t2 - t1² t2²) dt = 1/4 - 1/9
    let exact = 5.0 / 36.0;
    let mut prev = f64::INFINITY;
    for n in [8, 16] {
        let pair = contractions(&corollary2_kernel(1, n).unwrap());
        let err = (diag_trace(&pair.phi2) * pair.weight - exact).abs();
        assert!(err <= 1.0 / n as f64, "n={n}: {err}");
        assert!(err < prev);
        prev = err;
    }
}

#[test]
fn cumulant_examples() {
    let id = Mat::<f64>::identity(2, 2);
    assert_eq!(cumulant_m(&id, 1.0, 2).unwrap(), 4.0);
    assert!(cumulant_m(&id, 1.0, 1).is_err());
    assert!(cumulant_m(&Mat::<f64>::zeros(2, 3), 1.0, 2).is_err());
    let lam: f64 = 0.3;
    let one = Mat::from_fn(1, 1, |_, _| lam);
    for m in 2..=6 {
        let expected = cumulant_coefficient(m) * lam.powi(m as i32);
        assert!((cumulant_m(&one, 1.0, m).unwrap() - expected).abs() <= 1e-15 * expected);
    }
    let pair = contractions(&random_kernel(4, 8).unwrap());
    assert!(cumulant_m(&pair.phi2, pair.weight, 2).unwrap() >= 0.0);
}

#[test]
fn rank_one_cumulants_match_monte_carlo() {
    let lambda = 1.3;
    let mut xs = vec![0.0; 1_000_000];
    NormalStream::new(77).fill(&mut xs);
    xs.iter_mut().for_each(|z| *z = lambda * (*z * *z - 1.0));
    let op = Mat::from_fn(1, 1, |_, _| lambda);
    for m in 2..=4 {
        let exact = cumulant_m(&op, 1.0, m).unwrap();
        let (k, se) = batched_k_statistic(&xs, m, 100).unwrap();
        assert!((k - exact).abs() <= 3.0 * se, "m={m}: {k} ± {se} vs {exact}");
    }
}

#[test]
fn random_kernels_pass_fubini() {
    for seed in 0..100 {
        let r = fubini_check(&random_kernel(8, seed).unwrap(), 6).unwrap();
        assert!(r.pass, "seed {seed}: {}", r.max_rel_gap);
        assert_eq!(r.traces.len(), 5);
        assert!(r.max_rel_gap <= TRACE_TOL);
    }
}

#[test]
fn zero_kernel() {
    let r = fubini_check(&Kernel4::from_fn(4, |_, _| 0.0).unwrap(), 6).unwrap();
    assert!(r.pass);
    assert!(r.traces.iter().all(|t| t.phi1 == 0.0 && t.phi2 == 0.0));
}

#[test]
fn argument_errors() {
    assert!(Kernel4::from_fn(2, |_, _| f64::NAN).is_err());
    assert!(Kernel4::from_fn(0, |_, _| 0.0).is_err());
    assert!(corollary2_kernel(5, 4).is_err());
    assert!(phi_value(0, (0.5, 0.5), (0.1, 0.1)).is_err());
    assert!(fubini_check(&random_kernel(2, 0).unwrap(), 1).is_err());
}

#[test]
fn phi_values() {
    assert_eq!(phi_value(1, (0.5, 0.5), (0.25, 0.25)).unwrap(), 0.75);
    // four-term kernel: (1 - t1)(1 - t2) inside both indicators
    let (t1, t2) = (0.96875, 0.96875);
    assert!((phi_value(2, (t1, t2), (0.90625, 0.90625)).unwrap() - (1.0 - t1) * (1.0 - t2)).abs() < 1e-16);
    assert!((phi_value(2, (t1, t2), (0.99, 0.5)).unwrap() - (-t1 * (1.0 - t2))).abs() < 1e-16);
    assert_eq!(phi_value(3, (0.5, 0.5), (0.7, 0.2)).unwrap(), -0.5);
    assert_eq!(phi_value(4, (0.5, 0.5), (0.7, 0.2)).unwrap(), 0.0);
}

#[test]
fn kiefer_kernel_diagonal() {
    // n=15 has a midpoint at 0.5
    let n = 15;
    let pair = contractions(&corollary2_kernel(3, n).unwrap());
    let p = 7 * n + 7;
    assert!((pair.phi2[(p, p)] - 0.125).abs() <= 1.0 / n as f64);
}

#[test]
fn tied_down_kernel_variance_against_kl() {
    let c2 = |n: usize| {
        let pair = contractions(&corollary2_kernel(2, n).unwrap());
        assert!(fubini_check(&corollary2_kernel(2, n).unwrap(), 4).unwrap().pass);
        cumulant_m(&pair.phi2, pair.weight, 2).unwrap()
    };
    let (c16, c32) = (c2(16), c2(32));
    // h² bias: Richardson estimate of the n=16 discretization error
    let extrapolated = (4.0 * c32 - c16) / 3.0;
    let bias = (c16 - extrapolated).abs();

    let b = analytic_spectrum(ProcessKind::Bridge1D, 2000).unwrap();
    let bb = tensor_spectrum(&b, &b, 2000).unwrap();
    let (var, se) = variance_se(&kl_samples(&bb, 400, 100_000, 3));
    assert!((c16 - var).abs() <= 3.0 * se + bias, "{c16} vs {var} ± {se}, bias {bias}");
    assert!((extrapolated - var).abs() <= 3.0 * se, "{extrapolated} vs {var} ± {se}");
}

#[test]
fn second_cumulant_is_frobenius_and_kl_variance() {
    let n = 8;
    for which in 1..=4 {
        let pair = contractions(&corollary2_kernel(which, n).unwrap());
        let c2 = cumulant_m(&pair.phi2, pair.weight, 2).unwrap();
        let vals = weighted_values(&pair.phi2, pair.weight);
        let frob: f64 = vals.iter().map(|v| v * v).sum();
        assert!((c2 - 2.0 * frob).abs() <= 1e-12 * c2);
        let s = spectrum_from_matrix(&vals, n * n, 1.0, "phi2").unwrap();
        let (var, se) = variance_se(&kl_samples(&s, s.len(), 100_000, 40 + which as u64));
        assert!((var - c2).abs() <= 3.0 * se, "phi{which}: {var} ± {se} vs {c2}");
    }
}

#[test]
fn contraction_spectra_coincide() {
    for which in 1..=4 {
        let r = fubini_check_with_spectra(&corollary2_kernel(which, 6).unwrap(), 6).unwrap();
        assert!(r.pass && r.eig_gap.unwrap() <= 1e-10, "phi{which}: {:?}", r.eig_gap);
    }
    let pair = contractions(&random_kernel(5, 1).unwrap());
    assert!(contraction_eig_gap(&pair).unwrap() <= 1e-10);
}

#[test]
fn report_serializes() {
    let r = fubini_check(&random_kernel(3, 2).unwrap(), 3).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["traces"].as_array().unwrap().len(), 2);
    assert!(v["pass"].as_bool().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fubini_holds_for_any_kernel(seed in any::<u64>(), n in 1usize..7, m_max in 2u32..7) {
        let r = fubini_check(&random_kernel(n, seed).unwrap(), m_max).unwrap();
        prop_assert!(r.pass, "gap {}", r.max_rel_gap);
    }
}
