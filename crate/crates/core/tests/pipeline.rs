//! End-to-end paths through several modules.

use num_complex::Complex64 as C64;
use tridiag_susy::{
    band::classify_h_tridiagonal,
    factorization::{compose_band, solve_factorization_unit_gauge, susy_band},
    models::{self, build_model, ModelName, Params},
    oracle::{compare_up_to_scale, dense_eigenvalues, inverse_iteration, residual_check},
    recurrence::{run_recurrence_susy, RecurrenceOptions, Side},
    verify::{run_suite, SuiteConfig},
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn every_model_builds_with_default_parameters() {
    for name in ModelName::ALL {
        let m = build_model(name.as_str(), &Params::new()).unwrap();
        let t = m.band.truncate(16).unwrap();
        // r = 0 squeezing is diagonal, which classifies as h = 1
        let diagonal = (0..16).all(|n| m.band.b(n) == C64::default() && m.band.bp(n) == C64::default());
        let expect = if diagonal { 1 } else { m.h() };
        assert_eq!(classify_h_tridiagonal(&t, 1e-14), Some(expect), "{name}");
    }
}

#[test]
fn factorize_then_recompose() {
    let m = models::shifted_oscillator(c(0.6, -0.3), c(0.2, 0.4));
    let f = solve_factorization_unit_gauge(&m.band, 40).unwrap();
    let back = compose_band(&f);
    for n in 0..40 {
        assert!((back.a(n) - m.band.a(n)).norm() <= 1e-12 * (1.0 + m.band.a(n).norm()), "a_{n}");
        assert!((back.b(n) - m.band.b(n)).norm() <= 1e-12 * (1.0 + m.band.b(n).norm()), "b_{n}");
    }
    // the partner of any factorization shares the same h
    let partner = susy_band(&f).truncate(30).unwrap();
    assert_eq!(classify_h_tridiagonal(&partner, 1e-14), Some(1));
}

#[test]
fn susy_partner_eigenvector_matches_the_original() {
    let m = models::shifted_oscillator(c(0.8, 0.1), c(0.4, 0.0));
    for level in 0..4 {
        let (p, _) = m.eigenvector(level, 100, Side::H, &RecurrenceOptions::default()).unwrap();
        let q = run_recurrence_susy(&m.susy, m.susy_energy(level).unwrap(), 100, false).unwrap();
        let dev = compare_up_to_scale(&p.coefficients(), &q.coefficients(), 0..60);
        assert!(dev <= 1e-12, "level {level}: {dev:e}");
    }
}

#[test]
fn recurrence_dense_and_inverse_iteration_agree() {
    let m = models::double_translation(c(0.2, 0.1), c(0.3, 0.0), c(0.1, -0.1), c(0.0, 0.2));
    let t = m.band.truncate(80).unwrap();
    let est = dense_eigenvalues(&t).unwrap();
    for level in 0..3 {
        let e = m.energy(level).unwrap();
        let nearest = est.eigenvalues.iter().map(|z| (z - e).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-8, "level {level}: {nearest:e}");
        let (p, _) = m.eigenvector(level, 80, Side::H, &RecurrenceOptions::default()).unwrap();
        assert!(residual_check(&t, e, &p, 1e-10).unwrap().pass);
        let it = inverse_iteration(&t, e, 5).unwrap();
        assert!(compare_up_to_scale(&p.coefficients(), &it.vector, 0..t.interior_hi + 1) <= 1e-9);
    }
}

#[test]
fn suites_pass_for_moderate_parameters() {
    let models = [
        models::shifted_oscillator(c(0.7, 0.2), c(0.3, -0.1)),
        models::shifted_square_well(c(0.5, 0.5), c(1.0, 0.0)),
        models::squeezed(0.4, 0.9).unwrap(),
        models::double_translation(c(0.1, 0.0), c(0.2, 0.0), c(0.3, 0.0), c(0.4, 0.0)),
    ];
    for m in &models {
        let rep = run_suite(m, &SuiteConfig::default());
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{}: {failed:?}", m.name);
    }
}
