//! Cross-checks between the finite-volume measures and the Monte-Carlo
//! simulator.

mod common;

use common::setup;
use pdmp_fv::{
    estimate_density, estimate_sigma_mass, run_stationary, run_transient, McConfig, SchemeParams,
    SolverMethod, TcpVariant, TestFunction,
};

fn one() -> TestFunction {
    TestFunction::new(|_, _| 1.0, f64::INFINITY, "constant")
}

#[test]
fn large_window_never_reaches_the_boundary() {
    let s = setup(TcpVariant::Infinite, 0.01, 0.01);
    let params = SchemeParams::new(0.01, 0.01, SolverMethod::DirectFactorization);
    let run = run_transient(&s.model, &s.mesh, &s.coeffs, &params, 10.0, &[]).unwrap();
    let sigma = run.measures.integrate_sigma(&one());
    assert!(sigma <= 1e-6, "sigma mass {sigma}");
    let config = McConfig::new(100_000, 10.0, 11, s.mesh.clone());
    let hits: f64 = estimate_sigma_mass(&s.model, &config, 0.1)
        .unwrap()
        .iter()
        .map(|h| h.1)
        .sum();
    assert_eq!(hits, 0.0);
}

#[test]
fn boundary_mass_matches_hit_counts() {
    let h = 0.01;
    let s = setup(TcpVariant::FiniteWithJump, h, h);
    let params = SchemeParams::new(h, h, SolverMethod::DirectFactorization);
    let run = run_transient(&s.model, &s.mesh, &s.coeffs, &params, 10.0, &[]).unwrap();
    let fv_total = run.measures.integrate_sigma(&one());
    let config = McConfig::new(200_000, 10.0, 5, s.mesh.clone());
    let series = estimate_sigma_mass(&s.model, &config, 1.0).unwrap();
    let mc_total: f64 = series.iter().map(|h| h.1).sum();
    assert!(fv_total > 0.5);
    assert!(
        (fv_total - mc_total).abs() <= 0.03 * mc_total,
        "FV {fv_total} MC {mc_total}"
    );
}

#[test]
fn hit_rate_settles_to_the_stationary_boundary_flux() {
    let h = 0.01;
    let s = setup(TcpVariant::FiniteWithJump, h, h);
    let st = run_stationary(
        &s.model,
        &s.mesh,
        &s.coeffs,
        &SchemeParams::new(1e6, h, SolverMethod::DirectFactorization),
    )
    .unwrap();
    let rate: f64 = st
        .state
        .p
        .iter()
        .zip(s.coeffs.q_vec())
        .map(|(p, q)| p * q)
        .sum();
    let config = McConfig::new(200_000, 12.0, 8, s.mesh.clone());
    let series = estimate_sigma_mass(&s.model, &config, 2.0).unwrap();
    for &(t, hits) in &series[3..] {
        let observed = hits / 2.0;
        assert!(
            (observed - rate).abs() <= 0.03 * rate,
            "t={t}: {observed} vs {rate}"
        );
    }
}

#[test]
fn monte_carlo_error_shrinks_with_particles() {
    let s = setup(TcpVariant::FiniteWithJump, 0.05, 0.05);
    let params = SchemeParams::new(0.05, 0.05, SolverMethod::DirectFactorization);
    let fv = run_transient(&s.model, &s.mesh, &s.coeffs, &params, 10.0, &[]).unwrap();
    let l1 = |n| {
        let hist = estimate_density(&s.model, &McConfig::new(n, 10.0, 3, s.mesh.clone())).unwrap();
        hist.l1_distance(&fv.final_state.p, &s.mesh)
    };
    let coarse = l1(2_000);
    let fine = l1(32_000);
    assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
}
