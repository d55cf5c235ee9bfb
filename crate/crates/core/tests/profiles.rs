use proptest::prelude::*;
use sobolev_topo::pipeline::{ProfileKind, RadialProfile};

fn log_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// `(phi s)'` by a central difference with relative step.
fn g_prime(p: &RadialProfile, s: f64) -> f64 {
    let e = 1e-6 * s;
    ((s + e) * p.phi(s + e) - (s - e) * p.phi(s - e)) / (2.0 * e)
}

/// Checks every profile invariant against test-side evaluations of `phi`.
fn check_profile(p: &RadialProfile, limit: f64, m: usize) {
    let rho = p.rho;
    for i in 0..=100 {
        let s = rho + (1.0 - rho) * i as f64 / 100.0;
        assert_eq!(p.phi(s), 1.0, "phi({s})");
    }
    let grid = log_grid(20_000);
    for w in grid.windows(2) {
        assert!(w[1] * p.phi(w[1]) > w[0] * p.phi(w[0]), "g not increasing at {}", w[0]);
    }
    let s = 1e-8;
    assert!(
        (p.phi(s) * s - limit).abs() <= 0.1 * limit,
        "limit {} vs {limit}",
        p.phi(s) * s
    );
    // Jacobian phi^{m-1} (phi s)' of the radial map against s^{-beta}
    let beta = m as f64 - 0.5;
    assert_eq!(p.certificate.beta, beta);
    let floor = grid
        .iter()
        .filter(|&&s| s < rho * (1.0 - 1e-5))
        .map(|&s| p.phi(s).powi(m as i32 - 1) * g_prime(p, s) * s.powf(beta))
        .fold(f64::INFINITY, f64::min);
    assert!(floor > 0.0);
    assert!(p.certificate.jacobian_floor > 0.0);
    assert!((p.certificate.jacobian_floor - floor).abs() <= 1e-3 * floor.max(1e-300) + 1e-12);
}

#[test]
fn thickening_and_shrinking_profiles_on_the_parameter_grid() {
    let theta = 1.4;
    for m in [2, 3] {
        for r in [0.1, 0.2] {
            for rho in [0.3, 0.4] {
                let t = RadialProfile::thickening(r, rho, m).unwrap();
                check_profile(&t, r, m);
                for tau in [r / 4.0, r / 8.0] {
                    let p = RadialProfile::shrinking(r, rho, tau, theta, m).unwrap();
                    check_profile(&p, theta * r, m);
                    let ProfileKind::Shrinking { gamma, .. } = p.kind else {
                        panic!("shrinking kind expected");
                    };
                    let x = (1.0 + gamma).sqrt();
                    assert!(theta < x && x < 1.0 / tau, "{x}");
                    assert!((p.phi(tau * x) * tau - r).abs() < 1e-9);
                    // bracket endpoints of the root equation
                    assert!(p.phi(tau * theta) * tau > r);
                    assert!(p.phi(1.0) * tau < r);
                }
            }
        }
    }
}

#[test]
fn invalid_parameters_are_refused() {
    assert!(RadialProfile::thickening(0.4, 0.3, 2).is_err());
    assert!(RadialProfile::thickening(0.1, 1.0, 2).is_err());
    assert!(RadialProfile::shrinking(0.2, 0.4, 0.3, 1.4, 2).is_err());
    // theta r must stay below rho
    assert!(RadialProfile::shrinking(0.2, 0.3, 0.05, 1.6, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn profile_is_continuous_and_increasing(r in 0.02..0.6f64, gap in 0.05..0.35f64, m in 2usize..=3) {
        let rho = (r + gap).min(0.98);
        let p = RadialProfile::thickening(r, rho, m).unwrap();
        let below = (rho - 1e-9) * p.phi(rho - 1e-9);
        prop_assert!((below - rho).abs() < 1e-7);
        prop_assert!(g_prime(&p, rho * 0.999) > 0.0);
        prop_assert!(p.certificate.strictly_increasing && p.certificate.identity_beyond_rho);
    }
}
