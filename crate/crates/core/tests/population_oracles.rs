use mixem::{
    contraction_constants, dm_deta_closed, dm_dlambda_closed, em_map_closed, em_map_quadrature,
    em_map_ratio_form, run_population_em, QuadratureSettings,
};

fn laplace(x: f64, mu: f64) -> f64 {
    0.5 * (-(x - mu).abs()).exp()
}

/// Midpoint Riemann sum of the posterior-ratio definition over `[mu-40, mu+40]`.
fn riemann_map(lambda: f64, mu: f64, h: f64) -> f64 {
    let lo = -mu.abs() - 40.0;
    let hi = mu.abs() + 40.0;
    let n = ((hi - lo) / h).round() as usize;
    let step = (hi - lo) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * step;
        let p = 0.5 * laplace(x, mu) + 0.5 * laplace(x, -mu);
        let a = laplace(x, lambda);
        let b = laplace(x, -lambda);
        let w = a / (a + b);
        num += x * w * p;
        den += w * p;
    }
    num / den
}

#[test]
fn riemann_oracle_matches_closed_and_quadrature() {
    let qs = QuadratureSettings::default();
    for (lambda, mu) in [(0.5, 1.0), (0.2, 2.5), (1.5, 0.7)] {
        let oracle = riemann_map(lambda, mu, 1e-5);
        let quad = em_map_quadrature(lambda, mu, &qs).unwrap();
        assert!(
            (oracle - quad).abs() < 1e-6,
            "({lambda},{mu}): {oracle} vs {quad}"
        );
        if lambda < mu {
            let closed = em_map_closed(lambda, mu).unwrap();
            assert!(
                (oracle - closed).abs() < 1e-6,
                "({lambda},{mu}): {oracle} vs {closed}"
            );
        }
    }
}

#[test]
fn pinned_reference_value() {
    let closed = em_map_closed(0.5, 1.0).unwrap();
    assert!((closed - 0.625_238_374_987_606).abs() < 1e-12);
}

#[test]
fn derivatives_against_central_differences() {
    let qs = QuadratureSettings {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        ..Default::default()
    };
    let h = 1e-5;
    let m = |l: f64, u: f64| em_map_quadrature(l, u, &qs).unwrap();
    for &(l, u) in &[(0.3, 1.2), (1.0, 3.0), (2.0, 2.5)] {
        let fd = (m(l, u + h) - m(l, u - h)) / (2.0 * h);
        let cf = dm_deta_closed(l, u).unwrap();
        assert!(
            (fd - cf).abs() <= 1e-5 * cf.abs(),
            "d/deta at ({l},{u}): {fd} vs {cf}"
        );
    }
    for &(l, u) in &[(0.3, 1.2), (1.0, 3.0), (2.0, 0.5), (3.0, 1.0), (0.8, 0.1)] {
        let fd = (m(l + h, u) - m(l - h, u)) / (2.0 * h);
        let cf = dm_dlambda_closed(l, u).unwrap();
        assert!(cf > 0.0);
        assert!(
            (fd - cf).abs() <= 1e-5 * cf.abs(),
            "d/dl at ({l},{u}): {fd} vs {cf}"
        );
    }
}

#[test]
fn symmetries_on_grid() {
    let qs = QuadratureSettings::default();
    for l in [0.1, 0.7, 2.0] {
        for u in [0.2, 1.0, 3.0] {
            let base = em_map_quadrature(l, u, &qs).unwrap();
            assert!((em_map_quadrature(-l, u, &qs).unwrap() + base).abs() < 1e-10);
            assert!((em_map_quadrature(l, -u, &qs).unwrap() - base).abs() < 1e-10);
            assert!((em_map_ratio_form(l, -u, &qs).unwrap() - base).abs() < 1e-9);
        }
    }
}

#[test]
fn map_moves_toward_fixed_point() {
    let qs = QuadratureSettings::default();
    for u in [0.3, 1.0, 2.0] {
        for l in [0.05, 0.5 * u, 2.0 * u, 5.0] {
            let next = em_map_quadrature(l, u, &qs).unwrap();
            if l < u {
                assert!(next > l && next < u, "M({l},{u}) = {next}");
            } else {
                assert!(next < l && next > u, "M({l},{u}) = {next}");
            }
        }
    }
}

#[test]
fn constants_lie_in_unit_interval() {
    for l0 in [0.01, 0.3, 1.0, 5.0, 50.0, 800.0] {
        for u in [0.01, 0.3, 1.0, 5.0, 800.0] {
            let c = contraction_constants(l0, u).unwrap();
            assert!(c.kappa1 >= 0.0 && c.kappa1 < 1.0);
            assert!(c.kappa2 >= 0.0 && c.kappa2 < 1.0);
            if l0 < 50.0 && u < 50.0 {
                assert!(c.kappa > 0.0);
            }
            assert_eq!(c.kappa, c.kappa1.max(c.kappa2));
        }
    }
}

#[test]
fn negative_start_converges_to_negative_fixed_point() {
    let t = run_population_em(-0.4, 1.5, 200, 1e-9, &QuadratureSettings::default()).unwrap();
    assert!(t.converged);
    assert_eq!(t.target, -1.5);
    assert!(t.iterates.iter().all(|l| *l < 0.0));
    assert!((t.final_lambda() + 1.5).abs() < 1e-9);
}

#[test]
fn invalid_arguments_rejected() {
    assert!(em_map_closed(1.0, 0.5).is_err());
    assert!(em_map_closed(0.0, 0.5).is_err());
    assert!(dm_dlambda_closed(-1.0, 0.5).is_err());
    assert!(em_map_quadrature(f64::NAN, 1.0, &QuadratureSettings::default()).is_err());
    assert!(run_population_em(1.0, 1.0, 0, 1e-8, &QuadratureSettings::default()).is_err());
}
