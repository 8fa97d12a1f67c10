mod common;

use common::{fixture, gram_oracle, normal_equations, FIXTURES};
use mcfusion::baselines::{fit_gp, fit_ols, Gp, GpConfig, GpHyper};
use proptest::prelude::*;

#[test]
fn ols_matches_normal_equations() {
    for &(seed, n, d, noise) in &FIXTURES {
        let (x, y) = fixture(seed, n, d, noise);
        let m = fit_ols(&x, &y).unwrap();
        assert_eq!(m.rank, d + 1);
        let oracle = normal_equations(&x, &y);
        assert!((m.intercept - oracle[0]).abs() < 1e-8, "seed {seed}");
        for (b, o) in m.coefficients.iter().zip(&oracle[1..]) {
            assert!((b - o).abs() < 1e-8, "seed {seed}: {b} vs {o}");
        }
    }
}

#[test]
fn gp_mean_matches_gram_solve() {
    let hypers = [
        GpHyper { signal_variance: 1.0, length_scale: 1.0, noise_variance: 0.1 },
        GpHyper { signal_variance: 0.5, length_scale: 0.4, noise_variance: 0.01 },
        GpHyper { signal_variance: 2.0, length_scale: 3.0, noise_variance: 0.5 },
    ];
    for &(seed, n, d, noise) in &FIXTURES {
        let (x, y) = fixture(seed, n, d, noise);
        let (q, _) = fixture(seed + 100, 5, d, 0.0);
        for h in &hypers {
            let gp = Gp::fit(&x, &y, *h, 1e-3).unwrap();
            assert_eq!(gp.jitter, 0.0);
            for qi in &q {
                let (a, b) = (gp.predict(qi), gram_oracle(&x, &y, h, qi));
                assert!((a - b).abs() < 1e-8, "seed {seed}, {h:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn fitted_gp_matches_gram_solve_at_its_hyperparameters() {
    for &(seed, n, d, noise) in &FIXTURES[..4] {
        let (x, y) = fixture(seed, n, d, noise);
        let m = fit_gp(&x, &y, &GpConfig::default()).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| (v - m.y_mean) / m.y_sd).collect();
        let (q, _) = fixture(seed + 200, 4, d, 0.0);
        for qi in &q {
            let oracle = m.y_mean + m.y_sd * gram_oracle(&x, &ys, &m.gp.hyper, qi);
            // fitted kernels can be ill-conditioned (signal/noise near 1e7), so compare relatively
            assert!((m.predict(qi) - oracle).abs() < 1e-6 * oracle.abs().max(1.0), "seed {seed}: {} vs {oracle}, {:?} jitter {}", m.predict(qi), m.gp.hyper, m.gp.jitter);
        }
    }
}

proptest! {
    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(seed in 0u64..1000, n in 6usize..40, d in 1usize..5) {
        prop_assume!(n > d + 1);
        let (x, y) = fixture(seed, n, d, 0.3);
        let m = fit_ols(&x, &y).unwrap();
        let r: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi - m.predict(xi)).collect();
        prop_assert!(r.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..d {
            let s: f64 = x.iter().zip(&r).map(|(xi, ri)| xi[j] * ri).sum();
            prop_assert!(s.abs() < 1e-8);
        }
    }

    #[test]
    fn gp_with_tiny_noise_interpolates(seed in 0u64..200) {
        let (x, y) = fixture(seed, 8, 2, 0.5);
        let h = GpHyper { signal_variance: 1.0, length_scale: 0.7, noise_variance: 1e-10 };
        let gp = Gp::fit(&x, &y, h, 1e-3).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((gp.predict(xi) - yi).abs() < 1e-4);
        }
    }
}
