use std::f64::consts::PI;

use arrivalcast::models::tbats::{
    boxcox, fit_transformed, forecast_path, inv_boxcox, run_filter, tbats_fit, TbatsConfig, TbatsParams,
};
use arrivalcast::synth::{build_profile, simulate, ProfileParams};
use proptest::prelude::*;

fn seasonal_only(periods: Vec<usize>, harmonics: Vec<usize>) -> TbatsConfig {
    TbatsConfig {
        omega: 1.0,
        periods,
        harmonics,
        ar_order: 0,
        ma_order: 0,
        phi: 1.0,
        use_trend: false,
    }
}

fn params_for(config: &TbatsConfig, level0: f64, seasonal0: Vec<Vec<(f64, f64)>>) -> TbatsParams {
    let k = config.periods.len();
    TbatsParams {
        alpha: 0.1,
        beta: 0.0,
        gamma1: vec![0.01; k],
        gamma2: vec![0.01; k],
        ar: vec![],
        ma: vec![],
        long_run_trend: 0.0,
        level0,
        trend0: 0.0,
        seasonal0,
    }
}

#[test]
fn seasonal_forecast_matches_closed_form() {
    let config = seasonal_only(vec![24, 168], vec![2, 3]);
    let seasonal0 = vec![
        vec![(1.0, -0.5), (0.3, 0.2)],
        vec![(0.7, 0.1), (-0.4, 0.6), (0.05, -0.2)],
    ];
    let params = params_for(&config, 4.0, seasonal0.clone());
    let path = forecast_path(&params, &params.initial_state(&config), &config, 400);
    for (t, z) in path.iter().enumerate() {
        let mut expected = 4.0;
        for (&m, comp) in config.periods.iter().zip(&seasonal0) {
            for (j, (s, s_star)) in comp.iter().enumerate() {
                let angle = 2.0 * PI * (j + 1) as f64 * t as f64 / m as f64;
                expected += s * angle.cos() + s_star * angle.sin();
            }
        }
        assert!((z - expected).abs() < 1e-9, "t={t}: {z} vs {expected}");
    }
}

#[test]
fn seasonal_state_returns_after_one_period() {
    let config = seasonal_only(vec![24], vec![3]);
    let seasonal0 = vec![vec![(1.0, 0.5), (-0.3, 0.8), (0.2, -0.1)]];
    let params = params_for(&config, 0.0, seasonal0.clone());
    let (_, _, state) = run_filter(&params, &config, &[None; 24]);
    for ((s, s_star), (s0, s0_star)) in state.seasonal[0].iter().zip(&seasonal0[0]) {
        assert!((s - s0).abs() < 1e-9 && (s_star - s0_star).abs() < 1e-9);
    }
}

#[test]
fn boxcox_special_cases() {
    for y in [0.5, 1.0, 3.0, 40.0] {
        assert!((boxcox(y, 0.0).unwrap() - f64::ln(y)).abs() < 1e-15);
        assert!((boxcox(y, 1.0).unwrap() - (y - 1.0)).abs() < 1e-15);
        assert!((boxcox(y, 0.5).unwrap() - 2.0 * (y.sqrt() - 1.0)).abs() < 1e-14);
    }
    assert_eq!(boxcox(0.0, 0.5).unwrap(), -2.0);
    assert!(boxcox(-1.0, 0.0).is_err());
}

fn sinusoid(n: usize) -> Vec<Option<f64>> {
    (0..n)
        .map(|t| Some(10.0 + 3.0 * (2.0 * PI * t as f64 / 24.0).sin()))
        .collect()
}

#[test]
fn recovers_a_pure_sinusoid() {
    let config = seasonal_only(vec![24], vec![1]);
    let obs = sinusoid(24 * 20);
    let fit = fit_transformed(&obs, &config, 400).unwrap();
    let rms = (fit.objective / obs.len() as f64).sqrt();
    assert!(rms < 0.1, "rms {rms}");
    assert!(fit.objective <= fit.start_objective);

    let ahead = forecast_path(&fit.params, &fit.state, &config, 72);
    let truth = &sinusoid(24 * 20 + 72)[24 * 20..];
    let err = ahead
        .iter()
        .zip(truth)
        .map(|(f, y)| (f - y.unwrap()).powi(2))
        .sum::<f64>()
        / 72.0;
    assert!(err.sqrt() < 0.1, "forecast rms {}", err.sqrt());
}

#[test]
fn fit_improves_on_start_for_simulated_counts() {
    let profile = build_profile(&ProfileParams::default()).unwrap();
    let series = simulate(&profile, 6, 6).unwrap();
    let fit = tbats_fit(series.view(), &TbatsConfig::default(), 200).unwrap();
    assert!(fit.objective <= fit.start_objective);
    assert!(fit.params.is_finite());
    assert!(fit.params.ar_is_stationary() && fit.params.ma_is_invertible());
    assert!((0.0..=1.0).contains(&fit.params.alpha));
}

#[test]
fn rejects_short_history() {
    let config = seasonal_only(vec![24], vec![1]);
    assert!(fit_transformed(&sinusoid(47), &config, 10).is_err());
}

/// Moduli of the roots of `1 + a z + b z²`.
fn root_moduli(a: f64, b: f64) -> Vec<f64> {
    if b == 0.0 {
        return if a == 0.0 { vec![] } else { vec![1.0 / a.abs()] };
    }
    let disc = a * a - 4.0 * b;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![((-a + r) / (2.0 * b)).abs(), ((-a - r) / (2.0 * b)).abs()]
    } else {
        // complex pair with |z|² = 1/b
        vec![(1.0 / b).sqrt(); 2]
    }
}

proptest! {
    #[test]
    fn boxcox_round_trip(y in 1e-3f64..1e4, omega in 0.0f64..=1.0) {
        let back = inv_boxcox(boxcox(y, omega).unwrap(), omega);
        prop_assert!((back - y).abs() <= 1e-12 * y.max(1.0));
    }

    #[test]
    fn ar2_stationarity_matches_roots(a in -2.5f64..2.5, b in -1.5f64..1.5) {
        let moduli = root_moduli(-a, -b);
        prop_assume!(moduli.iter().all(|m| (m - 1.0).abs() > 1e-9));
        let mut p = params_for(&seasonal_only(vec![24], vec![1]), 0.0, vec![vec![(0.0, 0.0)]]);
        p.ar = vec![a, b];
        p.ma = vec![a, b];
        prop_assert_eq!(p.ar_is_stationary(), moduli.iter().all(|m| *m > 1.0));
        let ma_moduli = root_moduli(a, b);
        prop_assume!(ma_moduli.iter().all(|m| (m - 1.0).abs() > 1e-9));
        prop_assert_eq!(p.ma_is_invertible(), ma_moduli.iter().all(|m| *m > 1.0));
    }
}
