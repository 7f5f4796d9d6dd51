//! Independent oracles for individual operations.

use gesture_obfuscation::forecast::{fit_forecaster, ModelKind};
use gesture_obfuscation::metrics::{build_cdf, indistinguishability, mae};
use gesture_obfuscation::noise::{
    generate_correlated_noise, lp_coefficients, NoiseConfig, NoiseStatus, ScaleRule,
};
use gesture_obfuscation::stationarity::{adf_test, lambda_grid, select_lambda, stabilize};
use gesture_obfuscation::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// 64-bit LCG with Box-Muller, reproducible outside Rust.
fn lcg_gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed;
    let mut u = || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..n)
        .map(|_| {
            let (u1, u2) = (u(), u());
            (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

fn cumsum(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect()
}

// Statistic, 5% critical value, lags and regression size from statsmodels'
// adfuller(x, maxlag=p, regression="c", autolag=None) on the same series.
const ADF_REFERENCE: [(u64, usize, &str, f64, f64, usize, usize); 7] = [
    (
        1,
        500,
        "white",
        -3.9854649206669954,
        -2.8675550551408353,
        17,
        482,
    ),
    (
        2,
        500,
        "white",
        -5.498694412328861,
        -2.8675550551408353,
        17,
        482,
    ),
    (
        3,
        500,
        "walk",
        -1.848089521236692,
        -2.8675550551408353,
        17,
        482,
    ),
    (
        4,
        500,
        "walk",
        -2.066840707963992,
        -2.8675550551408353,
        17,
        482,
    ),
    (
        5,
        120,
        "ar",
        -2.2584240480813746,
        -2.888954648057252,
        12,
        107,
    ),
    (
        6,
        40,
        "white",
        -1.7558355208141039,
        -2.9640707407407407,
        9,
        30,
    ),
    (
        7,
        200,
        "walk",
        -0.23807115470353285,
        -2.8772932777920364,
        14,
        185,
    ),
];

#[test]
fn adf_matches_reference_implementation() {
    for (seed, n, kind, stat, crit, lags, nobs) in ADF_REFERENCE {
        let e = lcg_gaussian(seed, n);
        let x = match kind {
            "walk" => cumsum(&e),
            "ar" => {
                let mut y = vec![e[0]];
                for v in &e[1..] {
                    let prev = *y.last().unwrap();
                    y.push(0.9 * prev + v);
                }
                y
            }
            _ => e,
        };
        let r = adf_test(&x).unwrap();
        assert_eq!((r.lags, r.nobs), (lags, nobs), "seed {seed}");
        assert!(
            (r.statistic - stat).abs() < 1e-8 * stat.abs(),
            "seed {seed}: {} vs {stat}",
            r.statistic
        );
        assert!((r.critical_value_5pct - crit).abs() < 1e-12, "seed {seed}");
        assert_eq!(r.stationary, stat < crit);
    }
}

fn grid_argmax(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let log_sum: f64 = y.iter().map(|v| v.ln()).sum();
    let mut best = (f64::NEG_INFINITY, 1.0);
    for i in 0..=100 {
        let lambda = f64::from(i - 50) / 10.0;
        let z: Vec<f64> = y
            .iter()
            .map(|v| {
                if lambda.abs() < 1e-9 {
                    v.ln()
                } else {
                    (v.powf(lambda) - 1.0) / lambda
                }
            })
            .collect();
        let m = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let llf = -0.5 * n * var.ln() + (lambda - 1.0) * log_sum;
        if llf > best.0 {
            best = (llf, lambda);
        }
    }
    best.1
}

#[test]
fn lambda_selection_matches_grid_likelihood() {
    assert_eq!(lambda_grid().count(), 101);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let draws: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let normal: Vec<f64> = draws.iter().map(|v| 5.0 + v).collect();
        let lognormal: Vec<f64> = draws.iter().map(|v| (0.5 * v).exp()).collect();

        let l = select_lambda(&normal).unwrap();
        assert!((l - grid_argmax(&normal)).abs() < 1e-9, "trial {trial}");
        assert!((l - 1.0).abs() <= 0.5 + 1e-9, "normal trial {trial}: {l}");

        let l = select_lambda(&lognormal).unwrap();
        assert!((l - grid_argmax(&lognormal)).abs() < 1e-9, "trial {trial}");
        assert!(l.abs() <= 0.3 + 1e-9, "lognormal trial {trial}: {l}");
    }
}

#[test]
fn random_walks_are_transformed() {
    let mut applied = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        if stabilize(&cumsum(&steps)).unwrap().1.applied {
            applied += 1;
        }
    }
    assert!(applied >= 95, "{applied}/100");
}

#[test]
fn two_by_two_toeplitz() {
    for rho in [-0.8, -0.3, 0.2, 0.9] {
        let r = [1.0, rho, rho * rho];
        let lp = lp_coefficients(&r, 2).unwrap();
        // Cramer's rule on [[1, rho], [rho, 1]] a = [rho, rho^2].
        let det = 1.0 - rho * rho;
        let a1 = (rho - rho * rho * rho) / det;
        let a2 = (rho * rho - rho * rho) / det;
        assert!((lp.coefficients[0] - a1).abs() < 1e-12);
        assert!((lp.coefficients[1] - a2).abs() < 1e-12);
        assert!((a1 - rho).abs() < 1e-12);
    }
}

#[test]
fn sawtooth_prefers_the_seasonal_candidate() {
    let period = 12;
    let y: Vec<f64> = (0..10 * period)
        .map(|t| (t % period) as f64 / period as f64)
        .collect();
    let fit = fit_forecaster(&y, period, 3).unwrap();
    assert_eq!(fit.selected.kind, ModelKind::SeasonalAdditive);
    let sse = |k: ModelKind| fit.candidates.iter().find(|c| c.kind == k).unwrap().sse;
    assert!(sse(ModelKind::SeasonalAdditive) < sse(ModelKind::Ses));
    assert!(sse(ModelKind::SeasonalAdditive) < sse(ModelKind::HoltDamped));
    for c in &fit.candidates {
        let n = y.len() as f64;
        let p = c.kind.parameter_count() as f64;
        let expected = n * (c.sse / n).max(f64::MIN_POSITIVE).ln() + 2.0 * p;
        assert!((c.aic - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }
}

#[test]
fn smooth_forecast_acceptance_rate() {
    let forecast: Vec<f64> = (0..128)
        .map(|t| (t as f64 / 128.0 * 4.0 * std::f64::consts::PI).sin())
        .collect();
    let mut accepted = 0;
    for seed in 0..100 {
        let cfg = NoiseConfig {
            scale_rule: ScaleRule::TwoStd,
            tau: 0.3,
            max_order: 8,
            max_retries: 1,
            seed,
        };
        if generate_correlated_noise(&forecast, &cfg).unwrap().status == NoiseStatus::Accepted {
            accepted += 1;
        }
    }
    println!("acceptance rate with one draw per order: {accepted}/100");
    assert!(accepted >= 50, "{accepted}/100");
}

#[test]
fn mae_and_information_gain_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut total = 0.0;
        for i in 0..n {
            total += (a[i] - b[i]).abs();
        }
        assert!((mae(&a, &b).unwrap() - total / n as f64).abs() < 1e-15);

        let population: Vec<Vec<f64>> = (0..rng.random_range(1..30))
            .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let threshold = rng.random_range(0.0..0.5);
        let mut k = 0;
        for member in &population {
            let mut d = 0.0;
            for i in 0..n {
                d += (a[i] - member[i]).abs();
            }
            if d / n as f64 <= threshold {
                k += 1;
            }
        }
        let expected = (population.len() as f64 / k.max(1) as f64).log2();
        assert!(
            (indistinguishability(&a, &population, threshold).unwrap() - expected).abs() < 1e-12
        );
    }
}

#[test]
fn cdf_matches_sorted_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let values: Vec<f64> = (0..rng.random_range(1..60))
            .map(|_| rng.random_range(-1.0..3.0))
            .collect();
        let cdf = build_cdf(&values, 21);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for w in cdf.windows(2) {
            assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        for (x, f) in &cdf {
            let below = sorted.iter().filter(|v| *v <= x).count() as f64 / sorted.len() as f64;
            assert_eq!(*f, below);
        }
        assert_eq!(cdf.last().unwrap(), &(sorted[sorted.len() - 1], 1.0));
    }
}

#[test]
fn synthetic_users_are_trackable_before_obfuscation() {
    let d = generate(&SynthConfig {
        users: 4,
        reps: 6,
        ..Default::default()
    });
    let pick = |user: &str, session: &str| -> Vec<Vec<f64>> {
        d.series
            .iter()
            .filter(|s| s.user_id == user && s.session_id == session && s.feature_name == "x_pos")
            .filter(|s| s.label.as_deref() == Some("type1"))
            .map(|s| gesture_obfuscation::data::resample(&s.values, 64))
            .collect()
    };
    let mean_mae = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut total = 0.0;
        for x in a {
            for y in b {
                total += mae(x, y).unwrap();
            }
        }
        total / (a.len() * b.len()) as f64
    };
    for u in 0..4 {
        let user = format!("user{u:02}");
        let same = mean_mae(&pick(&user, "s0"), &pick(&user, "s1"));
        for v in (0..4).filter(|&v| v != u) {
            let other = format!("user{v:02}");
            assert!(
                same < mean_mae(&pick(&user, "s0"), &pick(&other, "s1")),
                "{user} vs {other}"
            );
        }
    }
}
