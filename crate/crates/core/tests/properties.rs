use approx::assert_relative_eq;
use proptest::prelude::*;

use gesture_obfuscation::data::{
    denormalize, fix_sampling_rate, normalize_minmax, Dataset, GestureSeries, SplitTag,
};
use gesture_obfuscation::dtw::{assign_cluster, dtw_distance, train_clusters};
use gesture_obfuscation::forecast::{fit_forecaster, ModelKind};
use gesture_obfuscation::metrics::{indistinguishability, mae};
use gesture_obfuscation::noise::{generate_correlated_noise, NoiseConfig, NoiseStatus, ScaleRule};
use gesture_obfuscation::stationarity::{adf_test, box_cox, destabilize, stabilize};
use gesture_obfuscation::stats::{pearson, std_dev};

fn series(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, min_len..=max_len)
}

fn pair(min_len: usize, max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (min_len..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    })
}

fn dataset(lengths: &[usize], feature: &str) -> Dataset {
    let series = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| GestureSeries {
            user_id: format!("u{}", i % 2),
            session_id: "s0".into(),
            gesture_id: i as u64,
            feature_name: feature.into(),
            label: None,
            values: (0..len)
                .map(|t| ((t * 7 + i * 3) % 11) as f64 - 4.0 + i as f64 * 0.1)
                .collect(),
        })
        .collect();
    Dataset {
        series,
        feature_names: vec![feature.into()],
        split: SplitTag::Unsplit,
    }
}

fn smooth_forecast(len: usize, phase: f64) -> Vec<f64> {
    (0..len)
        .map(|t| (t as f64 / len as f64 * 6.0 + phase).sin() + 0.3 * (t as f64 / 9.0).cos())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dtw_is_symmetric_with_zero_diagonal(a in series(1, 40), b in series(1, 40)) {
        let ab = dtw_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, dtw_distance(&b, &a).unwrap());
        prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn dtw_is_bounded_by_the_diagonal_path((a, b) in pair(1, 40)) {
        let diagonal: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!(dtw_distance(&a, &b).unwrap() <= diagonal + 1e-9);
    }

    #[test]
    fn mae_is_a_metric((a, b) in pair(1, 50), shift in -5.0..5.0f64, c in 0.01..100.0f64) {
        let third: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y) + shift).collect();
        let ab = mae(&a, &b).unwrap();
        prop_assert_eq!(ab, mae(&b, &a).unwrap());
        prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= mae(&a, &third).unwrap() + mae(&third, &b).unwrap() + 1e-12);
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
        assert_relative_eq!(mae(&sa, &sb).unwrap(), c * ab, max_relative = 1e-12);
    }

    #[test]
    fn information_gain_bounds_and_monotonicity(
        population in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 16), 1..30),
        pick in any::<prop::sample::Index>(),
        mut thresholds in prop::collection::vec(0.0..1.0f64, 2..8),
    ) {
        let target = population[pick.index(population.len())].clone();
        let upper = (population.len() as f64).log2();
        thresholds.sort_by(f64::total_cmp);
        let gains: Vec<f64> = thresholds
            .iter()
            .map(|&t| indistinguishability(&target, &population, t).unwrap())
            .collect();
        for g in &gains {
            prop_assert!(*g >= 0.0 && *g <= upper + 1e-12);
        }
        for w in gains.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(indistinguishability(&target, &population, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn box_cox_is_strictly_increasing(
        mut y in prop::collection::vec(0.1..10.0f64, 2..40),
        tenth in -20i32..=20,
    ) {
        y.sort_by(f64::total_cmp);
        y.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let z = box_cox(&y, f64::from(tenth) / 10.0).unwrap();
        for w in z.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn stabilize_round_trips(steps in prop::collection::vec(-1.0..1.0f64, 20..200), offset in -20.0..20.0f64) {
        let x: Vec<f64> = steps
            .iter()
            .scan(offset, |s, v| {
                *s += v;
                Some(*s)
            })
            .collect();
        let Ok((z, param)) = stabilize(&x) else { return Ok(()) };
        let back = destabilize(&z, &param).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b} with {param:?}");
        }
    }

    #[test]
    fn normalization_round_trips(lengths in prop::collection::vec(5usize..40, 2..8)) {
        let d = dataset(&lengths, "x");
        let (scaled, extrema) = normalize_minmax(&d).unwrap();
        for (orig, s) in d.series.iter().zip(&scaled.series) {
            let back = denormalize(&s.values, &extrema["x"]);
            for (a, b) in orig.values.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn preprocessing_is_idempotent(lengths in prop::collection::vec(5usize..40, 2..8), pct in 1.0..100.0f64) {
        let d = dataset(&lengths, "x");
        let (fixed, _) = fix_sampling_rate(&d, pct);
        let target = fixed.series[0].sample_count();
        prop_assert!(fixed.series.iter().all(|s| s.sample_count() == target));
        let (once, _) = normalize_minmax(&fixed).unwrap();
        let (refixed, _) = fix_sampling_rate(&once, pct);
        let (twice, _) = normalize_minmax(&refixed).unwrap();
        for (a, b) in once.series.iter().zip(&twice.series) {
            prop_assert_eq!(a.values.len(), b.values.len());
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adf_decision_ignores_positive_scale(seed in any::<u64>(), c in 0.001..1000.0f64, walk in any::<bool>()) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        if walk {
            for t in 1..x.len() {
                x[t] += x[t - 1];
            }
        }
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let a = adf_test(&x).unwrap();
        let b = adf_test(&scaled).unwrap();
        prop_assert_eq!(a.stationary, b.stationary);
        prop_assert!((a.statistic - b.statistic).abs() < 1e-6 * a.statistic.abs().max(1.0));
    }

    #[test]
    fn forecasts_are_finite_and_aic_never_worse_than_ses(
        noise in prop::collection::vec(-0.2..0.2f64, 48..120),
        period in 4usize..12,
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = noise
            .iter()
            .enumerate()
            .map(|(t, e)| (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin() + e)
            .collect();
        let fit = fit_forecaster(&y, period, seed).unwrap();
        let ses = fit.candidates.iter().find(|c| c.kind == ModelKind::Ses).unwrap();
        prop_assert!(fit.selected.fit_aic <= ses.aic);
        let f = fit.selected.forecast(3 * period).unwrap();
        prop_assert!(f.iter().all(|v| v.is_finite()));
        let again = fit_forecaster(&y, period, seed).unwrap();
        prop_assert_eq!(fit.selected, again.selected);
    }

    #[test]
    fn ses_forecast_is_flat_at_the_level(level in -5.0..5.0f64, noise in prop::collection::vec(-1.0..1.0f64, 12..40)) {
        let y: Vec<f64> = noise.iter().map(|e| level + e).collect();
        let fit = fit_forecaster(&y, 1000, 0).unwrap();
        if fit.selected.kind == ModelKind::Ses {
            let f = fit.selected.forecast(17).unwrap();
            prop_assert!(f.iter().all(|&v| v == fit.selected.state.level));
        }
    }

    #[test]
    fn accepted_noise_meets_threshold_and_scale(seed in any::<u64>(), tau in 0.05..0.6f64, len in 128usize..256, phase in 0.0..3.0f64) {
        let forecast = smooth_forecast(len, phase);
        let cfg = NoiseConfig { tau, seed, ..Default::default() };
        let out = generate_correlated_noise(&forecast, &cfg).unwrap();
        if out.status == NoiseStatus::Accepted {
            prop_assert!(pearson(&out.noise, &forecast) >= tau);
        }
        let target = ScaleRule::TwoStd.sigma(std_dev(&forecast));
        prop_assert!((std_dev(&out.noise) - target).abs() <= 0.05 * target);
        prop_assert_eq!(out.noise, generate_correlated_noise(&forecast, &cfg).unwrap().noise);
    }
}

#[test]
fn medoids_assign_to_their_own_cluster_and_objective_decreases() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let data: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let len = rng.random_range(10..30);
            (0..len)
                .map(|t| {
                    ((t + i) as f64 / 4.0).sin() * (1 + i % 3) as f64 + rng.random_range(-0.1..0.1)
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    for k in 1..=5 {
        let fit = train_clusters("f", &refs, k, None, k as u64).unwrap();
        for c in &fit.model.clusters {
            assert_eq!(assign_cluster(&fit.model, &c.centroid).unwrap(), c.label);
        }
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn accepted_noise_is_centered() {
    let len = 128;
    let forecast = smooth_forecast(len, 0.4);
    let sigma = ScaleRule::TwoStd.sigma(std_dev(&forecast));
    let mut means = Vec::new();
    for seed in 0..100 {
        let cfg = NoiseConfig {
            seed,
            ..Default::default()
        };
        let out = generate_correlated_noise(&forecast, &cfg).unwrap();
        if out.status == NoiseStatus::Accepted {
            means.push(out.noise.iter().sum::<f64>() / len as f64);
        }
    }
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let bound = 3.0 * sigma / ((means.len() * len) as f64).sqrt();
    assert!(
        grand.abs() <= bound,
        "mean {grand} exceeds {bound} over {} draws",
        means.len()
    );
}
