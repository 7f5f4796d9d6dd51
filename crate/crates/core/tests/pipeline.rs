use gesture_obfuscation::data::{fix_sampling_rate, Dataset, GestureSeries};
use gesture_obfuscation::noise::{NoiseStatus, ScaleRule};
use gesture_obfuscation::pipeline::{
    evaluate_config, obfuscate_gesture, train_from_raw, train_offline, update_models, ModelStore,
    ObfuscationConfig,
};
use gesture_obfuscation::store::{backup_path, load_store, save_store, update_store_dir};
use gesture_obfuscation::synth::{generate, SynthConfig};

fn small_raw(users: usize, types: usize) -> Dataset {
    generate(&SynthConfig {
        users,
        types,
        reps: 6,
        length: 40,
        seed: 5,
        ..Default::default()
    })
}

fn keep_features(mut d: Dataset, keep: &[&str]) -> Dataset {
    d.series.retain(|s| keep.contains(&s.feature_name.as_str()));
    d.feature_names.retain(|f| keep.contains(&f.as_str()));
    d
}

fn fixed(d: &Dataset) -> Dataset {
    fix_sampling_rate(d, 90.0).0
}

fn trained(users: usize, types: usize) -> (ModelStore, Dataset) {
    let raw = small_raw(users, types);
    let (store, split) = train_from_raw(&raw, "small", &ObfuscationConfig::default()).unwrap();
    (store, split.test)
}

#[test]
fn one_forecaster_per_user_feature_cluster() {
    let raw = keep_features(small_raw(2, 3), &["x_pos", "y_pos"]);
    let (store, _) = train_from_raw(&raw, "count", &ObfuscationConfig::default()).unwrap();
    assert!(store.failures.is_empty(), "{:?}", store.failures);
    assert_eq!(store.cluster_model_count(), 4);
    assert_eq!(store.forecast_model_count(), 12);
    for user in store.users.values() {
        for fm in user.features.values() {
            assert_eq!(fm.clusters.clusters.len(), 3);
            assert_eq!(fm.purity, Some(1.0));
        }
    }
}

#[test]
fn cluster_count_follows_label_count() {
    let raw = keep_features(
        generate(&SynthConfig {
            users: 1,
            types: 26,
            reps: 2,
            length: 32,
            ..Default::default()
        }),
        &["x_pos"],
    );
    let store = train_offline(&fixed(&raw), &ObfuscationConfig::default()).unwrap();
    let fm = &store.users["user00"].features["x_pos"];
    assert_eq!(fm.clusters.clusters.len(), 26);
    assert_eq!(fm.forecasts.len(), 26);
    assert_eq!(
        fm.clusters.labels().collect::<Vec<_>>(),
        (0..26).collect::<Vec<_>>()
    );
}

#[test]
fn unlabeled_data_needs_cluster_count() {
    let mut raw = fixed(&keep_features(small_raw(1, 2), &["x_pos"]));
    for s in &mut raw.series {
        s.label = None;
    }
    let store = train_offline(&raw, &ObfuscationConfig::default()).unwrap();
    assert!(store.users.is_empty());
    assert_eq!(store.failures.len(), 1);

    let cfg = ObfuscationConfig {
        clusters: Some(2),
        ..Default::default()
    };
    let store = train_offline(&raw, &cfg).unwrap();
    assert_eq!(store.forecast_model_count(), 2, "{:?}", store.failures);
    assert_eq!(store.users["user00"].features["x_pos"].purity, None);
}

#[test]
fn training_is_deterministic() {
    let (a, _) = trained(2, 2);
    let (b, _) = trained(2, 2);
    assert_eq!(a, b);
}

#[test]
fn zero_scale_releases_the_forecast() {
    let (store, test) = trained(2, 2);
    let mut cfg = ObfuscationConfig::default();
    cfg.noise.scale_rule = ScaleRule::Absolute(0.0);
    for g in &test.series {
        let o = obfuscate_gesture(g, &store, &cfg).unwrap();
        assert_eq!(o.diagnostics.noise_status, NoiseStatus::ZeroScale);
        assert_eq!(o.series.values, o.forecast);
        assert!(o.noise.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn release_is_forecast_plus_noise() {
    let (store, test) = trained(2, 2);
    let cfg = ObfuscationConfig::default();
    for g in &test.series {
        let o = obfuscate_gesture(g, &store, &cfg).unwrap();
        assert_eq!(o.series.values.len(), g.sample_count());
        assert_eq!(o.forecast.len(), g.sample_count());
        for ((x, z), f) in o.series.values.iter().zip(&o.noise).zip(&o.forecast) {
            assert!((x - z - f).abs() < 1e-12);
        }
        let mut again = obfuscate_gesture(g, &store, &cfg).unwrap();
        again.diagnostics.elapsed_seconds = o.diagnostics.elapsed_seconds;
        assert_eq!(o, again);
    }
}

#[test]
fn unknown_user_without_public_model_fails() {
    let (store, test) = trained(2, 2);
    let stranger = GestureSeries {
        user_id: "stranger".into(),
        ..test.series[0].clone()
    };
    assert!(obfuscate_gesture(&stranger, &store, &ObfuscationConfig::default()).is_err());

    let raw = small_raw(2, 2);
    let cfg = ObfuscationConfig {
        public_model: true,
        ..Default::default()
    };
    let (store, _) = train_from_raw(&raw, "small", &cfg).unwrap();
    let o = obfuscate_gesture(&stranger, &store, &cfg).unwrap();
    assert!(o.diagnostics.used_public_model);
}

#[test]
fn evaluation_is_deterministic() {
    let (store, test) = trained(3, 2);
    let cfg = ObfuscationConfig::default();
    let (a, _) = evaluate_config(&test, &store, "run", &cfg).unwrap();
    let (b, _) = evaluate_config(&test, &store, "run", &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.gestures, test.series.len());
    assert!(a.failures.is_empty());
    assert_eq!(
        a.original.utility.values().copied().fold(0.0, f64::max),
        0.0
    );
}

#[test]
fn store_round_trip() {
    let (store, _) = trained(2, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    save_store(&store, &path).unwrap();
    let loaded = load_store(&path).unwrap();
    assert_eq!(loaded, store);
    assert!(!path.join(".staging").exists());

    save_store(&loaded, &path).unwrap();
    assert_eq!(load_store(&path).unwrap(), store);
}

#[test]
fn store_without_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_store(dir.path()).is_err());
}

#[test]
fn empty_update_is_a_no_op() {
    let (store, _) = trained(2, 2);
    let empty = Dataset::empty(store.training.feature_names.clone(), store.training.split);
    assert_eq!(
        update_models(&empty, &store, &ObfuscationConfig::default()).unwrap(),
        store
    );
}

#[test]
fn update_with_new_label_adds_a_cluster() {
    let (store, _) = trained(2, 2);
    let mut extra = small_raw(2, 3);
    extra
        .series
        .retain(|s| s.user_id == "user00" && s.label.as_deref() == Some("type2"));
    for s in &mut extra.series {
        s.gesture_id += 1000;
    }
    let new_data = store.preprocess(&extra).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    save_store(&store, &path).unwrap();
    let updated = update_store_dir(&path, &extra, &ObfuscationConfig::default()).unwrap();
    assert_eq!(
        updated,
        update_models(&new_data, &store, &ObfuscationConfig::default()).unwrap()
    );

    for feature in store.training.feature_names.iter() {
        assert_eq!(
            updated.users["user00"].features[feature]
                .clusters
                .clusters
                .len(),
            3
        );
        assert_eq!(
            updated.users["user01"].features[feature],
            store.users["user01"].features[feature]
        );
    }
    assert_eq!(load_store(&path).unwrap(), updated);
    assert_eq!(load_store(backup_path(&path)).unwrap(), store);
}
