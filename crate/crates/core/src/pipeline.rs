//! Offline training and run-time obfuscation, plus the evaluation harness
//! that sweeps obfuscation settings over a held-out split.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_minmax, apply_sampling_rate, fit_minmax, split_train_test, target_lengths, Dataset,
    Extrema, GestureSeries, SampleLengths, Split,
};
use crate::dtw::{assign_cluster, train_clusters, ClusterLabel, ClusterModel};
use crate::error::{Error, Result};
use crate::forecast::{build_training_series, fit_forecaster, forecast, ForecastModel, ModelKind};
use crate::metrics::{indistinguishability, mae, VariantMetrics};
use crate::noise::{add_noise, generate_correlated_noise, NoiseConfig, NoiseStatus, ScaleRule};
use crate::stationarity::{destabilize, stabilize, BoxCoxParam};
use crate::stats::{derive_seed, std_dev};

pub const STORE_FORMAT: &str = "gesture-store/v1";
pub const REPORT_FORMAT: &str = "metrics-report/v1";
/// Key under which pooled-user models are kept.
pub const PUBLIC_USER: &str = "__public__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationConfig {
    pub noise: NoiseConfig,
    pub train_fraction: f64,
    pub percentile: f64,
    pub similarity_threshold: f64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    /// Cluster count when the training data carries no gesture labels.
    pub clusters: Option<usize>,
    /// Also train a pooled model that serves users absent from the store.
    pub public_model: bool,
}

impl Default for ObfuscationConfig {
    fn default() -> Self {
        ObfuscationConfig {
            noise: NoiseConfig::default(),
            train_fraction: 0.8,
            percentile: 90.0,
            similarity_threshold: 0.1,
            parallelism: 0,
            clusters: None,
            public_model: false,
        }
    }
}

impl ObfuscationConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "percentile {} outside (0, 100]",
                self.percentile
            )));
        }
        if !(self.similarity_threshold >= 0.0) {
            return Err(Error::InvalidArgument(
                "similarity threshold must be non-negative".into(),
            ));
        }
        if self.clusters == Some(0) {
            return Err(Error::InvalidArgument(
                "cluster count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.noise.seed
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

/// Both sweeps of the evaluation protocol: the five noise scales at tau = 0.5,
/// then tau from 0.1 to 0.5 at a noise scale of 2 std.
pub fn experiment_grid(base: &ObfuscationConfig) -> Vec<(String, ObfuscationConfig)> {
    let mut grid = Vec::new();
    for rule in ScaleRule::GRID {
        let mut cfg = base.clone();
        cfg.noise.scale_rule = rule;
        cfg.noise.tau = 0.5;
        grid.push((format!("scale-{rule}"), cfg));
    }
    for tenth in 1..=5 {
        let tau = f64::from(tenth) / 10.0;
        let mut cfg = base.clone();
        cfg.noise.scale_rule = ScaleRule::TwoStd;
        cfg.noise.tau = tau;
        grid.push((format!("tau-{tau}"), cfg));
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModels {
    pub clusters: ClusterModel,
    pub forecasts: BTreeMap<ClusterLabel, ForecastModel>,
    pub purity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserModels {
    pub features: BTreeMap<String, FeatureModels>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub user: String,
    pub feature: String,
    pub cluster: Option<ClusterLabel>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelStore {
    pub format_version: String,
    pub created_unix: u64,
    pub dataset: String,
    pub extrema: Extrema,
    pub lengths: SampleLengths,
    pub config: ObfuscationConfig,
    pub users: BTreeMap<String, UserModels>,
    pub public: Option<UserModels>,
    pub failures: Vec<CellFailure>,
    /// Normalized training split the models were fitted on.
    pub training: Dataset,
    /// Normalized held-out split, when training came from a raw dataset.
    pub holdout: Option<Dataset>,
}

impl ModelStore {
    pub fn forecast_model_count(&self) -> usize {
        self.users
            .values()
            .flat_map(|u| u.features.values())
            .map(|f| f.forecasts.len())
            .sum()
    }

    pub fn cluster_model_count(&self) -> usize {
        self.users.values().map(|u| u.features.len()).sum()
    }

    /// Every forecast label must name a cluster of its feature's cluster model.
    pub fn check_integrity(&self) -> Result<()> {
        let public = self.public.iter().map(|p| (PUBLIC_USER, p));
        for (user, models) in self
            .users
            .iter()
            .map(|(u, m)| (u.as_str(), m))
            .chain(public)
        {
            for (feature, fm) in &models.features {
                let labels: BTreeSet<ClusterLabel> = fm.clusters.labels().collect();
                for (label, model) in &fm.forecasts {
                    if !labels.contains(label) || model.cluster_label != *label {
                        return Err(Error::Store(format!(
                            "forecast model {user}/{feature}/{label} has no matching cluster"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resamples and scales raw data with the stored preprocessing parameters.
    pub fn preprocess(&self, raw: &Dataset) -> Result<Dataset> {
        apply_minmax(&apply_sampling_rate(raw, &self.lengths), &self.extrema)
    }
}

type CellResult = (String, String, Result<FeatureModels>, Vec<CellFailure>);

fn train_cell(
    user: &str,
    feature: &str,
    series: &[&GestureSeries],
    cfg: &ObfuscationConfig,
) -> CellResult {
    let mut failures = Vec::new();
    let labels: Vec<Option<String>> = series.iter().map(|s| s.label.clone()).collect();
    let distinct: BTreeSet<&str> = labels.iter().flatten().map(String::as_str).collect();
    let k = match cfg.clusters {
        Some(k) => k,
        None if !distinct.is_empty() => distinct.len(),
        None => {
            let err = Error::InvalidArgument(
                "series carry no labels and no cluster count was given".into(),
            );
            return (user.into(), feature.into(), Err(err), failures);
        }
    };
    let values: Vec<&[f64]> = series.iter().map(|s| s.values.as_slice()).collect();
    let has_labels = !distinct.is_empty();
    let seed = derive_seed(cfg.seed(), &["cluster", user, feature]);
    let fit = match train_clusters(
        feature,
        &values,
        k,
        has_labels.then_some(labels.as_slice()),
        seed,
    ) {
        Ok(fit) => fit,
        Err(e) => return (user.into(), feature.into(), Err(e), failures),
    };

    let mut forecasts = BTreeMap::new();
    for cluster in &fit.model.clusters {
        let label = cluster.label;
        let members: Vec<&GestureSeries> = series
            .iter()
            .zip(&fit.assignments)
            .filter(|(_, a)| **a == label)
            .map(|(s, _)| *s)
            .collect();
        let result = (|| {
            let y = build_training_series(&members)?;
            let period = members[0].sample_count();
            let (stable, boxcox) = stabilize(&y)?;
            let label_str = label.to_string();
            let fit_seed = derive_seed(cfg.seed(), &["forecast", user, feature, &label_str]);
            let fitted = fit_forecaster(&stable, period, fit_seed)?;
            Ok::<_, Error>(ForecastModel::new(label, feature, fitted.selected, boxcox))
        })();
        match result {
            Ok(model) => {
                forecasts.insert(label, model);
            }
            Err(e) => failures.push(CellFailure {
                user: user.into(),
                feature: feature.into(),
                cluster: Some(label),
                error: e.to_string(),
            }),
        }
    }
    let models = FeatureModels {
        clusters: fit.model,
        forecasts,
        purity: fit.purity,
    };
    (user.into(), feature.into(), Ok(models), failures)
}

type TrainedUsers = (
    BTreeMap<String, UserModels>,
    Option<UserModels>,
    Vec<CellFailure>,
);

fn train_users(
    train: &Dataset,
    users: &BTreeSet<String>,
    cfg: &ObfuscationConfig,
) -> Result<TrainedUsers> {
    let mut cells: Vec<(String, String, Vec<&GestureSeries>)> = Vec::new();
    for user in users {
        for feature in &train.feature_names {
            let series: Vec<&GestureSeries> = train
                .series
                .iter()
                .filter(|s| &s.user_id == user && &s.feature_name == feature)
                .collect();
            if !series.is_empty() {
                cells.push((user.clone(), feature.clone(), series));
            }
        }
    }
    if cfg.public_model {
        for feature in &train.feature_names {
            let series: Vec<&GestureSeries> = train.feature(feature).collect();
            if !series.is_empty() {
                cells.push((PUBLIC_USER.into(), feature.clone(), series));
            }
        }
    }

    let pool = cfg.pool()?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|(user, feature, series)| train_cell(user, feature, series, cfg))
            .collect()
    });

    let mut models: BTreeMap<String, UserModels> = BTreeMap::new();
    let mut public: Option<UserModels> = None;
    let mut failures = Vec::new();
    for (user, feature, result, cell_failures) in results {
        failures.extend(cell_failures);
        match result {
            Ok(fm) => {
                let slot = if user == PUBLIC_USER {
                    public.get_or_insert_with(UserModels::default)
                } else {
                    models.entry(user).or_default()
                };
                slot.features.insert(feature, fm);
            }
            Err(e) => failures.push(CellFailure {
                user,
                feature,
                cluster: None,
                error: e.to_string(),
            }),
        }
    }
    Ok((models, public, failures))
}

/// Clusters each user's series per feature, then stabilizes and fits one
/// forecaster per cluster. Failing cells are recorded, not fatal.
pub fn train_offline(train: &Dataset, cfg: &ObfuscationConfig) -> Result<ModelStore> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let users: BTreeSet<String> = train.users().into_iter().map(str::to_owned).collect();
    let (users, public, failures) = train_users(train, &users, cfg)?;
    for f in &failures {
        log::warn!(
            "training cell {}/{}/{:?} failed: {}",
            f.user,
            f.feature,
            f.cluster,
            f.error
        );
    }
    Ok(ModelStore {
        format_version: STORE_FORMAT.into(),
        created_unix: 0,
        dataset: String::new(),
        extrema: Extrema::new(),
        lengths: SampleLengths::new(),
        config: cfg.clone(),
        users,
        public,
        failures,
        training: train.clone(),
        holdout: None,
    })
}

/// Fixes the sampling rate, splits, scales with training extrema and trains.
pub fn train_from_raw(
    raw: &Dataset,
    dataset_name: &str,
    cfg: &ObfuscationConfig,
) -> Result<(ModelStore, Split)> {
    cfg.validate()?;
    let lengths = target_lengths(raw, cfg.percentile);
    let fixed = apply_sampling_rate(raw, &lengths);
    let split = split_train_test(&fixed, cfg.train_fraction, cfg.seed())?;
    let extrema = fit_minmax(&split.train)?;
    let train = apply_minmax(&split.train, &extrema)?;
    let test = apply_minmax(&split.test, &extrema)?;
    let mut store = train_offline(&train, cfg)?;
    store.dataset = dataset_name.into();
    store.extrema = extrema;
    store.lengths = lengths;
    store.holdout = Some(test.clone());
    Ok((
        store,
        Split {
            train,
            test,
            warnings: split.warnings,
        },
    ))
}

/// Retrains every user present in `new_data` on their old plus new series.
/// `new_data` must already be preprocessed with the store's parameters.
pub fn update_models(
    new_data: &Dataset,
    store: &ModelStore,
    cfg: &ObfuscationConfig,
) -> Result<ModelStore> {
    if new_data.is_empty() {
        return Ok(store.clone());
    }
    let training = store.training.union(new_data);
    let affected: BTreeSet<String> = new_data.users().into_iter().map(str::to_owned).collect();
    let retrain_cfg = ObfuscationConfig {
        public_model: false,
        ..cfg.clone()
    };
    let (fresh, _, mut failures) = train_users(&training, &affected, &retrain_cfg)?;
    let mut updated = store.clone();
    updated
        .failures
        .retain(|f| !affected.contains(&f.user) && !(cfg.public_model && f.user == PUBLIC_USER));
    for user in &affected {
        updated.users.remove(user);
    }
    updated.users.extend(fresh);
    if cfg.public_model {
        let pooled = ObfuscationConfig {
            public_model: true,
            ..cfg.clone()
        };
        let (_, public, public_failures) = train_users(&training, &BTreeSet::new(), &pooled)?;
        updated.public = public;
        failures.extend(public_failures);
    }
    updated.failures.extend(failures);
    updated
        .failures
        .sort_by(|a, b| (&a.user, &a.feature, a.cluster).cmp(&(&b.user, &b.feature, b.cluster)));
    updated.training = training;
    Ok(updated)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureDiagnostics {
    pub cluster: ClusterLabel,
    pub used_public_model: bool,
    pub model_kind: ModelKind,
    /// Transform stored with the forecaster; used to invert its forecast.
    pub model_boxcox: BoxCoxParam,
    /// Transform re-estimated on the incoming gesture, when it could be.
    pub runtime_boxcox: Option<BoxCoxParam>,
    pub order_used: usize,
    pub achieved_correlation: f64,
    pub noise_status: NoiseStatus,
    pub noise_sigma: f64,
    pub draws: usize,
    /// Set when correlated noise could not be generated and white noise was used.
    pub noise_fallback: Option<String>,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obfuscation {
    pub series: GestureSeries,
    pub forecast: Vec<f64>,
    pub noise: Vec<f64>,
    pub diagnostics: GestureDiagnostics,
}

fn models_for<'a>(store: &'a ModelStore, g: &GestureSeries) -> Result<(&'a FeatureModels, bool)> {
    if let Some(fm) = store
        .users
        .get(&g.user_id)
        .and_then(|u| u.features.get(&g.feature_name))
    {
        return Ok((fm, false));
    }
    if let Some(fm) = store
        .public
        .as_ref()
        .and_then(|p| p.features.get(&g.feature_name))
    {
        return Ok((fm, true));
    }
    Err(Error::MissingModel(format!(
        "user `{}`, feature `{}`",
        g.user_id, g.feature_name
    )))
}

/// Replaces a gesture with its cluster's forecast plus correlated noise.
pub fn obfuscate_gesture(
    g: &GestureSeries,
    store: &ModelStore,
    cfg: &ObfuscationConfig,
) -> Result<Obfuscation> {
    let start = Instant::now();
    let (fm, used_public) = models_for(store, g)?;
    let cluster = assign_cluster(&fm.clusters, &g.values)?;
    let model = fm.forecasts.get(&cluster).ok_or_else(|| {
        Error::MissingModel(format!(
            "user `{}`, feature `{}`, cluster {cluster}",
            g.user_id, g.feature_name
        ))
    })?;
    let runtime_boxcox = stabilize(&g.values).ok().map(|(_, p)| p);
    let stable_forecast = forecast(model, g.sample_count())?;
    let typical = destabilize(&stable_forecast, &model.boxcox)?;

    let gesture_id = g.gesture_id.to_string();
    let noise_cfg = NoiseConfig {
        seed: derive_seed(
            cfg.seed(),
            &[
                "noise",
                &g.user_id,
                &g.session_id,
                &gesture_id,
                &g.feature_name,
            ],
        ),
        ..cfg.noise.clone()
    };
    let (noise, order_used, achieved_correlation, noise_status, noise_sigma, draws, noise_fallback) =
        match generate_correlated_noise(&typical, &noise_cfg) {
            Ok(out) => (
                out.noise,
                out.order_used,
                out.achieved_correlation,
                out.status,
                out.sigma,
                out.draws,
                None,
            ),
            Err(e) => {
                let sigma = noise_cfg.scale_rule.sigma(std_dev(&typical));
                let noise = white_noise(typical.len(), sigma, noise_cfg.seed);
                let status = if sigma == 0.0 {
                    NoiseStatus::ZeroScale
                } else {
                    NoiseStatus::BelowThreshold
                };
                (noise, 0, f64::NAN, status, sigma, 1, Some(e.to_string()))
            }
        };
    let released = add_noise(&typical, &noise)?;
    let diagnostics = GestureDiagnostics {
        cluster,
        used_public_model: used_public,
        model_kind: model.smoother.kind,
        model_boxcox: model.boxcox,
        runtime_boxcox,
        order_used,
        achieved_correlation,
        noise_status,
        noise_sigma,
        draws,
        noise_fallback,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Obfuscation {
        series: GestureSeries {
            values: released,
            ..g.clone()
        },
        forecast: typical,
        noise,
        diagnostics,
    })
}

fn white_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureFailure {
    pub user: String,
    pub session: String,
    pub gesture: u64,
    pub feature: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub accepted: usize,
    pub below_threshold: usize,
    pub zero_scale: usize,
    pub white_fallback: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub dataset: String,
    pub label: String,
    pub config: ObfuscationConfig,
    pub gestures: usize,
    pub original: VariantMetrics,
    pub forecast: VariantMetrics,
    pub obfuscated: VariantMetrics,
    pub noise: NoiseSummary,
    pub failures: Vec<GestureFailure>,
    /// Wall-clock per obfuscated gesture; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub timing_seconds: Vec<f64>,
}

/// One evaluated gesture: the three variants compared by the metrics.
#[derive(Clone, Debug)]
pub struct EvaluatedGesture {
    pub user: String,
    pub session: String,
    pub feature: String,
    pub cluster: ClusterLabel,
    pub original: Vec<f64>,
    pub forecast: Vec<f64>,
    pub obfuscated: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Original,
    Forecast,
    Obfuscated,
}

impl EvaluatedGesture {
    pub fn variant(&self, v: Variant) -> &[f64] {
        match v {
            Variant::Original => &self.original,
            Variant::Forecast => &self.forecast,
            Variant::Obfuscated => &self.obfuscated,
        }
    }
}

/// Each input gesture paired with its obfuscation, plus the gestures that failed.
pub type ObfuscatedDataset = (Vec<(GestureSeries, Obfuscation)>, Vec<GestureFailure>);

/// Obfuscates every gesture in `test`, collecting failures instead of aborting.
pub fn obfuscate_dataset(
    test: &Dataset,
    store: &ModelStore,
    cfg: &ObfuscationConfig,
) -> Result<ObfuscatedDataset> {
    let pool = cfg.pool()?;
    let results: Vec<Result<Obfuscation>> = pool.install(|| {
        test.series
            .par_iter()
            .map(|g| obfuscate_gesture(g, store, cfg))
            .collect()
    });
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (g, r) in test.series.iter().zip(results) {
        match r {
            Ok(o) => done.push((g.clone(), o)),
            Err(e) => failures.push(GestureFailure {
                user: g.user_id.clone(),
                session: g.session_id.clone(),
                gesture: g.gesture_id,
                feature: g.feature_name.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok((done, failures))
}

/// Mean MAE over all cross-session pairs of a user's gestures that share
/// feature and cluster.
pub fn per_user_untrackability(
    gestures: &[EvaluatedGesture],
    variant: Variant,
) -> Result<BTreeMap<String, f64>> {
    let mut groups: BTreeMap<(&str, &str, ClusterLabel), BTreeMap<&str, Vec<&[f64]>>> =
        BTreeMap::new();
    for g in gestures {
        groups
            .entry((&g.user, &g.feature, g.cluster))
            .or_default()
            .entry(&g.session)
            .or_default()
            .push(g.variant(variant));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((user, _, _), sessions) in groups {
        let sessions: Vec<&Vec<&[f64]>> = sessions.values().collect();
        for i in 0..sessions.len() {
            for j in (i + 1)..sessions.len() {
                for a in sessions[i] {
                    for b in sessions[j] {
                        let e = sums.entry(user.to_owned()).or_insert((0.0, 0));
                        e.0 += mae(a, b)?;
                        e.1 += 1;
                    }
                }
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(u, (s, n))| (u, s / n as f64))
        .collect())
}

/// Per-gesture information gain against every gesture of the same feature.
pub fn per_gesture_information_gain(
    gestures: &[EvaluatedGesture],
    variant: Variant,
    threshold: f64,
) -> Result<Vec<f64>> {
    let mut by_feature: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for g in gestures {
        by_feature
            .entry(&g.feature)
            .or_default()
            .push(g.variant(variant));
    }
    gestures
        .par_iter()
        .map(|g| {
            indistinguishability(
                g.variant(variant),
                &by_feature[g.feature.as_str()],
                threshold,
            )
        })
        .collect()
}

fn per_user_mean(gestures: &[EvaluatedGesture], values: &[f64]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (g, v) in gestures.iter().zip(values) {
        let e = sums.entry(g.user.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(u, (s, n))| (u, s / n as f64))
        .collect()
}

pub fn variant_metrics(
    gestures: &[EvaluatedGesture],
    variant: Variant,
    threshold: f64,
) -> Result<VariantMetrics> {
    let ig = per_gesture_information_gain(gestures, variant, threshold)?;
    let utility: Vec<f64> = gestures
        .iter()
        .map(|g| mae(&g.original, g.variant(variant)))
        .collect::<Result<_>>()?;
    Ok(VariantMetrics {
        untrackability: per_user_untrackability(gestures, variant)?,
        indistinguishability: per_user_mean(gestures, &ig),
        utility: per_user_mean(gestures, &utility),
    })
}

/// Obfuscates the test split and scores it; also returns the scored gestures.
pub fn evaluate_config(
    test: &Dataset,
    store: &ModelStore,
    label: &str,
    cfg: &ObfuscationConfig,
) -> Result<(MetricsReport, Vec<EvaluatedGesture>)> {
    let (done, failures) = obfuscate_dataset(test, store, cfg)?;
    let mut noise = NoiseSummary::default();
    let mut timing = Vec::with_capacity(done.len());
    let gestures: Vec<EvaluatedGesture> = done
        .into_iter()
        .map(|(g, o)| {
            let d = &o.diagnostics;
            timing.push(d.elapsed_seconds);
            if d.noise_fallback.is_some() {
                noise.white_fallback += 1;
            } else {
                match d.noise_status {
                    NoiseStatus::Accepted => noise.accepted += 1,
                    NoiseStatus::BelowThreshold => noise.below_threshold += 1,
                    NoiseStatus::ZeroScale => noise.zero_scale += 1,
                }
            }
            EvaluatedGesture {
                user: g.user_id,
                session: g.session_id,
                feature: g.feature_name,
                cluster: d.cluster,
                original: g.values,
                forecast: o.forecast,
                obfuscated: o.series.values,
            }
        })
        .collect();
    let threshold = cfg.similarity_threshold;
    let pool = cfg.pool()?;
    let (original, forecast, obfuscated) = pool.install(|| {
        Ok::<_, Error>((
            variant_metrics(&gestures, Variant::Original, threshold)?,
            variant_metrics(&gestures, Variant::Forecast, threshold)?,
            variant_metrics(&gestures, Variant::Obfuscated, threshold)?,
        ))
    })?;
    let report = MetricsReport {
        format: REPORT_FORMAT.into(),
        dataset: store.dataset.clone(),
        label: label.into(),
        config: cfg.clone(),
        gestures: gestures.len(),
        original,
        forecast,
        obfuscated,
        noise,
        failures,
        timing_seconds: timing,
    };
    Ok((report, gestures))
}

/// One report per grid entry.
pub fn run_evaluation(
    test: &Dataset,
    store: &ModelStore,
    grid: &[(String, ObfuscationConfig)],
) -> Result<Vec<MetricsReport>> {
    grid.iter()
        .map(|(label, cfg)| evaluate_config(test, store, label, cfg).map(|(r, _)| r))
        .collect()
}
