//! On-disk model store: a manifest plus one JSON document per model.
//!
//! ```text
//! store/
//!   manifest.json
//!   training.json  holdout.json
//!   models/u0000/f00/clusters.json
//!   models/u0000/f00/forecast_0.json ...
//! ```
//!
//! Everything is staged under `store/.staging` and moved into place with the
//! manifest last, so a store without a manifest is never read as valid.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::{Dataset, Extrema, SampleLengths};
use crate::dtw::{ClusterLabel, ClusterModel};
use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, MODEL_FORMAT};
use crate::pipeline::{
    update_models, CellFailure, FeatureModels, ModelStore, ObfuscationConfig, UserModels,
    STORE_FORMAT,
};

pub const MANIFEST: &str = "manifest.json";
const STAGING: &str = ".staging";
const CLUSTER_FORMAT: &str = "cluster-model/v1";

#[derive(Serialize, Deserialize)]
struct ClusterDoc {
    format: String,
    #[serde(flatten)]
    model: ClusterModel,
}

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    feature: String,
    clusters: String,
    forecasts: BTreeMap<ClusterLabel, String>,
    purity: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct UserEntry {
    user: String,
    features: Vec<FeatureEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: String,
    created_unix: u64,
    dataset: String,
    extrema: Extrema,
    lengths: SampleLengths,
    config: ObfuscationConfig,
    users: Vec<UserEntry>,
    public: Option<UserEntry>,
    failures: Vec<CellFailure>,
    training: String,
    holdout: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn stage_user(staging: &Path, dir: &str, user: &str, models: &UserModels) -> Result<UserEntry> {
    let mut features = Vec::new();
    for (fi, (feature, fm)) in models.features.iter().enumerate() {
        let base = format!("models/{dir}/f{fi:02}");
        let clusters = format!("{base}/clusters.json");
        write_json(
            &staging.join(&clusters),
            &ClusterDoc {
                format: CLUSTER_FORMAT.into(),
                model: fm.clusters.clone(),
            },
        )?;
        let mut forecasts = BTreeMap::new();
        for (label, model) in &fm.forecasts {
            let rel = format!("{base}/forecast_{label}.json");
            write_json(&staging.join(&rel), model)?;
            forecasts.insert(*label, rel);
        }
        features.push(FeatureEntry {
            feature: feature.clone(),
            clusters,
            forecasts,
            purity: fm.purity,
        });
    }
    Ok(UserEntry {
        user: user.into(),
        features,
    })
}

fn load_user(root: &Path, entry: &UserEntry) -> Result<UserModels> {
    let mut features = BTreeMap::new();
    for fe in &entry.features {
        let doc: ClusterDoc = read_json(&root.join(&fe.clusters))?;
        if doc.format != CLUSTER_FORMAT {
            return Err(Error::Store(format!(
                "{}: unsupported format `{}`",
                fe.clusters, doc.format
            )));
        }
        let mut forecasts = BTreeMap::new();
        for (label, rel) in &fe.forecasts {
            let model: ForecastModel = read_json(&root.join(rel))?;
            if model.format != MODEL_FORMAT {
                return Err(Error::Store(format!(
                    "{rel}: unsupported format `{}`",
                    model.format
                )));
            }
            forecasts.insert(*label, model);
        }
        features.insert(
            fe.feature.clone(),
            FeatureModels {
                clusters: doc.model,
                forecasts,
                purity: fe.purity,
            },
        );
    }
    Ok(UserModels { features })
}

fn remove_if_exists(path: &Path) -> Result<()> {
    let result = if path.is_dir() {
        fs::remove_dir_all(path)
    } else if path.exists() {
        fs::remove_file(path)
    } else {
        return Ok(());
    };
    result.map_err(|e| Error::io(path, e))
}

fn rename(from: &Path, to: &Path) -> Result<()> {
    fs::rename(from, to).map_err(|e| Error::io(to, e))
}

pub fn save_store(store: &ModelStore, path: impl AsRef<Path>) -> Result<()> {
    store.check_integrity()?;
    let root = path.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let staging = root.join(STAGING);
    remove_if_exists(&staging)?;

    let users = store
        .users
        .iter()
        .enumerate()
        .map(|(ui, (user, models))| stage_user(&staging, &format!("u{ui:04}"), user, models))
        .collect::<Result<Vec<_>>>()?;
    let public = store
        .public
        .as_ref()
        .map(|p| stage_user(&staging, "public", crate::pipeline::PUBLIC_USER, p))
        .transpose()?;
    write_json(&staging.join("training.json"), &store.training)?;
    if let Some(holdout) = &store.holdout {
        write_json(&staging.join("holdout.json"), holdout)?;
    }
    let manifest = Manifest {
        format_version: store.format_version.clone(),
        created_unix: store.created_unix,
        dataset: store.dataset.clone(),
        extrema: store.extrema.clone(),
        lengths: store.lengths.clone(),
        config: store.config.clone(),
        users,
        public,
        failures: store.failures.clone(),
        training: "training.json".into(),
        holdout: store.holdout.as_ref().map(|_| "holdout.json".into()),
    };
    write_json(&staging.join(MANIFEST), &manifest)?;

    remove_if_exists(&root.join(MANIFEST))?;
    for entry in ["models", "training.json", "holdout.json"] {
        remove_if_exists(&root.join(entry))?;
        let staged = staging.join(entry);
        if staged.exists() {
            rename(&staged, &root.join(entry))?;
        }
    }
    rename(&staging.join(MANIFEST), &root.join(MANIFEST))?;
    remove_if_exists(&staging)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<ModelStore> {
    let root = path.as_ref();
    let manifest: Manifest = read_json(&root.join(MANIFEST))?;
    if manifest.format_version != STORE_FORMAT {
        return Err(Error::Store(format!(
            "unsupported store format `{}`",
            manifest.format_version
        )));
    }
    let mut users = BTreeMap::new();
    for entry in &manifest.users {
        users.insert(entry.user.clone(), load_user(root, entry)?);
    }
    let public = manifest
        .public
        .as_ref()
        .map(|e| load_user(root, e))
        .transpose()?;
    let training: Dataset = read_json(&root.join(&manifest.training))?;
    let holdout: Option<Dataset> = manifest
        .holdout
        .as_ref()
        .map(|h| read_json(&root.join(h)))
        .transpose()?;
    let store = ModelStore {
        format_version: manifest.format_version,
        created_unix: manifest.created_unix,
        dataset: manifest.dataset,
        extrema: manifest.extrema,
        lengths: manifest.lengths,
        config: manifest.config,
        users,
        public,
        failures: manifest.failures,
        training,
        holdout,
    };
    store.check_integrity()?;
    Ok(store)
}

pub fn backup_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".bak");
    path.with_file_name(name)
}

/// Preprocesses `raw` with the stored parameters, retrains the affected users
/// and replaces the store. The previous store is kept at `<path>.bak`.
pub fn update_store_dir(
    path: impl AsRef<Path>,
    raw: &Dataset,
    cfg: &ObfuscationConfig,
) -> Result<ModelStore> {
    let root = path.as_ref();
    let store = load_store(root)?;
    let new_data = store.preprocess(raw)?;
    let updated = update_models(&new_data, &store, cfg)?;
    let backup = backup_path(root);
    remove_if_exists(&backup)?;
    rename(root, &backup)?;
    save_store(&updated, root)?;
    Ok(updated)
}
