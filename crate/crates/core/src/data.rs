//! Gesture data model, CSV ingestion and the preprocessing chain
//! (sampling-rate fixing, min-max scaling, train/test split).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{derive_seed, nearest_rank};

/// Gestures with fewer readings than this are discarded at ingest.
pub const MIN_GESTURE_POINTS: usize = 5;

/// One univariate series: a single feature of a single gesture instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureSeries {
    pub user_id: String,
    pub session_id: String,
    pub gesture_id: u64,
    pub feature_name: String,
    pub label: Option<String>,
    pub values: Vec<f64>,
}

impl GestureSeries {
    pub fn sample_count(&self) -> usize {
        self.values.len()
    }

    /// Identity of the gesture instance this series belongs to.
    pub fn instance(&self) -> InstanceKey {
        InstanceKey {
            user_id: self.user_id.clone(),
            session_id: self.session_id.clone(),
            gesture_id: self.gesture_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceKey {
    pub user_id: String,
    pub session_id: String,
    pub gesture_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
    Unsplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: Vec<GestureSeries>,
    pub feature_names: Vec<String>,
    pub split: SplitTag,
}

impl Dataset {
    pub fn empty(feature_names: Vec<String>, split: SplitTag) -> Self {
        Dataset {
            series: Vec::new(),
            feature_names,
            split,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.series.iter().map(|s| s.user_id.as_str()).collect()
    }

    pub fn instance_count(&self) -> usize {
        self.series
            .iter()
            .map(GestureSeries::instance)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn feature(&self, name: &str) -> impl Iterator<Item = &GestureSeries> {
        let name = name.to_owned();
        self.series.iter().filter(move |s| s.feature_name == name)
    }

    /// Sorts series by (user, session, gesture, feature position).
    pub fn sort(&mut self) {
        let order: BTreeMap<&str, usize> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_str(), i))
            .collect();
        let rank = |s: &GestureSeries| {
            order
                .get(s.feature_name.as_str())
                .copied()
                .unwrap_or(usize::MAX)
        };
        let mut keyed: Vec<_> = self.series.drain(..).map(|s| (rank(&s), s)).collect();
        keyed.sort_by(|(ra, a), (rb, b)| {
            (&a.user_id, &a.session_id, a.gesture_id, ra).cmp(&(
                &b.user_id,
                &b.session_id,
                b.gesture_id,
                rb,
            ))
        });
        self.series = keyed.into_iter().map(|(_, s)| s).collect();
    }

    /// Concatenates two datasets over the same feature set.
    pub fn union(&self, other: &Dataset) -> Dataset {
        let mut features = self.feature_names.clone();
        for f in &other.feature_names {
            if !features.contains(f) {
                features.push(f.clone());
            }
        }
        let mut out = Dataset {
            series: self.series.iter().chain(&other.series).cloned().collect(),
            feature_names: features,
            split: self.split,
        };
        out.sort();
        out
    }
}

/// Column mapping for CSV ingestion.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub user: String,
    pub session: String,
    pub gesture: String,
    pub label: String,
    pub time: String,
    /// Feature columns; `None` takes every remaining column.
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            user: "user_id".into(),
            session: "session_id".into(),
            gesture: "gesture_id".into(),
            label: "label".into(),
            time: "t".into(),
            features: None,
        }
    }
}

struct Row {
    t: f64,
    features: Vec<Option<f64>>,
}

#[derive(Default)]
struct Gesture {
    label: Option<String>,
    rows: Vec<Row>,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required =
        |name: &str| col(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")));
    let user_col = required(&schema.user)?;
    let session_col = required(&schema.session)?;
    let gesture_col = required(&schema.gesture)?;
    let time_col = required(&schema.time)?;
    let label_col = col(&schema.label);

    let reserved: Vec<usize> = [
        Some(user_col),
        Some(session_col),
        Some(gesture_col),
        Some(time_col),
        label_col,
    ]
    .into_iter()
    .flatten()
    .collect();
    let feature_names: Vec<String> = match &schema.features {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !reserved.contains(i))
            .map(|(_, h)| h.trim().to_owned())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let feature_cols = feature_names
        .iter()
        .map(|f| required(f))
        .collect::<Result<Vec<_>>>()?;

    let mut gestures: BTreeMap<InstanceKey, Gesture> = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Schema(format!("record {}: {e}", line + 2)))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let gesture_id: u64 = field(gesture_col).parse().map_err(|_| {
            Error::Schema(format!(
                "record {}: gesture_id `{}` is not an integer",
                line + 2,
                field(gesture_col)
            ))
        })?;
        let t: f64 = match field(time_col).parse() {
            Ok(t) if f64::is_finite(t) => t,
            _ => continue,
        };
        let key = InstanceKey {
            user_id: field(user_col).to_owned(),
            session_id: field(session_col).to_owned(),
            gesture_id,
        };
        let features = feature_cols
            .iter()
            .map(|&c| field(c).parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let entry = gestures.entry(key).or_default();
        if entry.label.is_none() {
            if let Some(lc) = label_col {
                let label = field(lc);
                if !label.is_empty() {
                    entry.label = Some(label.to_owned());
                }
            }
        }
        entry.rows.push(Row { t, features });
    }

    let mut series = Vec::new();
    for (key, mut gesture) in gestures {
        gesture.rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        for (fi, name) in feature_names.iter().enumerate() {
            let values: Vec<f64> = gesture.rows.iter().filter_map(|r| r.features[fi]).collect();
            if values.len() < MIN_GESTURE_POINTS {
                continue;
            }
            series.push(GestureSeries {
                user_id: key.user_id.clone(),
                session_id: key.session_id.clone(),
                gesture_id: key.gesture_id,
                feature_name: name.clone(),
                label: gesture.label.clone(),
                values,
            });
        }
    }
    if series.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut dataset = Dataset {
        series,
        feature_names,
        split: SplitTag::Unsplit,
    };
    dataset.sort();
    Ok(dataset)
}

/// Writes a dataset back to the ingestion CSV schema; `t` is the sample index.
pub fn write_csv<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "user_id".to_owned(),
        "session_id".into(),
        "gesture_id".into(),
        "label".into(),
        "t".into(),
    ];
    header.extend(dataset.feature_names.iter().cloned());
    wtr.write_record(&header)
        .map_err(|e| Error::Serde(e.to_string()))?;

    let mut by_instance: BTreeMap<InstanceKey, (Option<String>, BTreeMap<&str, &[f64]>)> =
        BTreeMap::new();
    for s in &dataset.series {
        let entry = by_instance
            .entry(s.instance())
            .or_insert_with(|| (s.label.clone(), BTreeMap::new()));
        entry.1.insert(s.feature_name.as_str(), &s.values);
    }
    for (key, (label, feats)) in by_instance {
        let len = feats.values().map(|v| v.len()).max().unwrap_or(0);
        for t in 0..len {
            let mut record = vec![
                key.user_id.clone(),
                key.session_id.clone(),
                key.gesture_id.to_string(),
                label.clone().unwrap_or_default(),
                t.to_string(),
            ];
            for f in &dataset.feature_names {
                record.push(
                    feats
                        .get(f.as_str())
                        .and_then(|v| v.get(t))
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            wtr.write_record(&record)
                .map_err(|e| Error::Serde(e.to_string()))?;
        }
    }
    wtr.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

/// Target length per feature group.
pub type SampleLengths = BTreeMap<String, usize>;

/// Truncates or linearly stretches `values` to exactly `len` points.
pub fn resample(values: &[f64], len: usize) -> Vec<f64> {
    let m = values.len();
    if m >= len {
        return values[..len].to_vec();
    }
    if m == 1 || len == 1 {
        return vec![values[0]; len];
    }
    let step = (m - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|j| {
            let pos = j as f64 * step;
            let i = (pos.floor() as usize).min(m - 2);
            let frac = pos - i as f64;
            values[i] + frac * (values[i + 1] - values[i])
        })
        .collect()
}

/// Target lengths at the given nearest-rank percentile of each feature group.
pub fn target_lengths(d: &Dataset, percentile: f64) -> SampleLengths {
    let mut counts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for s in &d.series {
        counts
            .entry(&s.feature_name)
            .or_default()
            .push(s.sample_count());
    }
    counts
        .into_iter()
        .map(|(f, c)| (f.to_owned(), nearest_rank(&c, percentile)))
        .collect()
}

pub fn fix_sampling_rate(d: &Dataset, percentile: f64) -> (Dataset, SampleLengths) {
    let lengths = target_lengths(d, percentile);
    (apply_sampling_rate(d, &lengths), lengths)
}

/// Resamples every series to the stored length of its feature group; series of
/// unknown features are left untouched.
pub fn apply_sampling_rate(d: &Dataset, lengths: &SampleLengths) -> Dataset {
    let series = d
        .series
        .iter()
        .map(|s| match lengths.get(&s.feature_name) {
            Some(&len) if len != s.values.len() => GestureSeries {
                values: resample(&s.values, len),
                ..s.clone()
            },
            _ => s.clone(),
        })
        .collect();
    Dataset {
        series,
        feature_names: d.feature_names.clone(),
        split: d.split,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

pub type Extrema = BTreeMap<String, MinMax>;

pub fn fit_minmax(d: &Dataset) -> Result<Extrema> {
    let mut extrema = Extrema::new();
    for s in &d.series {
        let e = extrema.entry(s.feature_name.clone()).or_insert(MinMax {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        });
        for &v in &s.values {
            e.min = e.min.min(v);
            e.max = e.max.max(v);
        }
    }
    for (name, e) in &extrema {
        if e.max <= e.min {
            return Err(Error::DegenerateFeature(name.clone()));
        }
    }
    Ok(extrema)
}

/// Scales with the given extrema. Values outside the fitted range are not clipped.
pub fn apply_minmax(d: &Dataset, extrema: &Extrema) -> Result<Dataset> {
    let series = d
        .series
        .iter()
        .map(|s| {
            let e = extrema.get(&s.feature_name).ok_or_else(|| {
                Error::Schema(format!("no extrema for feature `{}`", s.feature_name))
            })?;
            Ok(GestureSeries {
                values: s.values.iter().map(|&v| e.scale(v)).collect(),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        series,
        feature_names: d.feature_names.clone(),
        split: d.split,
    })
}

pub fn normalize_minmax(d: &Dataset) -> Result<(Dataset, Extrema)> {
    let extrema = fit_minmax(d)?;
    Ok((apply_minmax(d, &extrema)?, extrema))
}

pub fn denormalize(values: &[f64], extrema: &MinMax) -> Vec<f64> {
    values.iter().map(|&v| extrema.unscale(v)).collect()
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub warnings: Vec<String>,
}

/// Per-user split at gesture-instance granularity.
pub fn split_train_test(d: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut per_user: BTreeMap<&str, BTreeSet<InstanceKey>> = BTreeMap::new();
    for s in &d.series {
        per_user.entry(&s.user_id).or_default().insert(s.instance());
    }
    let mut train_keys = BTreeSet::new();
    let mut warnings = Vec::new();
    for (user, instances) in per_user {
        let mut keys: Vec<InstanceKey> = instances.into_iter().collect();
        if keys.len() < 2 {
            warnings.push(format!(
                "user `{user}` has a single gesture; kept in the training split"
            ));
            log::warn!("user `{user}` has a single gesture; kept in the training split");
            train_keys.extend(keys);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["split", user]));
        keys.shuffle(&mut rng);
        let n_train =
            ((train_fraction * keys.len() as f64).round() as usize).clamp(1, keys.len() - 1);
        train_keys.extend(keys.into_iter().take(n_train));
    }
    let (train, test): (Vec<_>, Vec<_>) = d
        .series
        .iter()
        .cloned()
        .partition(|s| train_keys.contains(&s.instance()));
    Ok(Split {
        train: Dataset {
            series: train,
            feature_names: d.feature_names.clone(),
            split: SplitTag::Train,
        },
        test: Dataset {
            series: test,
            feature_names: d.feature_names.clone(),
            split: SplitTag::Test,
        },
        warnings,
    })
}
