//! Privacy and utility metrics: untrackability (cross-session MAE),
//! indistinguishability (information gain over a similarity ball) and utility
//! loss (MAE against the original series).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("MAE of empty series".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// MAE between two sessions' series of the same user.
pub fn untrackability(a: &[f64], b: &[f64]) -> Result<f64> {
    mae(a, b)
}

/// MAE between the original and the released series.
pub fn utility_loss(original: &[f64], obfuscated: &[f64]) -> Result<f64> {
    mae(original, obfuscated)
}

/// log2(n / k) where k counts population members within `similarity_threshold`
/// (MAE) of the target. The population is expected to contain the target, so
/// k is floored at 1.
pub fn indistinguishability<S: AsRef<[f64]>>(
    target: &[f64],
    population: &[S],
    similarity_threshold: f64,
) -> Result<f64> {
    let n = population.len();
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    let mut k = 0usize;
    for member in population {
        if mae(target, member.as_ref())? <= similarity_threshold {
            k += 1;
        }
    }
    Ok((n as f64 / k.max(1) as f64).log2())
}

/// Empirical CDF sampled at `points` equally spaced positions over [min, max].
pub fn build_cdf(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let n = sorted.len() as f64;
    let points = points.max(1);
    (0..points)
        .map(|i| {
            let x = if points == 1 || hi == lo || i == points - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            };
            let count = sorted.partition_point(|v| *v <= x);
            (x, count as f64 / n)
        })
        .collect()
}

pub fn cdf_fraction(values: &[f64], x: f64) -> f64 {
    values.iter().filter(|v| **v <= x).count() as f64 / values.len() as f64
}

/// Per-user values for the three metrics, for one variant of the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub untrackability: BTreeMap<String, f64>,
    pub indistinguishability: BTreeMap<String, f64>,
    pub utility: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Untrackability,
    Indistinguishability,
    Utility,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::Untrackability,
        Metric::Indistinguishability,
        Metric::Utility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Untrackability => "untrackability",
            Metric::Indistinguishability => "indistinguishability",
            Metric::Utility => "utility",
        }
    }
}

impl VariantMetrics {
    pub fn values(&self, metric: Metric) -> Vec<f64> {
        match metric {
            Metric::Untrackability => self.untrackability.values().copied().collect(),
            Metric::Indistinguishability => self.indistinguishability.values().copied().collect(),
            Metric::Utility => self.utility.values().copied().collect(),
        }
    }
}
