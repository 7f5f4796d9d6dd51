//! Dynamic time warping and k-medoids gesture-type clustering.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClusterLabel = u32;

/// Classic DTW: absolute-difference local cost, unconstrained window, both
/// endpoints aligned.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("dtw on an empty series".into()));
    }
    // Keep the shorter series along the rolling rows.
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let m = inner.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in outer {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = (x - inner[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: ClusterLabel,
    pub centroid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub feature_name: String,
    pub distance_kind: String,
    pub clusters: Vec<Cluster>,
}

impl ClusterModel {
    pub fn centroid_of(&self, label: ClusterLabel) -> Option<&[f64]> {
        self.clusters
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.centroid.as_slice())
    }

    pub fn labels(&self) -> impl Iterator<Item = ClusterLabel> + '_ {
        self.clusters.iter().map(|c| c.label)
    }
}

/// Nearest centroid under DTW; ties go to the lowest label.
pub fn assign_cluster(model: &ClusterModel, g: &[f64]) -> Result<ClusterLabel> {
    let mut best: Option<(f64, ClusterLabel)> = None;
    for c in &model.clusters {
        let d = dtw_distance(&c.centroid, g)?;
        best = match best {
            Some((bd, bl)) if d > bd || (d == bd && bl <= c.label) => Some((bd, bl)),
            _ => Some((d, c.label)),
        };
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::InvalidArgument("cluster model has no clusters".into()))
}

/// Outcome of k-medoids training with diagnostics.
#[derive(Clone, Debug)]
pub struct ClusterFit {
    pub model: ClusterModel,
    /// Indices (into the input) of the medoid for each label, in label order.
    pub medoids: Vec<usize>,
    /// Label of each input series.
    pub assignments: Vec<ClusterLabel>,
    /// Sum of within-cluster distances after initialization and after each swap.
    pub objective_trace: Vec<f64>,
    /// Fraction of series whose cluster majority label matches their own, when
    /// labels were supplied.
    pub purity: Option<f64>,
}

/// Symmetric pairwise DTW matrix, row-major.
pub fn distance_matrix(series: &[&[f64]]) -> Result<Vec<f64>> {
    let n = series.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| dtw_distance(series[i], series[j]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut dist = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    Ok(dist)
}

const MAX_SWAP_ROUNDS: usize = 200;

/// k-medoids (PAM swap search) under DTW. `labels`, when given, only feed the
/// purity diagnostic.
pub fn train_clusters(
    feature_name: &str,
    series: &[&[f64]],
    k: usize,
    labels: Option<&[Option<String>]>,
    seed: u64,
) -> Result<ClusterFit> {
    let n = series.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n} available series"
        )));
    }
    let dist = distance_matrix(series)?;
    let d = |i: usize, j: usize| dist[i * n + j];

    let mut medoids = init_medoids(n, k, &d, seed);
    let cost = |meds: &[usize]| -> f64 {
        (0..n)
            .map(|i| meds.iter().map(|&m| d(i, m)).fold(f64::INFINITY, f64::min))
            .sum()
    };
    let mut current = cost(&medoids);
    let mut trace = vec![current];

    for _ in 0..MAX_SWAP_ROUNDS {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for candidate in 0..n {
                if medoids.contains(&candidate) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = candidate;
                let c = cost(&trial);
                if c < current - 1e-12 * current.abs().max(1.0)
                    && best.is_none_or(|(bc, _, _)| c < bc)
                {
                    best = Some((c, slot, candidate));
                }
            }
        }
        match best {
            Some((c, slot, candidate)) => {
                medoids[slot] = candidate;
                current = c;
                trace.push(current);
            }
            None => break,
        }
    }

    medoids.sort_unstable();
    let clusters: Vec<Cluster> = medoids
        .iter()
        .enumerate()
        .map(|(label, &m)| Cluster {
            label: label as ClusterLabel,
            centroid: series[m].to_vec(),
        })
        .collect();
    let assignments: Vec<ClusterLabel> = (0..n)
        .map(|i| {
            let mut best = 0;
            for (l, &m) in medoids.iter().enumerate() {
                if d(i, m) < d(i, medoids[best]) {
                    best = l;
                }
            }
            best as ClusterLabel
        })
        .collect();
    let purity = labels.map(|labels| purity(&assignments, labels));
    Ok(ClusterFit {
        model: ClusterModel {
            feature_name: feature_name.to_owned(),
            distance_kind: "dtw".into(),
            clusters,
        },
        medoids,
        assignments,
        objective_trace: trace,
        purity,
    })
}

/// k-medoids++ style seeding: first medoid uniform, the rest with probability
/// proportional to the distance from the nearest chosen medoid.
fn init_medoids(n: usize, k: usize, d: &impl Fn(usize, usize) -> f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                if medoids.contains(&i) {
                    0.0
                } else {
                    medoids
                        .iter()
                        .map(|&m| d(i, m))
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    chosen = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen
        } else {
            None
        };
        // All remaining series coincide with a medoid: take the first free index.
        let pick = pick.unwrap_or_else(|| (0..n).find(|i| !medoids.contains(i)).expect("k <= n"));
        medoids.push(pick);
    }
    medoids
}

fn purity(assignments: &[ClusterLabel], labels: &[Option<String>]) -> f64 {
    let clusters: BTreeSet<ClusterLabel> = assignments.iter().copied().collect();
    let mut agree = 0usize;
    for c in clusters {
        let mut counts = std::collections::BTreeMap::new();
        for (a, l) in assignments.iter().zip(labels) {
            if *a == c {
                *counts.entry(l.as_deref()).or_insert(0usize) += 1;
            }
        }
        agree += counts.values().copied().max().unwrap_or(0);
    }
    agree as f64 / assignments.len() as f64
}
