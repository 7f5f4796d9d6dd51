//! Exponential-smoothing forecasters with automatic model selection.
//!
//! Three candidates are fitted to each stabilized training series: simple
//! exponential smoothing, damped-trend Holt, and additive Holt-Winters whose
//! period is one gesture length. Each is fitted by minimizing the in-sample
//! one-step-ahead SSE and the winner is chosen by AIC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::GestureSeries;
use crate::dtw::ClusterLabel;
use crate::error::{Error, Result};
use crate::optim::{Bounds, NelderMead};
use crate::stationarity::BoxCoxParam;

pub const MODEL_FORMAT: &str = "forecast-model/v1";
pub const MIN_NONSEASONAL_LEN: usize = 8;

const EPS: f64 = 1e-4;
const ALPHA: Bounds = Bounds::new(EPS, 1.0);
const BETA: Bounds = Bounds::new(EPS, 1.0);
const PHI: Bounds = Bounds::new(0.8 + EPS, 1.0);
const GAMMA: Bounds = Bounds::new(EPS, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ses,
    HoltDamped,
    SeasonalAdditive,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ses => "SES",
            ModelKind::HoltDamped => "Holt-damped",
            ModelKind::SeasonalAdditive => "seasonal-additive",
        }
    }

    /// Number of optimized smoothing coefficients; the AIC complexity term.
    pub fn parameter_count(self) -> usize {
        match self {
            ModelKind::Ses => 1,
            ModelKind::HoltDamped => 3,
            ModelKind::SeasonalAdditive => 4,
        }
    }

    fn bounds(self) -> &'static [Bounds] {
        match self {
            ModelKind::Ses => &[ALPHA],
            ModelKind::HoltDamped => &[ALPHA, BETA, PHI],
            ModelKind::SeasonalAdditive => &[ALPHA, BETA, PHI, GAMMA],
        }
    }

    fn canonical_start(self) -> &'static [f64] {
        match self {
            ModelKind::Ses => &[0.5],
            ModelKind::HoltDamped => &[0.5, 0.1, 0.98],
            ModelKind::SeasonalAdditive => &[0.3, 0.05, 0.98, 0.1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    pub gamma: Option<f64>,
}

impl SmoothingParams {
    fn from_vec(kind: ModelKind, v: &[f64]) -> Self {
        match kind {
            ModelKind::Ses => SmoothingParams {
                alpha: v[0],
                beta: None,
                phi: None,
                gamma: None,
            },
            ModelKind::HoltDamped => SmoothingParams {
                alpha: v[0],
                beta: Some(v[1]),
                phi: Some(v[2]),
                gamma: None,
            },
            ModelKind::SeasonalAdditive => SmoothingParams {
                alpha: v[0],
                beta: Some(v[1]),
                phi: Some(v[2]),
                gamma: Some(v[3]),
            },
        }
    }
}

/// Smoothing state after the last training observation. `seasonal[j]` applies
/// to forecast step `j + 1` (mod the period).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingState {
    pub level: f64,
    pub trend: f64,
    pub seasonal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoother {
    pub kind: ModelKind,
    pub params: SmoothingParams,
    pub season_length: Option<usize>,
    pub state: SmoothingState,
    pub fit_sse: f64,
    pub fit_aic: f64,
    pub n_obs: usize,
}

impl Smoother {
    pub fn forecast(&self, horizon: usize) -> Result<Vec<f64>> {
        if horizon == 0 {
            return Err(Error::InvalidArgument(
                "forecast horizon must be positive".into(),
            ));
        }
        let phi = self.params.phi.unwrap_or(1.0);
        let mut damp = 0.0;
        let mut factor = 1.0;
        let out: Vec<f64> = (0..horizon)
            .map(|j| {
                factor *= phi;
                damp += factor;
                let season = if self.state.seasonal.is_empty() {
                    0.0
                } else {
                    self.state.seasonal[j % self.state.seasonal.len()]
                };
                self.state.level + damp * self.state.trend + season
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit {
                candidate: self.kind.name(),
                reason: "non-finite forecast".into(),
            });
        }
        Ok(out)
    }
}

/// Per-cluster, per-feature forecaster with its stabilizing transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub format: String,
    pub cluster_label: ClusterLabel,
    pub feature_name: String,
    pub smoother: Smoother,
    pub boxcox: BoxCoxParam,
}

impl ForecastModel {
    pub fn new(
        cluster_label: ClusterLabel,
        feature_name: &str,
        smoother: Smoother,
        boxcox: BoxCoxParam,
    ) -> Self {
        ForecastModel {
            format: MODEL_FORMAT.into(),
            cluster_label,
            feature_name: feature_name.into(),
            smoother,
            boxcox,
        }
    }
}

pub fn forecast(model: &ForecastModel, horizon: usize) -> Result<Vec<f64>> {
    model.smoother.forecast(horizon)
}

/// Concatenates equal-length gesture instances, in session/gesture order,
/// into a periodic training series.
pub fn build_training_series(members: &[&GestureSeries]) -> Result<Vec<f64>> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("cluster has no members".into()))?;
    let len = first.sample_count();
    if let Some(bad) = members.iter().find(|m| m.sample_count() != len) {
        return Err(Error::LengthMismatch {
            left: len,
            right: bad.sample_count(),
        });
    }
    let mut ordered = members.to_vec();
    ordered.sort_by(|a, b| (&a.session_id, a.gesture_id).cmp(&(&b.session_id, b.gesture_id)));
    Ok(ordered
        .iter()
        .flat_map(|m| m.values.iter().copied())
        .collect())
}

struct Run {
    sse: f64,
    state: SmoothingState,
}

fn initial_state(kind: ModelKind, y: &[f64], season_length: usize) -> SmoothingState {
    match kind {
        ModelKind::Ses => SmoothingState {
            level: y[0],
            trend: 0.0,
            seasonal: Vec::new(),
        },
        ModelKind::HoltDamped => SmoothingState {
            level: y[0],
            trend: y[1] - y[0],
            seasonal: Vec::new(),
        },
        ModelKind::SeasonalAdditive => {
            let l = season_length;
            let first = y[..l].iter().sum::<f64>() / l as f64;
            let second = y[l..2 * l].iter().sum::<f64>() / l as f64;
            SmoothingState {
                level: first,
                trend: (second - first) / l as f64,
                seasonal: y[..l].iter().map(|v| v - first).collect(),
            }
        }
    }
}

/// Error-correction recursions over the whole series.
fn run(kind: ModelKind, p: &SmoothingParams, y: &[f64], season_length: usize) -> Run {
    let mut s = initial_state(kind, y, season_length);
    let beta = p.beta.unwrap_or(0.0);
    let phi = p.phi.unwrap_or(1.0);
    let gamma = p.gamma.unwrap_or(0.0);
    let seasonal = !s.seasonal.is_empty();
    let mut sse = 0.0;
    for (t, &obs) in y.iter().enumerate() {
        let idx = if seasonal { t % season_length } else { 0 };
        let season = if seasonal { s.seasonal[idx] } else { 0.0 };
        let damped = phi * s.trend;
        let err = obs - (s.level + damped + season);
        sse += err * err;
        s.level += damped + p.alpha * err;
        s.trend = damped + beta * err;
        if seasonal {
            s.seasonal[idx] += gamma * err;
        }
        if !sse.is_finite() {
            break;
        }
    }
    if seasonal {
        let offset = y.len() % season_length;
        s.seasonal.rotate_left(offset);
    }
    Run { sse, state: s }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub kind: ModelKind,
    pub sse: f64,
    pub aic: f64,
}

#[derive(Clone, Debug)]
pub struct ForecastFit {
    pub selected: Smoother,
    pub candidates: Vec<CandidateFit>,
}

/// AIC = n ln(SSE / n) + 2p, with SSE floored so exact fits stay finite.
pub fn aic(sse: f64, n: usize, parameters: usize) -> f64 {
    let n_f = n as f64;
    n_f * (sse / n_f).max(f64::MIN_POSITIVE).ln() + 2.0 * parameters as f64
}

const STARTS: usize = 3;

fn fit_candidate(kind: ModelKind, y: &[f64], season_length: usize, seed: u64) -> Result<Smoother> {
    let bounds = kind.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind as u64);
    let mut starts = vec![kind.canonical_start().to_vec()];
    while starts.len() < STARTS {
        starts.push(
            bounds
                .iter()
                .map(|b| rng.random_range(b.lower..=b.upper))
                .collect(),
        );
    }
    let objective =
        |v: &[f64]| run(kind, &SmoothingParams::from_vec(kind, v), y, season_length).sse;
    let nm = NelderMead::default();
    let best = starts
        .iter()
        .map(|s| nm.minimize(objective, s, bounds))
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::Fit {
            candidate: kind.name(),
            reason: "objective is not finite at the optimum".into(),
        });
    }
    let params = SmoothingParams::from_vec(kind, &best.x);
    let Run { sse, state } = run(kind, &params, y, season_length);
    Ok(Smoother {
        kind,
        params,
        season_length: (kind == ModelKind::SeasonalAdditive).then_some(season_length),
        state,
        fit_sse: sse,
        fit_aic: aic(sse, y.len(), kind.parameter_count()),
        n_obs: y.len(),
    })
}

pub fn fit_forecaster(y: &[f64], season_length: usize, seed: u64) -> Result<ForecastFit> {
    if y.len() < MIN_NONSEASONAL_LEN {
        return Err(Error::TooShort {
            needed: MIN_NONSEASONAL_LEN,
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite training value at index {i}"
        )));
    }
    let mut kinds = vec![ModelKind::Ses, ModelKind::HoltDamped];
    if season_length >= 2 && y.len() >= 2 * season_length {
        kinds.push(ModelKind::SeasonalAdditive);
    }
    let mut fits = Vec::new();
    let mut last_err = None;
    for kind in kinds {
        match fit_candidate(kind, y, season_length, seed) {
            Ok(fit) => fits.push(fit),
            Err(e) => {
                log::debug!("candidate {} failed: {e}", kind.name());
                last_err = Some(e);
            }
        }
    }
    let candidates = fits
        .iter()
        .map(|f| CandidateFit {
            kind: f.kind,
            sse: f.fit_sse,
            aic: f.fit_aic,
        })
        .collect();
    // strict improvement only, so the simpler model wins ties
    let mut selected: Option<Smoother> = None;
    for fit in fits {
        if selected.as_ref().is_none_or(|s| fit.fit_aic < s.fit_aic) {
            selected = Some(fit);
        }
    }
    match selected {
        Some(selected) => Ok(ForecastFit {
            selected,
            candidates,
        }),
        None => Err(last_err.unwrap_or(Error::Fit {
            candidate: "all",
            reason: "no candidate could be fitted".into(),
        })),
    }
}
