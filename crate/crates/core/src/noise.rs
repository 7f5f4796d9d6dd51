//! Correlated noise from a linear-prediction synthesis filter.
//!
//! The filter coefficients solve the Toeplitz normal equations built from the
//! forecasted gesture's autocorrelation. White Gaussian noise driven through
//! the all-pole filter inherits the gesture's spectral shape; draws are
//! repeated until the noise correlates with the forecast at least as strongly
//! as the configured threshold.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, pearson, std_dev};

/// Reflection coefficients at or beyond this magnitude mark the system singular.
pub const REFLECTION_LIMIT: f64 = 1.0 - 1e-10;

/// Normalized biased autocorrelation R[0..=max_lag], with R[0] = 1.
pub fn autocorr(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "lag {max_lag} needs more than {n} samples"
        )));
    }
    let m = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::DegenerateSeries(
            "zero-variance series has no autocorrelation",
        ));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centered
                    .iter()
                    .zip(&centered[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / c0
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpFilter {
    pub order: usize,
    /// a_1..a_order.
    pub coefficients: Vec<f64>,
    /// R[0..=order] the coefficients were solved from.
    pub source_autocorr: Vec<f64>,
}

/// Levinson-Durbin solution of the order-`order` Toeplitz system
/// `toeplitz(R[0..order]) a = R[1..=order]`.
pub fn lp_coefficients(r: &[f64], order: usize) -> Result<LpFilter> {
    if order == 0 {
        return Err(Error::InvalidArgument("LP order must be at least 1".into()));
    }
    if r.len() < order + 1 {
        return Err(Error::InvalidArgument(format!(
            "order {order} needs {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) {
        return Err(Error::Singular {
            order: 0,
            reflection: f64::NAN,
        });
    }
    let mut a = vec![0.0; order];
    let mut err = r[0];
    for m in 0..order {
        let acc: f64 = r[m + 1] - (0..m).map(|j| a[j] * r[m - j]).sum::<f64>();
        let k = acc / err;
        if !k.is_finite() || k.abs() >= REFLECTION_LIMIT {
            return Err(Error::Singular {
                order: m + 1,
                reflection: k,
            });
        }
        let prev = a.clone();
        a[m] = k;
        for j in 0..m {
            a[j] = prev[j] - k * prev[m - 1 - j];
        }
        err *= 1.0 - k * k;
    }
    Ok(LpFilter {
        order,
        coefficients: a,
        source_autocorr: r[..=order].to_vec(),
    })
}

/// All-pole recursion `y_t = sum_j a_j y_{t-j} + z_t` from rest, without rescaling.
pub fn all_pole(coefficients: &[f64], z: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(z.len());
    for (t, &input) in z.iter().enumerate() {
        let feedback: f64 = coefficients
            .iter()
            .enumerate()
            .take(t)
            .map(|(j, a)| a * y[t - 1 - j])
            .sum();
        y.push(feedback + input);
    }
    y
}

/// Filters `z` and rescales the output back to the sample std of `z`.
pub fn shape_noise(filter: &LpFilter, z: &[f64]) -> Result<Vec<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "white noise contains non-finite values".into(),
        ));
    }
    let y = all_pole(&filter.coefficients, z);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unstable(filter.order));
    }
    let target = std_dev(z);
    let actual = std_dev(&y);
    if actual == 0.0 || target == 0.0 {
        return Ok(y);
    }
    let gain = target / actual;
    Ok(y.into_iter().map(|v| v * gain).collect())
}

/// Magnitude of the white-noise input relative to the forecast's std.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScaleRule {
    /// sqrt(2 * std)
    Sqrt2Std,
    /// sqrt(std)
    SqrtStd,
    /// 2 * std
    TwoStd,
    /// std^2
    StdSquared,
    Std,
    /// Fixed magnitude independent of the forecast.
    Absolute(f64),
}

impl ScaleRule {
    pub const GRID: [ScaleRule; 5] = [
        ScaleRule::Sqrt2Std,
        ScaleRule::SqrtStd,
        ScaleRule::TwoStd,
        ScaleRule::StdSquared,
        ScaleRule::Std,
    ];

    pub fn sigma(self, std: f64) -> f64 {
        match self {
            ScaleRule::Sqrt2Std => (2.0 * std).sqrt(),
            ScaleRule::SqrtStd => std.sqrt(),
            ScaleRule::TwoStd => 2.0 * std,
            ScaleRule::StdSquared => std * std,
            ScaleRule::Std => std,
            ScaleRule::Absolute(v) => v,
        }
    }
}

impl fmt::Display for ScaleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleRule::Sqrt2Std => f.write_str("sqrt2std"),
            ScaleRule::SqrtStd => f.write_str("sqrtstd"),
            ScaleRule::TwoStd => f.write_str("2std"),
            ScaleRule::StdSquared => f.write_str("std2"),
            ScaleRule::Std => f.write_str("std"),
            ScaleRule::Absolute(v) => write!(f, "abs{v}"),
        }
    }
}

impl From<ScaleRule> for String {
    fn from(rule: ScaleRule) -> String {
        rule.to_string()
    }
}

impl TryFrom<String> for ScaleRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ScaleRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt2std" => Ok(ScaleRule::Sqrt2Std),
            "sqrtstd" => Ok(ScaleRule::SqrtStd),
            "2std" => Ok(ScaleRule::TwoStd),
            "std2" => Ok(ScaleRule::StdSquared),
            "std" => Ok(ScaleRule::Std),
            other => match other.strip_prefix("abs").map(str::parse::<f64>) {
                Some(Ok(v)) if v >= 0.0 && v.is_finite() => Ok(ScaleRule::Absolute(v)),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown noise scale `{other}` (expected sqrt2std, sqrtstd, 2std, std2 or std)"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub scale_rule: ScaleRule,
    pub tau: f64,
    pub max_order: usize,
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            scale_rule: ScaleRule::TwoStd,
            tau: 0.5,
            max_order: 8,
            max_retries: 50,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.05..=0.95).contains(&self.tau) {
            return Err(Error::InvalidArgument(format!(
                "correlation threshold {} outside [0.05, 0.95]",
                self.tau
            )));
        }
        if self.max_order == 0 {
            return Err(Error::InvalidArgument("max order must be positive".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidArgument(
                "max retries must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseStatus {
    /// Correlation with the forecast reached the threshold.
    Accepted,
    /// Every order exhausted its retries; the best draw was kept.
    BelowThreshold,
    /// The configured magnitude is zero; no noise was added.
    ZeroScale,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatedNoise {
    pub noise: Vec<f64>,
    pub achieved_correlation: f64,
    pub order_used: usize,
    pub draws: usize,
    pub sigma: f64,
    pub status: NoiseStatus,
}

/// Searches orders 1..=max_order, drawing up to `max_retries` shaped noise
/// vectors per order, and returns the first whose Pearson correlation with
/// the forecast is at least `tau`. Each draw is centered and rescaled to the
/// configured magnitude before it is scored.
pub fn generate_correlated_noise(forecast: &[f64], cfg: &NoiseConfig) -> Result<CorrelatedNoise> {
    let n = forecast.len();
    if n < cfg.max_order + 2 {
        return Err(Error::TooShort {
            needed: cfg.max_order + 2,
            got: n,
        });
    }
    if cfg.max_order == 0 || cfg.max_retries == 0 {
        return Err(Error::InvalidArgument(
            "max order and max retries must be positive".into(),
        ));
    }
    let std = std_dev(forecast);
    if !(std > 0.0) {
        return Err(Error::DegenerateSeries("forecast has zero variance"));
    }
    let sigma = cfg.scale_rule.sigma(std);
    if sigma == 0.0 {
        return Ok(CorrelatedNoise {
            noise: vec![0.0; n],
            achieved_correlation: 0.0,
            order_used: 0,
            draws: 0,
            sigma,
            status: NoiseStatus::ZeroScale,
        });
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = autocorr(forecast, cfg.max_order)?;

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut draws = 0;
    let mut any_filter = false;
    for order in 1..=cfg.max_order {
        let filter = match lp_coefficients(&r, order) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("order {order} skipped: {e}");
                continue;
            }
        };
        any_filter = true;
        for _ in 0..cfg.max_retries {
            draws += 1;
            let z: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let shaped = match shape_noise(&filter, &z) {
                Ok(s) => s,
                Err(Error::Unstable(_)) => break,
                Err(e) => return Err(e),
            };
            let m = mean(&shaped);
            let s = std_dev(&shaped);
            let noise: Vec<f64> = if s > 0.0 {
                shaped.iter().map(|v| (v - m) * (sigma / s)).collect()
            } else {
                shaped.iter().map(|v| v - m).collect()
            };
            let corr = pearson(&noise, forecast);
            if corr >= cfg.tau {
                return Ok(CorrelatedNoise {
                    noise,
                    achieved_correlation: corr,
                    order_used: order,
                    draws,
                    sigma,
                    status: NoiseStatus::Accepted,
                });
            }
            if corr.is_finite() && best.as_ref().is_none_or(|(c, _, _)| corr > *c) {
                best = Some((corr, order, noise));
            }
        }
    }
    if !any_filter {
        return Err(Error::Singular {
            order: cfg.max_order,
            reflection: f64::NAN,
        });
    }
    let (corr, order, noise) = best.ok_or(Error::DegenerateSeries("no finite noise draw"))?;
    Ok(CorrelatedNoise {
        noise,
        achieved_correlation: corr,
        order_used: order,
        draws,
        sigma,
        status: NoiseStatus::BelowThreshold,
    })
}

pub fn add_noise(forecast: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if forecast.len() != noise.len() {
        return Err(Error::LengthMismatch {
            left: forecast.len(),
            right: noise.len(),
        });
    }
    Ok(forecast.iter().zip(noise).map(|(x, z)| x + z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorr_is_normalized() {
        let r = autocorr(&[1.0, 3.0, 2.0, 5.0, 4.0], 3).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(autocorr(&[2.0; 6], 2).is_err());
        assert!(autocorr(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn alternating_series_has_lag_one_near_minus_one() {
        let n = 1000;
        let x: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = autocorr(&x, 1).unwrap();
        // mean is 0, c0 = n, c1 = -(n-1)
        assert!((r[1] - (-(n as f64 - 1.0) / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn white_autocorr_gives_zero_filter() {
        let f = lp_coefficients(&[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(f.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn ar1_shape() {
        let rho: f64 = 0.6;
        let r: Vec<f64> = (0..3).map(|k| rho.powi(k)).collect();
        let f1 = lp_coefficients(&r, 1).unwrap();
        assert!((f1.coefficients[0] - rho).abs() < 1e-15);
        let f2 = lp_coefficients(&r, 2).unwrap();
        assert!((f2.coefficients[0] - rho).abs() < 1e-12);
        assert!(f2.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        assert!(matches!(
            lp_coefficients(&[1.0, 1.0, 1.0], 2),
            Err(Error::Singular { order: 1, .. })
        ));
        assert!(lp_coefficients(&[1.0], 1).is_err());
        assert!(lp_coefficients(&[1.0, 0.5], 0).is_err());
    }

    #[test]
    fn zero_filter_passes_noise_through() {
        let f = LpFilter {
            order: 2,
            coefficients: vec![0.0, 0.0],
            source_autocorr: vec![1.0, 0.0, 0.0],
        };
        let z = vec![0.3, -1.2, 0.8, 0.1, -0.4];
        assert_eq!(shape_noise(&f, &z).unwrap(), z);
    }

    #[test]
    fn impulse_response_of_ar1() {
        let y = all_pole(&[0.9], &[1.0, 0.0, 0.0, 0.0]);
        let expected = [1.0, 0.9, 0.81, 0.729];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unstable_filter_is_detected() {
        let f = LpFilter {
            order: 1,
            coefficients: vec![1e200],
            source_autocorr: vec![1.0, 0.5],
        };
        let z = vec![1.0; 8];
        assert!(matches!(shape_noise(&f, &z), Err(Error::Unstable(1))));
    }

    #[test]
    fn add_noise_is_elementwise() {
        assert_eq!(
            add_noise(&[1.0, 2.0], &[0.5, -0.5]).unwrap(),
            vec![1.5, 1.5]
        );
        assert_eq!(add_noise(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert!(add_noise(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scale_rules() {
        assert_eq!(ScaleRule::TwoStd.sigma(0.25), 0.5);
        assert_eq!(ScaleRule::StdSquared.sigma(0.5), 0.25);
        assert_eq!(ScaleRule::SqrtStd.sigma(0.25), 0.5);
        assert_eq!(ScaleRule::Sqrt2Std.sigma(0.5), 1.0);
        for rule in ScaleRule::GRID {
            assert_eq!(rule.to_string().parse::<ScaleRule>().unwrap(), rule);
        }
        assert!("3std".parse::<ScaleRule>().is_err());
    }

    #[test]
    fn unconditional_threshold_accepts_first_draw() {
        let forecast: Vec<f64> = (0..64).map(|t| (t as f64 * 0.2).sin()).collect();
        let cfg = NoiseConfig {
            tau: -1.0,
            ..Default::default()
        };
        let out = generate_correlated_noise(&forecast, &cfg).unwrap();
        assert_eq!(out.status, NoiseStatus::Accepted);
        assert_eq!(out.draws, 1);
        assert_eq!(out.order_used, 1);
    }

    #[test]
    fn zero_scale_yields_zero_noise() {
        let forecast: Vec<f64> = (0..32).map(|t| t as f64).collect();
        let cfg = NoiseConfig {
            scale_rule: ScaleRule::Absolute(0.0),
            ..Default::default()
        };
        let out = generate_correlated_noise(&forecast, &cfg).unwrap();
        assert_eq!(out.status, NoiseStatus::ZeroScale);
        assert!(out.noise.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_forecast_is_an_error() {
        assert!(generate_correlated_noise(&[0.5; 32], &NoiseConfig::default()).is_err());
        assert!(generate_correlated_noise(&[0.5, 1.0], &NoiseConfig::default()).is_err());
    }
}
