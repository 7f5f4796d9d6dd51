//! Augmented Dickey-Fuller unit-root test and the one-parameter Box-Cox
//! transform used to stabilize non-stationary series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADF_MIN_LEN: usize = 12;
pub const LAMBDA_MIN: f64 = -5.0;
pub const LAMBDA_MAX: f64 = 5.0;
pub const LAMBDA_STEP: f64 = 0.1;
/// |lambda| below this is treated as the logarithmic case.
pub const LAMBDA_ZERO: f64 = 1e-12;

/// MacKinnon (2010) response-surface coefficients, constant-only regression,
/// 5% level: cv(T) = b0 + b1/T + b2/T^2 + b3/T^3.
const MACKINNON_C_5PCT: [f64; 4] = [-2.86154, -2.8903, -4.234, -40.040];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub critical_value_5pct: f64,
    pub lags: usize,
    pub nobs: usize,
    pub stationary: bool,
}

/// Schwert lag rule, capped so the regression keeps at least one residual
/// degree of freedom.
pub fn schwert_lags(n: usize) -> usize {
    let p = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    p.min(n.saturating_sub(4) / 2)
}

pub fn mackinnon_critical_5pct(nobs: usize) -> f64 {
    let t = nobs as f64;
    let [b0, b1, b2, b3] = MACKINNON_C_5PCT;
    b0 + b1 / t + b2 / (t * t) + b3 / (t * t * t)
}

/// ADF with a constant and no trend:
/// dy_t = c + g * y_{t-1} + sum_i d_i * dy_{t-i} + e_t, testing g = 0.
pub fn adf_test(x: &[f64]) -> Result<AdfResult> {
    let n = x.len();
    if n < ADF_MIN_LEN {
        return Err(Error::TooShort {
            needed: ADF_MIN_LEN,
            got: n,
        });
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(Error::DegenerateSeries(
            "constant series has no unit-root test",
        ));
    }
    let p = schwert_lags(n);
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // rows t = p..dx.len(): dep dx[t], regressors 1, x[t], dx[t-1..t-p]
    let nobs = dx.len() - p;
    let k = p + 2;
    let design = DMatrix::from_fn(nobs, k, |r, c| {
        let t = r + p;
        match c {
            0 => 1.0,
            1 => x[t],
            lag => dx[t - (lag - 1)],
        }
    });
    let y = DVector::from_iterator(nobs, (p..dx.len()).map(|t| dx[t]));

    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &y;
    let chol = xtx
        .cholesky()
        .ok_or(Error::DegenerateSeries("ADF regression is rank deficient"))?;
    let beta = chol.solve(&xty);
    let resid = &y - &design * &beta;
    let dof = (nobs - k) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let inv = chol.inverse();
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let statistic = beta[1] / se;
    if !statistic.is_finite() {
        return Err(Error::DegenerateSeries("ADF statistic is not finite"));
    }
    let critical = mackinnon_critical_5pct(nobs);
    Ok(AdfResult {
        statistic,
        critical_value_5pct: critical,
        lags: p,
        nobs,
        stationary: statistic < critical,
    })
}

fn check_positive(y: &[f64]) -> Result<()> {
    match y.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::Domain {
            index,
            value: y[index],
        }),
        None => Ok(()),
    }
}

fn transform_one(y: f64, lambda: f64) -> f64 {
    if lambda.abs() < LAMBDA_ZERO {
        y.ln()
    } else {
        (y.powf(lambda) - 1.0) / lambda
    }
}

pub fn box_cox(y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_positive(y)?;
    Ok(y.iter().map(|&v| transform_one(v, lambda)).collect())
}

pub fn inverse_box_cox(z: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if lambda.abs() < LAMBDA_ZERO {
        return Ok(z.iter().map(|v| v.exp()).collect());
    }
    z.iter()
        .enumerate()
        .map(|(index, &v)| {
            let base = lambda * v + 1.0;
            if base > 0.0 {
                Ok(base.powf(1.0 / lambda))
            } else {
                Err(Error::Range { index, base })
            }
        })
        .collect()
}

/// Profile log-likelihood of a normal model for the transformed data, plus the
/// Jacobian term (lambda - 1) * sum(ln y).
pub fn box_cox_llf(y: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let z: Vec<f64> = y.iter().map(|&v| transform_one(v, lambda)).collect();
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let log_jacobian: f64 = y.iter().map(|v| v.ln()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * log_jacobian
}

pub fn lambda_grid() -> impl Iterator<Item = f64> {
    let steps = ((LAMBDA_MAX - LAMBDA_MIN) / LAMBDA_STEP).round() as i32;
    (0..=steps).map(|i| ((LAMBDA_MIN + i as f64 * LAMBDA_STEP) * 10.0).round() / 10.0)
}

pub const SELECT_LAMBDA_MIN_LEN: usize = 8;

/// Grid-search maximum-likelihood lambda over [-5, 5] in steps of 0.1; ties
/// resolve toward lambda = 1.
pub fn select_lambda(y: &[f64]) -> Result<f64> {
    check_positive(y)?;
    if y.len() < SELECT_LAMBDA_MIN_LEN {
        return Err(Error::TooShort {
            needed: SELECT_LAMBDA_MIN_LEN,
            got: y.len(),
        });
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi - lo <= 1e-12 * hi {
        return Ok(1.0);
    }
    let mut best_lambda: f64 = 1.0;
    let mut best_llf = f64::NEG_INFINITY;
    for lambda in lambda_grid() {
        let llf = box_cox_llf(y, lambda);
        if !llf.is_finite() {
            continue;
        }
        if !best_llf.is_finite() {
            best_llf = llf;
            best_lambda = lambda;
            continue;
        }
        let tol = 1e-12 * best_llf.abs().max(1.0);
        let better = llf > best_llf + tol;
        let tied =
            (llf - best_llf).abs() <= tol && (lambda - 1.0).abs() < (best_lambda - 1.0).abs();
        if better || tied {
            best_llf = llf;
            best_lambda = lambda;
        }
    }
    Ok(best_lambda)
}

/// Record of the stabilizing transform applied to a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParam {
    pub lambda: f64,
    /// Added before transforming so every input is strictly positive.
    pub shift: f64,
    pub applied: bool,
}

impl BoxCoxParam {
    pub const IDENTITY: BoxCoxParam = BoxCoxParam {
        lambda: 1.0,
        shift: 0.0,
        applied: false,
    };
}

/// ADF gate followed, for non-stationary input, by a shifted Box-Cox transform.
pub fn stabilize(x: &[f64]) -> Result<(Vec<f64>, BoxCoxParam)> {
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot stabilize an empty series".into(),
        ));
    }
    if adf_test(x)?.stationary {
        return Ok((x.to_vec(), BoxCoxParam::IDENTITY));
    }
    Ok(force_box_cox(x))
}

/// Box-Cox with the recorded shift, regardless of the ADF verdict.
pub fn force_box_cox(x: &[f64]) -> (Vec<f64>, BoxCoxParam) {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
    let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
    let lambda = select_lambda(&shifted).unwrap_or(1.0);
    let z = shifted.iter().map(|&v| transform_one(v, lambda)).collect();
    (
        z,
        BoxCoxParam {
            lambda,
            shift,
            applied: true,
        },
    )
}

/// Inverse of [`stabilize`].
pub fn destabilize(z: &[f64], param: &BoxCoxParam) -> Result<Vec<f64>> {
    if !param.applied {
        return Ok(z.to_vec());
    }
    let y = inverse_box_cox(z, param.lambda)?;
    Ok(y.into_iter().map(|v| v - param.shift).collect())
}
