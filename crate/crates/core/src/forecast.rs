//! Out-of-sample forecasts of the conditional median.
//!
//! In-sample errors `r̂_t` come from the fitted recursion. Beyond the end of
//! the series the errors are zero and `g(y_t)` is replaced by `g(μ̂_t)`.

use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::estimation::FitResult;
use crate::model::{check_inputs, covariate_effects, linear_predictor, prepare, run_filter, KarmaSpec, ParamVector, SeriesData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    /// In-sample fitted medians on `(0, 1)` for `t = m+1, …, n`.
    pub fitted_mu: Vec<f64>,
    /// Forecast medians on `(0, 1)`.
    pub mu_hat_future: Vec<f64>,
    /// Forecast medians on `(a, b)`.
    pub y_tilde_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub mse: f64,
    pub mape: f64,
}

/// Holdout accuracy on both scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    /// Observations rescaled to `(0, 1)` against `μ̂`.
    pub rescaled: HoldoutMetrics,
    /// Observations on `(a, b)` against `ỹ̂`.
    pub original: HoldoutMetrics,
}

/// `h0`-step forecasts from the end of `data`.
///
/// `x_future` holds the covariates for `t = n+1, …, n+h0` and may be empty
/// for models without regressors.
pub fn forecast(
    spec: &KarmaSpec,
    params: &ParamVector,
    data: &SeriesData,
    x_future: &[Vec<f64>],
    h0: usize,
) -> Result<ForecastResult> {
    check_inputs(spec, params, data)?;
    if spec.r > 0 && (x_future.len() < h0 || x_future.iter().take(h0).any(|row| row.len() != spec.r)) {
        return Err(KarmaError::Dimension(format!(
            "forecasting {h0} steps needs {h0} future covariate rows of width {}",
            spec.r
        )));
    }
    let prep = prepare(spec, &params.beta, data)?;
    let filt = run_filter(spec, params, &prep)?;
    let n = data.len();
    let mut gy = prep.gy.clone();
    let mut xb = prep.xb.clone();
    let mut r_err = filt.r_err.clone();
    if spec.r > 0 {
        xb.extend(covariate_effects(spec, &params.beta, &x_future[..h0]));
    } else {
        xb.extend(std::iter::repeat_n(0.0, h0));
    }
    let mut mu_hat_future = Vec::with_capacity(h0);
    for t in n..n + h0 {
        let eta = linear_predictor(params, t, &gy, &xb, &r_err);
        let mu = spec.link.inverse(eta);
        gy.push(spec.link.apply(mu)?);
        r_err.push(0.0);
        mu_hat_future.push(mu);
    }
    let y_tilde_hat = mu_hat_future.iter().map(|&mu| spec.bounds.unscale(mu)).collect();
    Ok(ForecastResult {
        horizon: h0,
        fitted_mu: filt.fitted_mu().to_vec(),
        mu_hat_future,
        y_tilde_hat,
    })
}

impl FitResult {
    pub fn forecast(&self, data: &SeriesData, x_future: &[Vec<f64>], h0: usize) -> Result<ForecastResult> {
        forecast(&self.spec, &self.estimates, data, x_future, h0)
    }
}

/// `MSE = mean((y − ŷ)²)`, `MAPE = mean(|y − ŷ|/|y|)` as a proportion.
pub fn holdout_metrics(y_actual: &[f64], y_hat: &[f64]) -> Result<HoldoutMetrics> {
    if y_actual.len() != y_hat.len() || y_actual.is_empty() {
        return Err(KarmaError::Dimension(format!(
            "{} actual values against {} forecasts",
            y_actual.len(),
            y_hat.len()
        )));
    }
    if y_actual.contains(&0.0) {
        return Err(KarmaError::Domain("MAPE is undefined for a zero actual value".into()));
    }
    let k = y_actual.len() as f64;
    let mse = y_actual.iter().zip(y_hat).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / k;
    let mape = y_actual.iter().zip(y_hat).map(|(y, f)| ((y - f) / y).abs()).sum::<f64>() / k;
    Ok(HoldoutMetrics { mse, mape })
}

impl ForecastResult {
    /// Compares the forecasts with held-out observations on `(a, b)`.
    pub fn evaluate(&self, spec: &KarmaSpec, holdout: &[f64]) -> Result<HoldoutReport> {
        let k = holdout.len().min(self.horizon);
        let rescaled: Vec<f64> = holdout[..k].iter().map(|&y| spec.bounds.rescale(y)).collect();
        Ok(HoldoutReport {
            rescaled: holdout_metrics(&rescaled, &self.mu_hat_future[..k])?,
            original: holdout_metrics(&holdout[..k], &self.y_tilde_hat[..k])?,
        })
    }
}
