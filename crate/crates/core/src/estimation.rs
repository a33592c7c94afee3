//! Conditional maximum likelihood fitting, standard errors and Wald tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{information_criteria, quantile_residuals, InformationCriteria};
use crate::error::{KarmaError, Result};
use crate::inference::{fisher, loglik_and_score, score_and_fisher};
use crate::link::{std_normal_cdf, std_normal_quantile};
use crate::model::{check_inputs, filter, prepare, KarmaSpec, ParamVector, SeriesData};
use crate::optim::{minimize, BfgsOptions, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Tolerance on `max |U(γ)|`, the score in the original parameters.
    pub gtol: f64,
    pub max_iter: usize,
    pub precision_start: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gtol: 1e-6,
            max_iter: 500,
            precision_start: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: KarmaSpec,
    pub estimates: ParamVector,
    pub start: ParamVector,
    /// Inverse Fisher information at the estimates; NaN when the
    /// information is not positive definite.
    pub vcov: Vec<Vec<f64>>,
    pub fisher_singular: bool,
    pub loglik_hat: f64,
    pub loglik_start: f64,
    pub std_errors: Vec<f64>,
    pub z_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub evaluations: usize,
    pub max_abs_score: f64,
    pub n: usize,
    pub n_eff: usize,
    /// Fitted medians on `(0, 1)` for `t = m+1, …, n`.
    pub fitted_mu: Vec<f64>,
    pub residuals_quantile: Vec<f64>,
    pub criteria: InformationCriteria,
}

impl FitResult {
    pub fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    /// Fitted medians on the `(a, b)` scale.
    pub fn fitted_median(&self) -> Vec<f64> {
        self.fitted_mu.iter().map(|&mu| self.spec.bounds.unscale(mu)).collect()
    }
}

/// Ordinary least squares starting values.
///
/// Regresses `g(y_t)`, `t > m`, on an intercept, `x_t` and
/// `g(y_{t−1}), …, g(y_{t−p})`. MA coefficients start at zero. A
/// rank-deficient design falls back to `α = g(median)` with the other
/// coefficients zero.
pub fn init_params(spec: &KarmaSpec, data: &SeriesData, precision_start: f64) -> Result<ParamVector> {
    let s = spec.n_params();
    let m = spec.max_lag();
    let n = data.len();
    if n <= m + s {
        return Err(KarmaError::SeriesTooShort { n, needed: m + s + 1 });
    }
    if !(precision_start > 0.0 && precision_start.is_finite()) {
        return Err(KarmaError::InvalidParams(format!(
            "precision start must be positive, got {precision_start}"
        )));
    }
    if spec.r > 0 && data.covariate_count() != spec.r {
        return Err(KarmaError::Dimension(format!(
            "model has {} covariates, data has {}",
            spec.r,
            data.covariate_count()
        )));
    }
    let prep = prepare(spec, &vec![0.0; spec.r], data)?;
    let (r, p) = (spec.r, spec.p);
    let cols = 1 + r + p;
    let rows = n - m;
    let x = data.covariates();
    let design = DMatrix::from_fn(rows, cols, |i, j| {
        let t = m + i;
        match j {
            0 => 1.0,
            j if j <= r => x[t][j - 1],
            j => prep.gy[t - (j - r)],
        }
    });
    let response = DVector::from_iterator(rows, prep.gy[m..].iter().copied());
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.rank(max_sv * 1e-10);
    let coef = if rank == cols {
        svd.solve(&response, max_sv * 1e-10).ok()
    } else {
        None
    };
    let fallback = || {
        let mut y: Vec<f64> = prep.y.clone();
        y.sort_by(f64::total_cmp);
        let k = y.len();
        let median = if k % 2 == 1 { y[k / 2] } else { 0.5 * (y[k / 2 - 1] + y[k / 2]) };
        spec.link
            .apply(median)
            .map(|alpha| ParamVector::new(alpha, vec![0.0; r], vec![0.0; p], vec![0.0; spec.q], precision_start))
    };
    let params = match coef {
        Some(c) if c.iter().all(|v| v.is_finite()) => ParamVector::new(
            c[0],
            c.rows(1, r).iter().copied().collect(),
            c.rows(1 + r, p).iter().copied().collect(),
            vec![0.0; spec.q],
            precision_start,
        ),
        _ => return fallback(),
    };
    // an explosive OLS start can saturate the median recursion
    match loglik_and_score(spec, &params, data)?.0 {
        ll if ll.is_finite() => Ok(params),
        _ => fallback(),
    }
}

/// Internal coordinates: `(α, β, φ, θ, log precision)`.
fn to_internal(params: &ParamVector) -> Vec<f64> {
    let mut z = params.to_vec();
    let last = z.len() - 1;
    z[last] = z[last].ln();
    z
}

fn from_internal(spec: &KarmaSpec, z: &[f64]) -> Result<ParamVector> {
    let mut v = z.to_vec();
    let last = v.len() - 1;
    v[last] = v[last].exp();
    ParamVector::from_slice(spec, &v)
}

/// Inverse of `JᵀKJ`, the expected Hessian of `−ℓ` in internal coordinates.
fn initial_inverse_hessian(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Option<DMatrix<f64>> {
    let k = fisher(spec, params, data).ok()?;
    let s = k.dim();
    let mut jac = DVector::from_element(s, 1.0);
    jac[s - 1] = params.precision;
    let scaled = DMatrix::from_fn(s, s, |i, j| k.matrix[(i, j)] * jac[i] * jac[j]);
    if scaled.iter().any(|v| !v.is_finite()) {
        return None;
    }
    scaled.cholesky().map(|c| c.inverse())
}

/// Maximises the conditional log-likelihood by BFGS on the analytic score.
///
/// The precision is optimised on the log scale. Trial points that drive a
/// median onto the clamp boundary have log-likelihood `−∞`. A fit that does
/// not reach `max |U| < gtol` within `max_iter` iterations is returned with
/// `converged = false`.
pub fn fit(spec: &KarmaSpec, data: &SeriesData, options: &FitOptions) -> Result<FitResult> {
    let start = init_params(spec, data, options.precision_start)?;
    check_inputs(spec, &start, data)?;
    let loglik_start = loglik_and_score(spec, &start, data)?.0;
    let h0 = initial_inverse_hessian(spec, &start, data);
    let objective = |z: &[f64]| -> (f64, Vec<f64>) {
        let infeasible = (f64::INFINITY, vec![0.0; z.len()]);
        let Ok(params) = from_internal(spec, z) else {
            return infeasible;
        };
        match loglik_and_score(spec, &params, data) {
            Ok((ll, Some(u))) if ll.is_finite() => {
                let mut g: Vec<f64> = u.0.iter().map(|v| -v).collect();
                let last = g.len() - 1;
                g[last] *= params.precision;
                (-ll, g)
            }
            _ => infeasible,
        }
    };
    // convergence is judged on the score in the original parameters
    let stationarity = |z: &[f64], g: &[f64]| {
        let last = g.len() - 1;
        g.iter()
            .enumerate()
            .map(|(i, v)| if i == last { (v / z[last].exp()).abs() } else { v.abs() })
            .fold(0.0, f64::max)
    };
    let bfgs = BfgsOptions {
        gtol: options.gtol,
        max_iter: options.max_iter,
    };
    let out = minimize(objective, &to_internal(&start), h0, &bfgs, stationarity);
    let estimates = from_internal(spec, &out.x)?;
    assemble(spec, data, start, loglik_start, estimates, &out)
}

fn assemble(
    spec: &KarmaSpec,
    data: &SeriesData,
    start: ParamVector,
    loglik_start: f64,
    estimates: ParamVector,
    out: &crate::optim::BfgsOutcome,
) -> Result<FitResult> {
    let s = spec.n_params();
    let (ll, _) = loglik_and_score(spec, &estimates, data)?;
    let (u, k) = score_and_fisher(spec, &estimates, data)?;
    let (vcov, singular) = match k.inverse() {
        Ok(inv) => (inv, false),
        Err(_) => (DMatrix::from_element(s, s, f64::NAN), true),
    };
    let values = estimates.to_vec();
    let std_errors: Vec<f64> = (0..s).map(|i| vcov[(i, i)].sqrt()).collect();
    let z_stats: Vec<f64> = values.iter().zip(&std_errors).map(|(v, se)| v / se).collect();
    let p_values = z_stats.iter().map(|&z| two_sided_p(z)).collect();
    let filt = filter(spec, &estimates, data)?;
    let fitted_mu = filt.fitted_mu().to_vec();
    let residuals_quantile = quantile_residuals(spec, estimates.precision, &fitted_mu, data)?;
    let n_eff = data.len() - spec.max_lag();
    let criteria = information_criteria(ll, s, n_eff)?;
    let termination = match out.termination {
        Termination::Gradient => "gradient",
        Termination::MaxIter => "max_iter",
        Termination::LineSearchFailed => "line_search_failed",
        Termination::InfeasibleStart => "infeasible_start",
    };
    Ok(FitResult {
        spec: *spec,
        estimates,
        start,
        vcov: (0..s).map(|i| (0..s).map(|j| vcov[(i, j)]).collect()).collect(),
        fisher_singular: singular,
        loglik_hat: ll,
        loglik_start,
        std_errors,
        z_stats,
        p_values,
        converged: out.converged(),
        termination: termination.to_string(),
        iterations: out.iterations,
        evaluations: out.evaluations,
        max_abs_score: u.max_abs(),
        n: data.len(),
        n_eff,
        fitted_mu,
        residuals_quantile,
        criteria,
    })
}

fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * std_normal_cdf(-z.abs())).min(1.0)
}

/// `γ̂ᵢ ± z_{1−(1−level)/2} · SEᵢ` for every parameter.
pub fn confidence_intervals(fit: &FitResult, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(KarmaError::Domain(format!("confidence level must lie in (0,1), got {level}")));
    }
    let z = std_normal_quantile(0.5 + 0.5 * level);
    Ok(fit
        .estimates
        .to_vec()
        .iter()
        .zip(&fit.std_errors)
        .map(|(v, se)| (v - z * se, v + z * se))
        .collect())
}

/// Signed square root of the Wald statistic for `H₀: γᵢ = null_value` and
/// its two-sided p-value.
pub fn wald_z(fit: &FitResult, index: usize, null_value: f64) -> Result<(f64, f64)> {
    let values = fit.estimates.to_vec();
    if index >= values.len() {
        return Err(KarmaError::Dimension(format!(
            "parameter index {index} out of range for {} parameters",
            values.len()
        )));
    }
    let diff = values[index] - null_value;
    let z = if diff == 0.0 { 0.0 } else { diff / fit.std_errors[index] };
    Ok((z, two_sided_p(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{loglik, score};
    use crate::kuma::Bounds;
    use crate::link::LinkFunction;
    use crate::model::simulate;

    fn karma11() -> (KarmaSpec, ParamVector) {
        (KarmaSpec::arma(1, 1), ParamVector::new(-1.0, vec![], vec![-0.5], vec![0.25], 10.0))
    }

    #[test]
    fn intercept_only_start_is_mean_of_link() {
        let spec = KarmaSpec::arma(0, 0);
        let data = SeriesData::univariate(vec![0.2, 0.35, 0.5, 0.41, 0.63, 0.28]);
        let start = init_params(&spec, &data, 3.0).unwrap();
        let mean: f64 = data.y_tilde().iter().map(|&y| LinkFunction::Logit.apply(y).unwrap()).sum::<f64>() / 6.0;
        assert!((start.alpha - mean).abs() < 1e-12);
        assert_eq!(start.precision, 3.0);
    }

    #[test]
    fn ar1_start_matches_simple_regression() {
        let spec = KarmaSpec::arma(1, 1);
        let y = [0.31, 0.47, 0.62, 0.55, 0.38, 0.44, 0.52, 0.29, 0.36, 0.58];
        let data = SeriesData::univariate(y.to_vec());
        let start = init_params(&spec, &data, 3.0).unwrap();
        let g: Vec<f64> = y.iter().map(|&v| (v / (1.0 - v)).ln()).collect();
        let (xs, ys) = (&g[..9], &g[1..]);
        let k = 9.0;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((start.ar[0] - slope).abs() < 1e-12);
        assert!((start.alpha - (my - slope * mx)).abs() < 1e-12);
        assert_eq!(start.ma, vec![0.0]);
    }

    #[test]
    fn rank_deficient_design_falls_back_to_median() {
        let spec = KarmaSpec::new(0, 0, 1, LinkFunction::Logit, Bounds::unit());
        let y = vec![0.2, 0.3, 0.6, 0.5, 0.4];
        let data = SeriesData::new(y, vec![vec![1.0]; 5]).unwrap();
        let start = init_params(&spec, &data, 3.0).unwrap();
        assert!((start.alpha - LinkFunction::Logit.apply(0.4).unwrap()).abs() < 1e-12);
        assert_eq!(start.beta, vec![0.0]);
    }

    #[test]
    fn short_series_rejected() {
        let spec = KarmaSpec::arma(1, 1);
        let data = SeriesData::univariate(vec![0.3, 0.4, 0.5, 0.6]);
        assert!(matches!(fit(&spec, &data, &FitOptions::default()), Err(KarmaError::SeriesTooShort { .. })));
    }

    #[test]
    fn fit_reaches_a_stationary_point() {
        let (spec, truth) = karma11();
        let data = simulate(&spec, &truth, 300, &[], 11).unwrap();
        let fit = fit(&spec, &data, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.termination);
        assert!(fit.max_abs_score < 1e-6);
        assert!(fit.loglik_hat >= fit.loglik_start);
        assert!(!fit.fisher_singular);
        assert!(fit.std_errors.iter().all(|&se| se > 0.0));
        assert!(fit.p_values.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let u = score(&spec, &fit.estimates, &data).unwrap();
        assert!(u.max_abs() < 1e-6);
        assert!((loglik(&spec, &fit.estimates, &data).unwrap() - fit.loglik_hat).abs() < 1e-12);
        assert_eq!(fit.residuals_quantile.len(), 299);
    }

    #[test]
    fn intervals_and_wald_statistics() {
        let (spec, truth) = karma11();
        let data = simulate(&spec, &truth, 200, &[], 5).unwrap();
        let fit = fit(&spec, &data, &FitOptions::default()).unwrap();
        let ci = confidence_intervals(&fit, 0.95).unwrap();
        for (i, (lo, hi)) in ci.iter().enumerate() {
            let est = fit.estimates.to_vec()[i];
            assert!(*lo < est && est < *hi);
            assert!(((hi - lo) / 2.0 - 1.959_964 * fit.std_errors[i]).abs() < 1e-6 * fit.std_errors[i]);
        }
        let (z, p) = wald_z(&fit, 1, fit.estimates.ar[0]).unwrap();
        assert_eq!((z, p), (0.0, 1.0));
        let (z, _) = wald_z(&fit, 0, 0.0).unwrap();
        assert!((z - fit.z_stats[0]).abs() < 1e-12);
        assert!(wald_z(&fit, 9, 0.0).is_err());
        assert!(confidence_intervals(&fit, 1.0).is_err());
    }

    #[test]
    fn bounds_do_not_change_the_estimates() {
        let (spec, truth) = karma11();
        let unit = simulate(&spec, &truth, 200, &[], 21).unwrap();
        let bounds = Bounds::new(10.0, 30.0).unwrap();
        let scaled = SeriesData::univariate(unit.y_tilde().iter().map(|&y| bounds.unscale(y)).collect());
        let scaled_spec = KarmaSpec::new(1, 1, 0, LinkFunction::Logit, bounds);
        let a = fit(&spec, &unit, &FitOptions::default()).unwrap();
        let b = fit(&scaled_spec, &scaled, &FitOptions::default()).unwrap();
        for (x, y) in a.estimates.to_vec().iter().zip(b.estimates.to_vec()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        let shift = 199.0 * 20.0_f64.ln();
        assert!((a.loglik_hat - (b.loglik_hat + shift)).abs() < 1e-6);
    }
}
