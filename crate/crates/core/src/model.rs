//! KARMA(p, q) structure: the linear-predictor recursion for the conditional
//! median and the inversion-based simulator.
//!
//! With `m = max(p, q)` and `t = m+1, …, n`,
//!
//! ```text
//! η_t = α + x_tᵀβ + Σ_i φ_i [g(y_{t−i}) − x_{t−i}ᵀβ] + Σ_j θ_j r_{t−j}
//! μ_t = g⁻¹(η_t),   r_t = g(y_t) − g(μ_t)
//! ```
//!
//! The error terms `r_t` of the first `m` observations are set to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::kuma::{open_unit, Bounds, KumaDist, EPS};
use crate::link::LinkFunction;

/// Model structure: orders, covariate count, link and support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarmaSpec {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub link: LinkFunction,
    pub bounds: Bounds,
}

impl KarmaSpec {
    pub fn new(p: usize, q: usize, r: usize, link: LinkFunction, bounds: Bounds) -> Self {
        KarmaSpec {
            p,
            q,
            r,
            link,
            bounds,
        }
    }

    /// KARMA(p, q) on `(0, 1)` with logit link and no covariates.
    pub fn arma(p: usize, q: usize) -> Self {
        Self::new(p, q, 0, LinkFunction::Logit, Bounds::unit())
    }

    /// `m = max(p, q)`.
    pub fn max_lag(&self) -> usize {
        self.p.max(self.q)
    }

    /// `s = p + q + r + 2`.
    pub fn n_params(&self) -> usize {
        self.p + self.q + self.r + 2
    }

    /// Parameter labels in vector order `(α, β, φ, θ, precision)`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["alpha".to_string()];
        names.extend((1..=self.r).map(|i| format!("beta{i}")));
        names.extend((1..=self.p).map(|i| format!("phi{i}")));
        names.extend((1..=self.q).map(|i| format!("theta{i}")));
        names.push("precision".to_string());
        names
    }
}

/// Parameter vector `γ = (α, β, φ, θ, precision)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub precision: f64,
}

impl ParamVector {
    pub fn new(alpha: f64, beta: Vec<f64>, ar: Vec<f64>, ma: Vec<f64>, precision: f64) -> Self {
        ParamVector {
            alpha,
            beta,
            ar,
            ma,
            precision,
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.ar.len() + self.ma.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.ar);
        v.extend_from_slice(&self.ma);
        v.push(self.precision);
        v
    }

    pub fn from_slice(spec: &KarmaSpec, values: &[f64]) -> Result<Self> {
        if values.len() != spec.n_params() {
            return Err(KarmaError::Dimension(format!(
                "expected {} parameters, got {}",
                spec.n_params(),
                values.len()
            )));
        }
        let (r, p, q) = (spec.r, spec.p, spec.q);
        Ok(ParamVector {
            alpha: values[0],
            beta: values[1..1 + r].to_vec(),
            ar: values[1 + r..1 + r + p].to_vec(),
            ma: values[1 + r + p..1 + r + p + q].to_vec(),
            precision: values[1 + r + p + q],
        })
    }

    pub fn validate(&self, spec: &KarmaSpec) -> Result<()> {
        if self.beta.len() != spec.r || self.ar.len() != spec.p || self.ma.len() != spec.q {
            return Err(KarmaError::Dimension(format!(
                "parameter vector has (r, p, q) = ({}, {}, {}), model expects ({}, {}, {})",
                self.beta.len(),
                self.ar.len(),
                self.ma.len(),
                spec.r,
                spec.p,
                spec.q
            )));
        }
        if !(self.precision > 0.0) || !self.precision.is_finite() {
            return Err(KarmaError::InvalidParams(format!(
                "precision must be positive and finite, got {}",
                self.precision
            )));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(KarmaError::InvalidParams("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Observed series on `(a, b)` with its (non-stochastic) covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    y_tilde: Vec<f64>,
    covariates: Vec<Vec<f64>>,
}

impl SeriesData {
    /// `covariates` holds one row per observation; pass an empty vector for
    /// a model without regressors.
    pub fn new(y_tilde: Vec<f64>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        if covariates.is_empty() {
            return Ok(Self::univariate(y_tilde));
        }
        if covariates.len() != y_tilde.len() {
            return Err(KarmaError::Dimension(format!(
                "{} covariate rows for {} observations",
                covariates.len(),
                y_tilde.len()
            )));
        }
        let width = covariates[0].len();
        if covariates.iter().any(|row| row.len() != width) {
            return Err(KarmaError::Dimension("ragged covariate rows".into()));
        }
        Ok(SeriesData {
            y_tilde,
            covariates,
        })
    }

    pub fn univariate(y_tilde: Vec<f64>) -> Self {
        let covariates = vec![Vec::new(); y_tilde.len()];
        SeriesData {
            y_tilde,
            covariates,
        }
    }

    pub fn len(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_tilde.is_empty()
    }

    pub fn y_tilde(&self) -> &[f64] {
        &self.y_tilde
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn covariate_count(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }

    /// Splits into the first `k` observations and the rest.
    pub fn split_at(&self, k: usize) -> (SeriesData, SeriesData) {
        let k = k.min(self.len());
        (
            SeriesData {
                y_tilde: self.y_tilde[..k].to_vec(),
                covariates: self.covariates[..k].to_vec(),
            },
            SeriesData {
                y_tilde: self.y_tilde[k..].to_vec(),
                covariates: self.covariates[k..].to_vec(),
            },
        )
    }
}

/// Linear predictor, conditional medians and error terms of a series.
///
/// Entries of `eta` and `mu` before `start` are NaN (not modelled); `r_err`
/// is zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub r_err: Vec<f64>,
    /// `log μ_t` and `dμ_t/dη_t`, taken from `η_t` unless the median was
    /// clamped.
    pub ln_mu: Vec<f64>,
    pub dmu_deta: Vec<f64>,
    /// Index of the first modelled observation (`m`, 0-based).
    pub start: usize,
    /// Number of steps whose median hit the `[ε, 1 − ε]` clamp.
    pub saturated: usize,
}

impl FilterOutput {
    /// Conditional medians for `t = m+1, …, n`.
    pub fn fitted_mu(&self) -> &[f64] {
        &self.mu[self.start..]
    }
}

/// Rescaled, clamped observations and their link transforms.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub y: Vec<f64>,
    pub gy: Vec<f64>,
    pub xb: Vec<f64>,
}

pub(crate) fn rescale_observation(bounds: &Bounds, y_tilde: f64) -> f64 {
    bounds.rescale(y_tilde).clamp(EPS, 1.0 - EPS)
}

pub(crate) fn check_inputs(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<()> {
    params.validate(spec)?;
    let m = spec.max_lag();
    if data.len() <= m {
        return Err(KarmaError::SeriesTooShort {
            n: data.len(),
            needed: m,
        });
    }
    if spec.r > 0 && data.covariate_count() != spec.r {
        return Err(KarmaError::Dimension(format!(
            "model has {} covariates, data has {}",
            spec.r,
            data.covariate_count()
        )));
    }
    Ok(())
}

pub(crate) fn prepare(spec: &KarmaSpec, beta: &[f64], data: &SeriesData) -> Result<Prepared> {
    let bounds = spec.bounds;
    let mut y = Vec::with_capacity(data.len());
    let mut gy = Vec::with_capacity(data.len());
    for (index, &value) in data.y_tilde().iter().enumerate() {
        if !(value >= bounds.lower() && value <= bounds.upper()) {
            return Err(KarmaError::OutOfBounds {
                index,
                value,
                lower: bounds.lower(),
                upper: bounds.upper(),
            });
        }
        let yt = rescale_observation(&bounds, value);
        y.push(yt);
        gy.push(spec.link.apply(yt)?);
    }
    let xb = covariate_effects(spec, beta, data.covariates());
    Ok(Prepared { y, gy, xb })
}

/// `x_tᵀβ` for every row (zeros without covariates).
pub(crate) fn covariate_effects(spec: &KarmaSpec, beta: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    if spec.r == 0 {
        return vec![0.0; rows.len()];
    }
    rows.iter()
        .map(|row| row.iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

/// η_t at 0-based index `t ≥ m`.
pub(crate) fn linear_predictor(params: &ParamVector, t: usize, gy: &[f64], xb: &[f64], r_err: &[f64]) -> f64 {
    let mut eta = params.alpha + xb[t];
    for (i, phi) in params.ar.iter().enumerate() {
        let lag = t - i - 1;
        eta += phi * (gy[lag] - xb[lag]);
    }
    for (j, theta) in params.ma.iter().enumerate() {
        eta += theta * r_err[t - j - 1];
    }
    eta
}

fn is_saturated(eta: f64, mu: f64) -> bool {
    !eta.is_finite() || mu <= EPS || mu >= 1.0 - EPS
}

pub(crate) fn run_filter(spec: &KarmaSpec, params: &ParamVector, prep: &Prepared) -> Result<FilterOutput> {
    let n = prep.y.len();
    let m = spec.max_lag();
    let mut eta = vec![f64::NAN; n];
    let mut mu = vec![f64::NAN; n];
    let mut r_err = vec![0.0; n];
    let mut ln_mu = vec![f64::NAN; n];
    let mut dmu_deta = vec![f64::NAN; n];
    let mut saturated = 0;
    for t in m..n {
        eta[t] = linear_predictor(params, t, &prep.gy, &prep.xb, &r_err);
        mu[t] = spec.link.inverse(eta[t]);
        // g(μ_t) = η_t unless the inverse link was clamped
        if is_saturated(eta[t], mu[t]) {
            saturated += 1;
            r_err[t] = prep.gy[t] - spec.link.apply(mu[t])?;
            ln_mu[t] = mu[t].ln();
            dmu_deta[t] = 1.0 / spec.link.deriv(mu[t])?;
        } else {
            r_err[t] = prep.gy[t] - eta[t];
            ln_mu[t] = spec.link.log_inverse(eta[t]);
            dmu_deta[t] = spec.link.mu_eta(eta[t]);
        }
    }
    Ok(FilterOutput {
        eta,
        mu,
        r_err,
        ln_mu,
        dmu_deta,
        start: m,
        saturated,
    })
}

/// Runs the median recursion over `data` with the given parameters.
pub fn filter(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<FilterOutput> {
    check_inputs(spec, params, data)?;
    let prep = prepare(spec, &params.beta, data)?;
    run_filter(spec, params, &prep)
}

/// Full simulated trajectory including the burn-in segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub y_tilde: Vec<f64>,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
    pub burn_in: usize,
}

impl SimulatedPath {
    /// The whole trajectory as a series (pre-sample and burn-in included).
    pub fn full_series(&self) -> SeriesData {
        SeriesData {
            y_tilde: self.y_tilde.clone(),
            covariates: self.covariates.clone(),
        }
    }

    /// The retained sample after the burn-in.
    pub fn sample(&self) -> SeriesData {
        self.full_series().split_at(self.burn_in).1
    }
}

/// Burn-in length `n₀ = 2m`.
pub fn burn_in_length(spec: &KarmaSpec) -> usize {
    2 * spec.max_lag()
}

/// Simulates `burn_in_length(spec) + n` steps of the process.
///
/// The first `m` steps are pre-sample values with `μ_t = g⁻¹(α)`,
/// `ỹ_t` at that median and `r_t = 0`. `covariates` must have one row per
/// simulated step when the model has regressors and may be empty otherwise.
pub fn simulate_path<R: Rng + ?Sized>(
    spec: &KarmaSpec,
    params: &ParamVector,
    n: usize,
    covariates: &[Vec<f64>],
    rng: &mut R,
) -> Result<SimulatedPath> {
    params.validate(spec)?;
    if n == 0 {
        return Err(KarmaError::InvalidParams("sample size must be at least 1".into()));
    }
    let m = spec.max_lag();
    let burn_in = burn_in_length(spec);
    let total = burn_in + n;
    let rows: Vec<Vec<f64>> = if spec.r == 0 {
        vec![Vec::new(); total]
    } else {
        if covariates.len() != total || covariates.iter().any(|row| row.len() != spec.r) {
            return Err(KarmaError::Dimension(format!(
                "simulation needs {total} covariate rows of width {}",
                spec.r
            )));
        }
        covariates.to_vec()
    };
    let bounds = spec.bounds;
    let xb = covariate_effects(spec, &params.beta, &rows);
    let mut y_tilde = Vec::with_capacity(total);
    let mut gy = Vec::with_capacity(total);
    let mut eta = vec![f64::NAN; total];
    let mut mu = vec![f64::NAN; total];
    let mut r_err = vec![0.0; total];

    let mu0 = spec.link.inverse(params.alpha);
    for t in 0..m.min(total) {
        mu[t] = mu0;
        let obs = bounds.unscale(mu0);
        y_tilde.push(obs);
        gy.push(spec.link.apply(rescale_observation(&bounds, obs))?);
    }
    for t in m..total {
        eta[t] = linear_predictor(params, t, &gy, &xb, &r_err);
        mu[t] = spec.link.inverse(eta[t]);
        let dist = KumaDist::new(mu[t], params.precision, bounds).map_err(|e| {
            KarmaError::InvalidParams(format!("simulated median degenerated at step {t}: {e}"))
        })?;
        let obs = dist.quantile(open_unit(rng))?;
        y_tilde.push(obs);
        let g = spec.link.apply(rescale_observation(&bounds, obs))?;
        gy.push(g);
        r_err[t] = g - spec.link.apply(mu[t])?;
    }
    Ok(SimulatedPath {
        y_tilde,
        mu,
        eta,
        covariates: rows,
        burn_in,
    })
}

/// Simulates a sample of size `n` (after burn-in) from a seeded stream.
pub fn simulate(
    spec: &KarmaSpec,
    params: &ParamVector,
    n: usize,
    covariates: &[Vec<f64>],
    seed: u64,
) -> Result<SeriesData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(simulate_path(spec, params, n, covariates, &mut rng)?.sample())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit(x: f64) -> f64 {
        (x / (1.0 - x)).ln()
    }

    fn expit(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn parameter_vector_round_trip() {
        let spec = KarmaSpec::new(2, 1, 2, LinkFunction::Logit, Bounds::unit());
        let p = ParamVector::new(0.1, vec![0.2, 0.3], vec![0.4, 0.5], vec![0.6], 7.0);
        let v = p.to_vec();
        assert_eq!(v.len(), spec.n_params());
        assert_eq!(ParamVector::from_slice(&spec, &v).unwrap(), p);
        assert_eq!(
            spec.param_names(),
            ["alpha", "beta1", "beta2", "phi1", "phi2", "theta1", "precision"]
        );
        assert!(ParamVector::from_slice(&spec, &v[1..]).is_err());
    }

    #[test]
    fn invalid_precision_rejected() {
        let spec = KarmaSpec::arma(0, 0);
        let p = ParamVector::new(0.0, vec![], vec![], vec![], 0.0);
        assert!(p.validate(&spec).is_err());
        assert!(simulate(&spec, &p, 10, &[], 1).is_err());
    }

    #[test]
    fn constant_predictor_without_dynamics() {
        let spec = KarmaSpec::arma(0, 0);
        let params = ParamVector::new(0.7, vec![], vec![], vec![], 5.0);
        let data = SeriesData::univariate(vec![0.2, 0.5, 0.9, 0.4]);
        let out = filter(&spec, &params, &data).unwrap();
        for t in 0..4 {
            assert_eq!(out.eta[t], 0.7);
            assert!((out.mu[t] - expit(0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn ar1_direct_substitution() {
        let spec = KarmaSpec::arma(1, 0);
        let params = ParamVector::new(-0.3, vec![], vec![0.6], vec![], 5.0);
        let y = vec![0.2, 0.5, 0.9, 0.4];
        let out = filter(&spec, &params, &SeriesData::univariate(y.clone())).unwrap();
        assert!(out.eta[0].is_nan());
        assert_eq!(out.r_err[0], 0.0);
        for t in 1..4 {
            assert!((out.eta[t] - (-0.3 + 0.6 * logit(y[t - 1]))).abs() < 1e-14);
        }
    }

    #[test]
    fn karma11_hand_unrolled() {
        // spreadsheet-style unrolling of η_t = α + φ g(y_{t−1}) + θ r_{t−1}
        let spec = KarmaSpec::arma(1, 1);
        let (alpha, phi, theta) = (0.2, 0.5, -0.4);
        let params = ParamVector::new(alpha, vec![], vec![phi], vec![theta], 9.0);
        let y = [0.31, 0.47, 0.62, 0.55, 0.38, 0.44];
        let out = filter(&spec, &params, &SeriesData::univariate(y.to_vec())).unwrap();

        let mut r = 0.0;
        let mut expected_eta = vec![];
        for t in 1..6 {
            let eta = alpha + phi * logit(y[t - 1]) + theta * r;
            r = logit(y[t]) - logit(expit(eta));
            expected_eta.push(eta);
        }
        // frozen values from the unrolling above
        let frozen = [
            -0.200_059_650_056_056_53,
            0.107_961_708_793_371_07,
            0.292_139_506_049_219,
            0.336_922_871_965_902_9,
            0.285_814_326_254_490_7,
        ];
        for t in 1..6 {
            assert!((out.eta[t] - expected_eta[t - 1]).abs() < 1e-13);
            assert!((out.eta[t] - frozen[t - 1]).abs() < 1e-12, "t={t}: {}", out.eta[t]);
        }
    }

    #[test]
    fn covariate_terms_enter_ar_part() {
        let spec = KarmaSpec::new(1, 0, 1, LinkFunction::Logit, Bounds::unit());
        let params = ParamVector::new(0.1, vec![0.8], vec![0.5], vec![], 5.0);
        let y = vec![0.3, 0.6, 0.4];
        let x = vec![vec![1.0], vec![-0.5], vec![2.0]];
        let out = filter(&spec, &params, &SeriesData::new(y.clone(), x.clone()).unwrap()).unwrap();
        for t in 1..3 {
            let e = 0.1 + 0.8 * x[t][0] + 0.5 * (logit(y[t - 1]) - 0.8 * x[t - 1][0]);
            assert!((out.eta[t] - e).abs() < 1e-14);
        }
    }

    #[test]
    fn errors_on_short_or_out_of_bounds_series() {
        let spec = KarmaSpec::arma(2, 1);
        let params = ParamVector::new(0.0, vec![], vec![0.1, 0.1], vec![0.1], 5.0);
        assert!(matches!(
            filter(&spec, &params, &SeriesData::univariate(vec![0.3, 0.4])),
            Err(KarmaError::SeriesTooShort { .. })
        ));
        assert!(matches!(
            filter(&spec, &params, &SeriesData::univariate(vec![0.3, 0.4, 1.3, 0.5])),
            Err(KarmaError::OutOfBounds { index: 2, .. })
        ));
    }

    #[test]
    fn boundary_observations_are_clamped() {
        let spec = KarmaSpec::arma(1, 0);
        let params = ParamVector::new(0.0, vec![], vec![0.2], vec![], 5.0);
        let out = filter(&spec, &params, &SeriesData::univariate(vec![0.0, 1.0, 0.5])).unwrap();
        assert!(out.eta.iter().skip(1).all(|e| e.is_finite()));
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = KarmaSpec::arma(2, 2);
        let params = ParamVector::new(0.5, vec![], vec![0.5, -0.3], vec![0.4, 0.15], 15.0);
        let a = simulate(&spec, &params, 100, &[], 42).unwrap();
        let b = simulate(&spec, &params, 100, &[], 42).unwrap();
        let c = simulate(&spec, &params, 100, &[], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 100);
        assert!(a.y_tilde().iter().all(|&y| y > 0.0 && y < 1.0));
    }

    #[test]
    fn simulation_draw_is_kumaraswamy_quantile() {
        let spec = KarmaSpec::arma(1, 1);
        let params = ParamVector::new(-1.0, vec![], vec![-0.5], vec![0.25], 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let path = simulate_path(&spec, &params, 20, &[], &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in 1..path.y_tilde.len() {
            let u = open_unit(&mut rng);
            let dist = KumaDist::standard(path.mu[t], 10.0).unwrap();
            assert_eq!(path.y_tilde[t], dist.quantile(u).unwrap());
        }
    }

    #[test]
    fn simulation_needs_covariate_rows() {
        let spec = KarmaSpec::new(1, 0, 1, LinkFunction::Logit, Bounds::unit());
        let params = ParamVector::new(0.0, vec![0.3], vec![0.2], vec![], 5.0);
        assert!(simulate(&spec, &params, 10, &[], 1).is_err());
        let rows = vec![vec![0.5]; 12];
        assert_eq!(simulate(&spec, &params, 10, &rows, 1).unwrap().len(), 10);
    }
}
