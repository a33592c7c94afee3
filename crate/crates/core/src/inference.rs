//! Conditional log-likelihood, analytic score vector and conditional Fisher
//! information of a KARMA(p, q) model.
//!
//! All three share one pass over the series: the median recursion plus the
//! recursions for `∂η_t/∂γ_j`, which start at zero for `t ≤ m`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{KarmaError, Result};
use crate::kuma::{delta_from_mu, PowTerms};
use crate::model::{check_inputs, prepare, run_filter, FilterOutput, KarmaSpec, ParamVector, Prepared, SeriesData};
use crate::quadrature::integrate;
use crate::special::{digamma, trigamma, EULER_GAMMA};

/// `|δ − 1|` or `|δ − 2|` below which the closed-form expectations switch to
/// quadrature of their defining integrals.
pub const POLE_WINDOW: f64 = 1e-6;

/// `k₀ = π²/6 + κ² − 2κ`.
const K0: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0 + EULER_GAMMA * EULER_GAMMA
    - 2.0 * EULER_GAMMA;

/// Score vector ordered `(α, β, φ, θ, precision)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Conditional Fisher information, symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some()
    }

    /// `K⁻¹`, refused when `K` is not positive definite.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        match self.matrix.clone().cholesky() {
            Some(chol) => Ok(chol.inverse()),
            None => Err(KarmaError::Singular(format!(
                "Fisher information is not positive definite (smallest eigenvalue {:.3e})",
                self.min_eigenvalue()
            ))),
        }
    }
}

/// Per-observation quantities entering the score and information, for
/// `t = m+1, …, n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxQuantities {
    pub delta: Vec<f64>,
    pub c: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `E(∂²ℓ_t/∂μ_t² | past) = −φ² λ₂`
    pub w: Vec<f64>,
    /// `E(∂²ℓ_t/∂μ_t∂φ | past)`
    pub d: Vec<f64>,
    /// `E(∂²ℓ_t/∂φ² | past)`
    pub l: Vec<f64>,
}

/// `E[Y^φ log Y / (1 − Y^φ)]` and `E[Y^φ log² Y / (1 − Y^φ)²]` for
/// `Y ~ K(μ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2 {
    pub first: f64,
    pub second: f64,
    /// Set when δ sat within [`POLE_WINDOW`] of 1 or 2 and quadrature was used.
    pub pole_fallback: bool,
}

/// `E[log(1 − Y^φ)] = −1/δ` for `Y ~ K(μ, φ)`.
pub fn lemma1_expectation(mu: f64, phi: f64) -> Result<f64> {
    Ok(-1.0 / delta_from_mu(mu, phi)?)
}

pub fn lemma2_expectations(mu: f64, phi: f64) -> Result<Lemma2> {
    let delta = delta_from_mu(mu, phi)?;
    Ok(lemma2_from_delta(delta, phi))
}

/// `log(v)/(1 − v)` on `(0, 1)`.
fn log_ratio(v: f64) -> f64 {
    let w = 1.0 - v;
    if w < 0.5 {
        (-w).ln_1p() / w
    } else {
        v.ln() / w
    }
}

pub(crate) fn lemma2_from_delta(delta: f64, phi: f64) -> Lemma2 {
    let near_one = (delta - 1.0).abs() < POLE_WINDOW;
    let near_two = (delta - 2.0).abs() < POLE_WINDOW;
    if near_one || near_two {
        // With V = Y^φ ~ Beta(1, δ) both expectations are integrals over V.
        let density = |v: f64| delta * ((delta - 1.0) * (-v).ln_1p()).exp();
        let first = integrate(|v| v * log_ratio(v) * density(v), 0.0, 1.0, 1e-14) / phi;
        let second =
            integrate(|v| v * log_ratio(v).powi(2) * density(v), 0.0, 1.0, 1e-14) / (phi * phi);
        return Lemma2 {
            first,
            second,
            pole_fallback: true,
        };
    }
    let first = (1.0 - digamma(delta + 1.0) - EULER_GAMMA) / ((delta - 1.0) * phi);
    let psi = digamma(delta);
    let numerator = psi * (psi + 2.0 * (EULER_GAMMA - 1.0)) - trigamma(delta) + K0;
    let second = delta * numerator / ((delta - 2.0) * (delta - 1.0) * phi * phi);
    Lemma2 {
        first,
        second,
        pole_fallback: false,
    }
}

/// Per-step log-density pieces for rescaled observation `y` and median `mu`.
#[derive(Debug, Clone, Copy)]
struct StepTerms {
    delta: f64,
    /// `μ^{φ−1} / ((1 − μ^φ) log(1 − μ^φ))`
    base: f64,
    c: f64,
    loglik: f64,
    dl_dprecision: f64,
}

fn step_terms(y: f64, mu: f64, ln_mu: f64, phi: f64, log_width: f64) -> StepTerms {
    let mt = PowTerms::from_log(ln_mu, phi);
    let yt = PowTerms::new(y, phi);
    let delta = -std::f64::consts::LN_2 / mt.log_one_minus;
    let base = (ln_mu * (phi - 1.0)).exp() / (mt.one_minus * mt.log_one_minus);
    let c = base * (delta * yt.log_one_minus + 1.0);
    let ln_y = y.ln();
    let loglik = phi.ln() - log_width + delta.ln() + (phi - 1.0) * ln_y + (delta - 1.0) * yt.log_one_minus;
    let dl_dprecision = 1.0 / phi + ln_y + c * mu * ln_mu - (delta - 1.0) * yt.pow * ln_y / yt.one_minus;
    StepTerms {
        delta,
        base,
        c,
        loglik,
        dl_dprecision,
    }
}

/// One pass over the data at fixed parameters.
pub(crate) struct Evaluation {
    pub filter: FilterOutput,
    pub prep: Prepared,
    /// Row-major `n × (s − 1)` matrix of `∂η_t/∂γ_j` over the non-precision
    /// parameters.
    pub deta: Vec<f64>,
    pub n_lin: usize,
}

impl Evaluation {
    pub fn new(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<Self> {
        check_inputs(spec, params, data)?;
        let prep = prepare(spec, &params.beta, data)?;
        let filter = run_filter(spec, params, &prep)?;
        let (deta, n_lin) = eta_derivatives(spec, params, data, &prep, &filter);
        Ok(Evaluation {
            filter,
            prep,
            deta,
            n_lin,
        })
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.deta[t * self.n_lin..(t + 1) * self.n_lin]
    }
}

fn eta_derivatives(
    spec: &KarmaSpec,
    params: &ParamVector,
    data: &SeriesData,
    prep: &Prepared,
    filter: &FilterOutput,
) -> (Vec<f64>, usize) {
    let (p, q, r) = (spec.p, spec.q, spec.r);
    let k = 1 + r + p + q;
    let n = prep.y.len();
    let m = spec.max_lag();
    let x = data.covariates();
    let mut d = vec![0.0; n * k];
    for t in m..n {
        let mut row = vec![0.0; k];
        row[0] = 1.0;
        for l in 0..r {
            let mut v = x[t][l];
            for (i, phi) in params.ar.iter().enumerate() {
                v -= phi * x[t - i - 1][l];
            }
            row[1 + l] = v;
        }
        for i in 0..p {
            let lag = t - i - 1;
            row[1 + r + i] = prep.gy[lag] - prep.xb[lag];
        }
        for j in 0..q {
            row[1 + r + p + j] = filter.r_err[t - j - 1];
        }
        // MA feedback: ∂r_{t−j}/∂γ = −∂η_{t−j}/∂γ, zero before m
        for (j, theta) in params.ma.iter().enumerate() {
            let lag = t - j - 1;
            if lag < m {
                continue;
            }
            let prev = &d[lag * k..(lag + 1) * k];
            for (dst, src) in row.iter_mut().zip(prev) {
                *dst -= theta * src;
            }
        }
        d[t * k..(t + 1) * k].copy_from_slice(&row);
    }
    (d, k)
}

fn loglik_from(spec: &KarmaSpec, params: &ParamVector, ev: &Evaluation) -> f64 {
    if ev.filter.saturated > 0 {
        return f64::NEG_INFINITY;
    }
    let log_width = spec.bounds.width().ln();
    let mut total = 0.0;
    for t in ev.filter.start..ev.prep.y.len() {
        let st = step_terms(ev.prep.y[t], ev.filter.mu[t], ev.filter.ln_mu[t], params.precision, log_width);
        if !st.loglik.is_finite() {
            return f64::NEG_INFINITY;
        }
        total += st.loglik;
    }
    total
}

fn score_from(spec: &KarmaSpec, params: &ParamVector, ev: &Evaluation) -> Result<ScoreVector> {
    let phi = params.precision;
    let log_width = spec.bounds.width().ln();
    let mut u = vec![0.0; ev.n_lin + 1];
    for t in ev.filter.start..ev.prep.y.len() {
        let st = step_terms(ev.prep.y[t], ev.filter.mu[t], ev.filter.ln_mu[t], phi, log_width);
        let scale = phi * st.c * ev.filter.dmu_deta[t];
        for (acc, d) in u.iter_mut().zip(ev.row(t)) {
            *acc += scale * d;
        }
        u[ev.n_lin] += st.dl_dprecision;
    }
    Ok(ScoreVector(u))
}

/// Log-likelihood and score from a single pass; the score is `None` when
/// the likelihood is not finite.
pub(crate) fn loglik_and_score(
    spec: &KarmaSpec,
    params: &ParamVector,
    data: &SeriesData,
) -> Result<(f64, Option<ScoreVector>)> {
    let ev = Evaluation::new(spec, params, data)?;
    let ll = loglik_from(spec, params, &ev);
    if !ll.is_finite() {
        return Ok((ll, None));
    }
    let u = score_from(spec, params, &ev)?;
    Ok((ll, Some(u)))
}

/// Conditional log-likelihood `Σ_{t>m} ℓ_t(μ_t, φ)`.
///
/// Returns `−∞` when the recursion drives any median onto the clamp
/// boundary or a term is not finite.
pub fn loglik(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<f64> {
    check_inputs(spec, params, data)?;
    let prep = prepare(spec, &params.beta, data)?;
    let filter = run_filter(spec, params, &prep)?;
    let ev = Evaluation {
        filter,
        prep,
        deta: Vec::new(),
        n_lin: 0,
    };
    Ok(loglik_from(spec, params, &ev))
}

/// Analytic gradient of [`loglik`].
pub fn score(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<ScoreVector> {
    let ev = Evaluation::new(spec, params, data)?;
    score_from(spec, params, &ev)
}

fn aux_from(params: &ParamVector, ev: &Evaluation) -> AuxQuantities {
    let phi = params.precision;
    let start = ev.filter.start;
    let len = ev.prep.y.len() - start;
    let mut aux = AuxQuantities {
        delta: Vec::with_capacity(len),
        c: Vec::with_capacity(len),
        lambda1: Vec::with_capacity(len),
        lambda2: Vec::with_capacity(len),
        w: Vec::with_capacity(len),
        d: Vec::with_capacity(len),
        l: Vec::with_capacity(len),
    };
    for t in start..ev.prep.y.len() {
        let mu = ev.filter.mu[t];
        let log_mu = ev.filter.ln_mu[t];
        let st = step_terms(ev.prep.y[t], mu, log_mu, phi, 0.0);
        let delta = st.delta;
        let lambda1 = st.base / mu;
        let lambda2 = st.base * st.base;
        let w = -phi * phi * lambda2;
        let lemma2 = lemma2_from_delta(delta, phi);
        let d = -phi * mu * log_mu * lambda2 - phi * mu * delta * lambda1 * lemma2.first;
        let l = -(1.0 / (phi * phi)
            + mu * mu * lambda2 * log_mu * log_mu
            + 2.0 * delta * mu * mu * log_mu * lambda1 * lemma2.first
            + (delta - 1.0) * lemma2.second);
        aux.delta.push(delta);
        aux.c.push(st.c);
        aux.lambda1.push(lambda1);
        aux.lambda2.push(lambda2);
        aux.w.push(w);
        aux.d.push(d);
        aux.l.push(l);
    }
    aux
}

/// Per-observation auxiliary quantities at the given parameters.
pub fn aux_quantities(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<AuxQuantities> {
    let ev = Evaluation::new(spec, params, data)?;
    Ok(aux_from(params, &ev))
}

fn fisher_from(params: &ParamVector, ev: &Evaluation) -> FisherMatrix {
    let aux = aux_from(params, ev);
    let k = ev.n_lin;
    let s = k + 1;
    let mut km = DMatrix::<f64>::zeros(s, s);
    for (idx, t) in (ev.filter.start..ev.prep.y.len()).enumerate() {
        let gp = 1.0 / ev.filter.dmu_deta[t];
        let row = ev.row(t);
        let ww = -aux.w[idx] / (gp * gp);
        let dd = -aux.d[idx] / gp;
        for i in 0..k {
            let a = ww * row[i];
            for j in 0..=i {
                km[(i, j)] += a * row[j];
            }
            km[(k, i)] += dd * row[i];
        }
        km[(k, k)] -= aux.l[idx];
    }
    for i in 0..s {
        for j in 0..i {
            km[(j, i)] = km[(i, j)];
        }
    }
    FisherMatrix { matrix: km }
}

/// Conditional Fisher information `K(γ)`.
pub fn fisher(spec: &KarmaSpec, params: &ParamVector, data: &SeriesData) -> Result<FisherMatrix> {
    let ev = Evaluation::new(spec, params, data)?;
    Ok(fisher_from(params, &ev))
}

/// Score and information from one pass.
pub fn score_and_fisher(
    spec: &KarmaSpec,
    params: &ParamVector,
    data: &SeriesData,
) -> Result<(ScoreVector, FisherMatrix)> {
    let ev = Evaluation::new(spec, params, data)?;
    Ok((score_from(spec, params, &ev)?, fisher_from(params, &ev)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kuma::KumaDist;
    use crate::link::LinkFunction;
    use crate::model::simulate;

    #[test]
    fn lemma1_uniform_case() {
        assert!((lemma1_expectation(0.5, 1.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn lemma2_continuous_across_poles() {
        // quadrature branch inside the window against the closed form
        // averaged symmetrically from outside it
        for pole in [1.0, 2.0] {
            for phi in [0.7, 3.0] {
                let at = pole + 0.5 * POLE_WINDOW;
                let inside = lemma2_from_delta(at, phi);
                let lo = lemma2_from_delta(at - 1e-4, phi);
                let hi = lemma2_from_delta(at + 1e-4, phi);
                assert!(inside.pole_fallback && !lo.pole_fallback && !hi.pole_fallback);
                let first = 0.5 * (lo.first + hi.first);
                let second = 0.5 * (lo.second + hi.second);
                assert!((inside.first - first).abs() < 1e-7, "{pole} {phi}: {inside:?} {first}");
                assert!((inside.second - second).abs() < 1e-7, "{pole} {phi}: {inside:?} {second}");
            }
        }
    }

    #[test]
    fn lemma2_decays_to_zero_from_below() {
        let mut prev = (f64::NEG_INFINITY, f64::INFINITY);
        for delta in [3.0, 10.0, 100.0, 1e4, 1e6] {
            let l = lemma2_from_delta(delta, 2.0);
            assert!(l.first < 0.0 && l.first > prev.0);
            assert!(l.second > 0.0 && l.second < prev.1);
            prev = (l.first, l.second);
        }
        assert!(prev.0.abs() < 1e-4 && prev.1 < 1e-4);
    }

    #[test]
    fn uniform_model_has_zero_loglik() {
        let spec = KarmaSpec::arma(0, 0);
        let params = ParamVector::new(0.0, vec![], vec![], vec![], 1.0);
        let data = SeriesData::univariate(vec![0.1, 0.7, 0.33, 0.95]);
        assert!(loglik(&spec, &params, &data).unwrap().abs() < 1e-14);
    }

    #[test]
    fn loglik_is_sum_of_log_densities() {
        let spec = KarmaSpec::arma(1, 1);
        let params = ParamVector::new(-1.0, vec![], vec![-0.5], vec![0.25], 10.0);
        let data = simulate(&spec, &params, 40, &[], 3).unwrap();
        let out = crate::model::filter(&spec, &params, &data).unwrap();
        let direct: f64 = (1..40)
            .map(|t| KumaDist::standard(out.mu[t], 10.0).unwrap().ln_pdf(data.y_tilde()[t]))
            .sum();
        assert!((loglik(&spec, &params, &data).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn intercept_only_score_reduces_to_scalar_formula() {
        let spec = KarmaSpec::arma(0, 0);
        let params = ParamVector::new(0.4, vec![], vec![], vec![], 6.0);
        let data = simulate(&spec, &params, 30, &[], 9).unwrap();
        let mu = LinkFunction::Logit.inverse(0.4);
        let gp = 1.0 / (mu * (1.0 - mu));
        let phi = 6.0;
        let mp = mu.powf(phi);
        let delta = 0.5_f64.ln() / (1.0 - mp).ln();
        let expected: f64 = data
            .y_tilde()
            .iter()
            .map(|&y| {
                let c = mu.powf(phi - 1.0) / ((1.0 - mp) * (1.0 - mp).ln())
                    * (delta * (1.0 - y.powf(phi)).ln() + 1.0);
                phi * c / gp
            })
            .sum();
        let u = score(&spec, &params, &data).unwrap();
        assert!((u.0[0] - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn fisher_is_symmetric_and_positive_definite() {
        let spec = KarmaSpec::arma(2, 2);
        let params = ParamVector::new(0.5, vec![], vec![0.5, -0.3], vec![0.4, 0.15], 15.0);
        let data = simulate(&spec, &params, 200, &[], 17).unwrap();
        let k = fisher(&spec, &params, &data).unwrap();
        assert_eq!(k.matrix, k.matrix.transpose());
        assert!(k.min_eigenvalue() > 0.0);
        assert!(k.matrix[(0, 0)] > 0.0);
        let aux = aux_quantities(&spec, &params, &data).unwrap();
        assert!(aux.w.iter().all(|&w| w < 0.0));
        assert!(aux.delta.iter().all(|&d| d > 0.0));
        assert!(k.inverse().is_ok());
    }

    #[test]
    fn indefinite_matrix_is_not_inverted() {
        let k = FisherMatrix {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(k.min_eigenvalue() < 0.0);
        assert!(matches!(k.inverse(), Err(KarmaError::Singular(_))));
    }
}
