//! Quantile residuals, sample autocorrelations, the Ljung–Box portmanteau
//! test and information criteria.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{KarmaError, Result};
use crate::estimation::FitResult;
use crate::kuma::{KumaDist, EPS};
use crate::link::std_normal_quantile;
use crate::model::{KarmaSpec, SeriesData};

/// `Φ⁻¹(F(ỹ_t | μ_t))` for the last `fitted_mu.len()` observations.
///
/// The cdf is clamped to `[ε, 1 − ε]` so the residuals stay finite.
pub fn quantile_residuals(spec: &KarmaSpec, precision: f64, fitted_mu: &[f64], data: &SeriesData) -> Result<Vec<f64>> {
    let n = data.len();
    if fitted_mu.len() > n {
        return Err(KarmaError::Dimension(format!(
            "{} fitted medians for {n} observations",
            fitted_mu.len()
        )));
    }
    let offset = n - fitted_mu.len();
    fitted_mu
        .iter()
        .zip(&data.y_tilde()[offset..])
        .map(|(&mu, &y)| {
            let dist = KumaDist::new(mu, precision, spec.bounds)?;
            Ok(std_normal_quantile(dist.cdf(y).clamp(EPS, 1.0 - EPS)))
        })
        .collect()
}

fn centred(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = x.len() as f64;
    let mean = x.iter().sum::<f64>() / k;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / k;
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(KarmaError::ZeroVariance);
    }
    Ok((dev, c0))
}

fn lag_products(dev: &[f64], lag: usize) -> f64 {
    dev.iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / dev.len() as f64
}

fn check_lags(k: usize, h_max: usize) -> Result<()> {
    if h_max >= k {
        return Err(KarmaError::SeriesTooShort { n: k, needed: h_max + 1 });
    }
    Ok(())
}

/// Sample autocorrelation at a single lag; lag 0 gives 1.
pub fn autocorrelation(x: &[f64], lag: usize) -> Result<f64> {
    check_lags(x.len(), lag)?;
    let (dev, c0) = centred(x)?;
    Ok(lag_products(&dev, lag) / c0)
}

/// Sample autocorrelations `ρ̂₁, …, ρ̂_{h_max}`.
pub fn acf(x: &[f64], h_max: usize) -> Result<Vec<f64>> {
    check_lags(x.len(), h_max)?;
    let (dev, c0) = centred(x)?;
    Ok((1..=h_max).map(|h| lag_products(&dev, h) / c0).collect())
}

/// Partial autocorrelations at lags `1, …, h_max` (Durbin–Levinson).
pub fn pacf(x: &[f64], h_max: usize) -> Result<Vec<f64>> {
    let rho = acf(x, h_max)?;
    let mut out = Vec::with_capacity(h_max);
    let mut phi: Vec<f64> = Vec::with_capacity(h_max);
    let mut v = 1.0;
    for k in 0..h_max {
        let num = rho[k] - phi.iter().enumerate().map(|(j, p)| p * rho[k - 1 - j]).sum::<f64>();
        let a = num / v;
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - a * prev[k - 1 - j];
        }
        phi.push(a);
        v *= 1.0 - a * a;
        out.push(a);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

/// `Q = k(k+2) Σ_{j≤lags} ρ̂ⱼ²/(k−j)` referred to χ² with `lags` degrees of
/// freedom.
pub fn ljung_box(residuals: &[f64], lags: usize) -> Result<LjungBox> {
    if lags == 0 {
        return Err(KarmaError::Domain("Ljung-Box needs at least one lag".into()));
    }
    let rho = acf(residuals, lags)?;
    let k = residuals.len() as f64;
    let q = k * (k + 2.0)
        * rho
            .iter()
            .enumerate()
            .map(|(j, r)| r * r / (k - (j + 1) as f64))
            .sum::<f64>();
    let chi = ChiSquared::new(lags as f64).map_err(|e| KarmaError::Domain(e.to_string()))?;
    Ok(LjungBox {
        statistic: q,
        p_value: chi.sf(q).clamp(0.0, 1.0),
        lags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub sic: f64,
    pub hq: f64,
}

/// AIC, SIC and HQ from the maximised log-likelihood, using the effective
/// sample size `n − m`.
pub fn information_criteria(loglik_hat: f64, s: usize, n_eff: usize) -> Result<InformationCriteria> {
    if n_eff <= 1 {
        return Err(KarmaError::SeriesTooShort { n: n_eff, needed: 2 });
    }
    let k = s as f64;
    let ne = n_eff as f64;
    let dev = -2.0 * loglik_hat;
    Ok(InformationCriteria {
        aic: dev + 2.0 * k,
        sic: dev + k * ne.ln(),
        hq: dev + 2.0 * k * ne.ln().ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub quantile_residuals: Vec<f64>,
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    /// `±1.96/√k` band for the sample autocorrelations.
    pub acf_band: f64,
    pub ljung_box: LjungBox,
    pub criteria: InformationCriteria,
}

impl DiagnosticsReport {
    pub fn from_fit(fit: &FitResult, h_max: usize, ljung_box_lags: usize) -> Result<Self> {
        let res = &fit.residuals_quantile;
        Ok(DiagnosticsReport {
            quantile_residuals: res.clone(),
            acf: acf(res, h_max)?,
            pacf: pacf(res, h_max)?,
            acf_band: 1.959_963_984_540_054 / (res.len() as f64).sqrt(),
            ljung_box: ljung_box(res, ljung_box_lags)?,
            criteria: fit.criteria,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kuma::Bounds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ar1(coef: f64, k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; k];
        for t in 1..k {
            let e = std_normal_quantile(rng.random_range(1e-12..1.0));
            x[t] = coef * x[t - 1] + e;
        }
        x
    }

    #[test]
    fn exact_median_gives_zero_residual() {
        let spec = KarmaSpec::arma(0, 0);
        let data = SeriesData::univariate(vec![0.3, 0.45, 0.7]);
        let r = quantile_residuals(&spec, 4.0, &[0.45, 0.7], &data).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
    }

    #[test]
    fn residual_increases_with_observation() {
        let spec = KarmaSpec::new(0, 0, 0, Default::default(), Bounds::new(0.0, 100.0).unwrap());
        let data = SeriesData::univariate(vec![20.0, 40.0, 60.0, 80.0]);
        let r = quantile_residuals(&spec, 3.0, &[0.5; 4], &data).unwrap();
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn acf_lag_zero_and_reversal() {
        let x = ar1(0.6, 200, 1);
        assert_eq!(autocorrelation(&x, 0).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let (a, b) = (acf(&x, 10).unwrap(), acf(&rev, 10).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
            assert!(u.abs() <= 1.0);
        }
    }

    #[test]
    fn ar1_autocorrelation_and_partial_cutoff() {
        let x = ar1(0.8, 100_000, 2);
        let rho = acf(&x, 3).unwrap();
        assert!((rho[0] - 0.8).abs() < 0.02, "{}", rho[0]);
        let partial = pacf(&x, 3).unwrap();
        assert!((partial[0] - rho[0]).abs() < 1e-12);
        assert!(partial[1].abs() < 0.02, "{}", partial[1]);
    }

    #[test]
    fn pacf_lag_two_formula() {
        let x = ar1(0.3, 500, 3);
        let rho = acf(&x, 2).unwrap();
        let expected = (rho[1] - rho[0] * rho[0]) / (1.0 - rho[0] * rho[0]);
        assert!((pacf(&x, 2).unwrap()[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert_eq!(acf(&[2.0; 10], 2), Err(KarmaError::ZeroVariance));
        assert!(ljung_box(&[2.0; 10], 2).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn ljung_box_matches_direct_sum() {
        let x = ar1(0.2, 120, 4);
        let lb = ljung_box(&x, 5).unwrap();
        let rho = acf(&x, 5).unwrap();
        let k = 120.0;
        let q: f64 = (1..=5).map(|j| rho[j - 1].powi(2) / (k - j as f64)).sum::<f64>() * k * (k + 2.0);
        assert!((lb.statistic - q).abs() < 1e-10);
        assert!(lb.statistic >= 0.0 && (0.0..=1.0).contains(&lb.p_value));
        assert!(ljung_box(&x, 6).unwrap().statistic >= lb.statistic);
    }

    #[test]
    fn chi_square_tail_reference() {
        // pchisq(22.5520, 20, lower.tail = FALSE)
        let chi = ChiSquared::new(20.0).unwrap();
        assert!((chi.sf(22.552) - 0.3113).abs() < 5e-5);
    }

    #[test]
    fn criteria_formulas() {
        let ic = information_criteria(0.0, 2, 100).unwrap();
        assert_eq!(ic.aic, 4.0);
        assert!((ic.sic - 2.0 * 100f64.ln()).abs() < 1e-12);
        assert!((ic.hq - 4.0 * 100f64.ln().ln()).abs() < 1e-12);
        assert!(ic.aic < ic.sic);
        assert!(information_criteria(1.0, 2, 1).is_err());
    }
}
