//! Test-only oracles, written from the defining formulas and independent of
//! the library's numerical routines.

#![allow(dead_code)]

use rand::Rng;
use std::f64::consts::PI;

/// Tanh-sinh quadrature over `(0, 1)`.
///
/// `f(x, ln x, 1 − x)` receives the node together with accurately computed
/// `ln x` and `1 − x`, so integrands with endpoint singularities can be
/// evaluated without cancellation.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(f: F) -> f64 {
    let node = |t: f64| -> Option<(f64, f64, f64, f64)> {
        let u = 0.5 * PI * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let one_minus = 1.0 / (1.0 + (2.0 * u).exp());
        let ln_x = -(-2.0 * u).exp().ln_1p();
        let w = 0.25 * PI * t.cosh() / u.cosh().powi(2);
        if x <= 0.0 || one_minus <= 0.0 || !w.is_finite() || w == 0.0 {
            return None;
        }
        Some((x, ln_x, one_minus, w))
    };
    let eval = |t: f64| node(t).map_or(0.0, |(x, lx, om, w)| w * f(x, lx, om));
    let t_max = 6.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut prev = sum * h;
    for _ in 0..10 {
        // add the midpoints of the previous level
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let cur = sum * h;
        if (cur - prev).abs() <= 1e-14 * cur.abs().max(1e-300) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `δ = ln 0.5 / ln(1 − μ^φ)`.
pub fn delta(mu: f64, phi: f64) -> f64 {
    0.5f64.ln() / (-mu.powf(phi)).ln_1p()
}

/// Log density of the median-parameterised Kumaraswamy law on `(0, 1)`,
/// with `ln y` and `1 − y^φ` supplied by the caller.
pub fn kuma_log_density(ln_y: f64, mu: f64, phi: f64) -> f64 {
    let d = delta(mu, phi);
    if !d.is_finite() {
        return f64::NEG_INFINITY;
    }
    // ln(1 − y^φ) without losing tiny y^φ to rounding
    let ln_omp = if phi * ln_y < -0.5f64.ln().abs() {
        (-(phi * ln_y).exp()).ln_1p()
    } else {
        (-(phi * ln_y).exp_m1()).ln()
    };
    phi.ln() + d.ln() + (phi - 1.0) * ln_y + (d - 1.0) * ln_omp
}

/// `E[h(Y)]` under the unit-interval law, with `h(y, ln y, 1 − y^φ)`.
pub fn kuma_expectation<H: Fn(f64, f64, f64) -> f64>(mu: f64, phi: f64, h: H) -> f64 {
    tanh_sinh(|y, ln_y, _| {
        let one_minus_pow = -(phi * ln_y).exp_m1();
        if one_minus_pow <= 0.0 {
            return 0.0;
        }
        let density = kuma_log_density(ln_y, mu, phi).exp();
        if density == 0.0 {
            return 0.0;
        }
        density * h(y, ln_y, one_minus_pow)
    })
}

pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Box–Muller standard normal draws.
pub fn normal_draws<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    while out.len() < k {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        out.push(r * (2.0 * PI * u2).cos());
        out.push(r * (2.0 * PI * u2).sin());
    }
    out.truncate(k);
    out
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let k = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / k).abs().max(((i + 1) as f64 / k - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(k: usize) -> f64 {
    1.627_6 / (k as f64).sqrt()
}

/// Standard normal cdf by integrating the density.
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf(-z);
    }
    // Φ(z) = ½ + ∫₀ᶻ φ(t) dt, Simpson with 2000 panels
    let n = 2000;
    let h = z / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}
