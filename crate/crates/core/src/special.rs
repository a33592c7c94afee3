//! Log-gamma, log-beta, digamma and trigamma on the positive real axis.
//!
//! Digamma and trigamma shift the argument upward with the recurrence
//! relations until it exceeds [`ASYMPTOTIC_CUTOFF`] and then apply the
//! Bernoulli-number asymptotic series.

use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const ASYMPTOTIC_CUTOFF: f64 = 10.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the gamma function for `x > 0`.
///
/// Returns NaN for non-positive or non-finite input.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (k, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)` computed through log-gamma differences.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Digamma function ψ(x) = d/dx ln Γ(x), for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Σ B_{2k} / (2k x^{2k}), k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    x.ln() - 0.5 * inv - series - shift
}

/// Trigamma function ψ′(x), for `x > 0`.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let series = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2
                                        * (5.0 / 66.0
                                            - inv2 * (691.0 / 2_730.0 - inv2 * 7.0 / 6.0))))));
    inv + 0.5 * inv2 + series + shift
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn digamma_at_integers_and_half_integers() {
        // ψ(1) = −γ, ψ(n+1) = ψ(n) + 1/n, ψ(1/2) = −γ − 2 ln 2
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-14);
        let mut expected = -EULER_GAMMA;
        for n in 1..40 {
            assert!(
                (digamma(n as f64) - expected).abs() < 1e-12,
                "psi({n})"
            );
            expected += 1.0 / n as f64;
        }
        let mut expected = -EULER_GAMMA - 2.0 * LN_2;
        for k in 0..40 {
            let x = k as f64 + 0.5;
            assert!((digamma(x) - expected).abs() < 1e-12, "psi({x})");
            expected += 1.0 / x;
        }
    }

    #[test]
    fn trigamma_at_integers_and_half_integers() {
        // ψ′(1) = π²/6, ψ′(1/2) = π²/2
        let mut expected = PI * PI / 6.0;
        for n in 1..40 {
            assert!((trigamma(n as f64) - expected).abs() < 1e-12, "psi'({n})");
            expected -= 1.0 / (n * n) as f64;
        }
        let mut expected = PI * PI / 2.0;
        for k in 0..40 {
            let x = k as f64 + 0.5;
            assert!((trigamma(x) - expected).abs() < 1e-12, "psi'({x})");
            expected -= 1.0 / (x * x);
        }
    }

    #[test]
    fn ln_gamma_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - 0.5 * PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn digamma_matches_log_gamma_derivative() {
        for &x in &[0.3, 1.7, 4.2, 12.5, 150.0] {
            let h = 1e-5 * x;
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((fd - digamma(x)).abs() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn non_positive_arguments_are_nan() {
        assert!(digamma(0.0).is_nan());
        assert!(trigamma(-1.0).is_nan());
        assert!(ln_gamma(-2.5).is_nan());
    }
}
