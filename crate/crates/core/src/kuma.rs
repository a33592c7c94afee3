//! The Kumaraswamy distribution on `(a, b)` parameterized by the median of
//! its rescaled variable `Y = (Ỹ − a)/(b − a)` and the precision (shape) φ.
//!
//! With shape pair `(φ, δ)` the rescaled density is
//! `φ δ y^{φ−1} (1 − y^φ)^{δ−1}` on `(0, 1)`, and the median `μ` fixes
//! `δ = log(0.5) / log(1 − μ^φ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::special::ln_beta;

/// Clamp margin used wherever a value must stay strictly inside `(0, 1)`.
pub const EPS: f64 = 1e-12;

const LN_HALF: f64 = -std::f64::consts::LN_2;

/// Support `(a, b)` of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    a: f64,
    b: f64,
}

impl Bounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a >= b {
            return Err(KarmaError::Domain(format!(
                "bounds must be finite with a < b, got ({a}, {b})"
            )));
        }
        Ok(Bounds { a, b })
    }

    pub fn unit() -> Self {
        Bounds { a: 0.0, b: 1.0 }
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// Maps `ỹ` to `(ỹ − a)/(b − a)` without clamping.
    pub fn rescale(&self, y_tilde: f64) -> f64 {
        (y_tilde - self.a) / (self.b - self.a)
    }

    pub fn unscale(&self, y: f64) -> f64 {
        self.a + (self.b - self.a) * y
    }

    pub fn contains(&self, y_tilde: f64) -> bool {
        y_tilde > self.a && y_tilde < self.b
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::unit()
    }
}

/// `x^φ`, `1 − x^φ` and `log(1 − x^φ)` for `x ∈ (0, 1)`, each computed
/// without cancellation at either end of the interval.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowTerms {
    pub pow: f64,
    pub one_minus: f64,
    pub log_one_minus: f64,
}

impl PowTerms {
    pub fn new(x: f64, phi: f64) -> Self {
        Self::from_log(x.ln(), phi)
    }

    /// Same terms from `log x`.
    pub fn from_log(log_x: f64, phi: f64) -> Self {
        let log_pow = phi * log_x;
        let pow = log_pow.exp();
        let one_minus = -log_pow.exp_m1();
        let log_one_minus = if pow < 0.5 {
            (-pow).ln_1p()
        } else {
            one_minus.ln()
        };
        PowTerms {
            pow,
            one_minus,
            log_one_minus,
        }
    }
}

/// Second shape parameter `δ = log(0.5)/log(1 − μ^φ)` implied by median `μ`
/// and precision `φ`.
pub fn delta_from_mu(mu: f64, phi: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(KarmaError::Domain(format!("median must lie in (0,1), got {mu}")));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(KarmaError::Domain(format!("precision must be positive, got {phi}")));
    }
    let terms = PowTerms::new(mu, phi);
    if terms.pow == 0.0 || terms.one_minus == 0.0 {
        return Err(KarmaError::Domain(format!(
            "mu^phi degenerates at the boundary (mu = {mu}, phi = {phi})"
        )));
    }
    Ok(LN_HALF / terms.log_one_minus)
}

/// Median-parameterized Kumaraswamy distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KumaDist {
    mu: f64,
    phi: f64,
    delta: f64,
    bounds: Bounds,
}

impl KumaDist {
    pub fn new(mu: f64, phi: f64, bounds: Bounds) -> Result<Self> {
        let delta = delta_from_mu(mu, phi)?;
        Ok(KumaDist {
            mu,
            phi,
            delta,
            bounds,
        })
    }

    /// Distribution on `(0, 1)`.
    pub fn standard(mu: f64, phi: f64) -> Result<Self> {
        Self::new(mu, phi, Bounds::unit())
    }

    /// Median of the rescaled variable.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Median on the original `(a, b)` scale.
    pub fn median(&self) -> f64 {
        self.bounds.unscale(self.mu)
    }

    /// Log-density at `ỹ`.
    ///
    /// Returns `−∞` outside `[a, b]`. Points on the boundary are clamped to
    /// `[ε, 1 − ε]` after rescaling.
    pub fn ln_pdf(&self, y_tilde: f64) -> f64 {
        if !(y_tilde >= self.bounds.a && y_tilde <= self.bounds.b) {
            return f64::NEG_INFINITY;
        }
        let y = self.bounds.rescale(y_tilde).clamp(EPS, 1.0 - EPS);
        let t = PowTerms::new(y, self.phi);
        self.phi.ln() - self.bounds.width().ln()
            + self.delta.ln()
            + (self.phi - 1.0) * y.ln()
            + (self.delta - 1.0) * t.log_one_minus
    }

    /// Log-density that rejects points outside the open support.
    pub fn ln_pdf_strict(&self, y_tilde: f64) -> Result<f64> {
        if !self.bounds.contains(y_tilde) {
            return Err(KarmaError::OutOfBounds {
                index: 0,
                value: y_tilde,
                lower: self.bounds.a,
                upper: self.bounds.b,
            });
        }
        Ok(self.ln_pdf(y_tilde))
    }

    pub fn pdf(&self, y_tilde: f64) -> f64 {
        self.ln_pdf(y_tilde).exp()
    }

    /// `1 − (1 − y^φ)^δ`, clamped to 0 below `a` and 1 above `b`.
    pub fn cdf(&self, y_tilde: f64) -> f64 {
        if y_tilde <= self.bounds.a {
            return 0.0;
        }
        if y_tilde >= self.bounds.b {
            return 1.0;
        }
        let y = self.bounds.rescale(y_tilde);
        let t = PowTerms::new(y, self.phi);
        -(self.delta * t.log_one_minus).exp_m1()
    }

    /// Quantile function. The rescaled result is kept inside `[ε, 1 − ε]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(KarmaError::Domain(format!("probability must lie in (0,1), got {u}")));
        }
        // 1 − (1 − u)^{1/δ}
        let inner = -((-u).ln_1p() / self.delta).exp_m1();
        let y = inner.powf(1.0 / self.phi).clamp(EPS, 1.0 - EPS);
        Ok(self.bounds.unscale(y))
    }

    /// Inversion sampler: the quantile at the supplied uniform draw.
    pub fn sample_from_uniform(&self, uniform_draw: f64) -> Result<f64> {
        self.quantile(uniform_draw)
    }

    /// Draws one observation using `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open_unit(rng);
        self.quantile(u).expect("open-interval draw")
    }

    /// `E(Ỹ) = a + (b − a) δ B(1 + 1/φ, δ)`.
    pub fn mean(&self) -> f64 {
        self.bounds.unscale(self.raw_moment(1.0))
    }

    /// `Var(Ỹ) = (b − a)² {δ B(1 + 2/φ, δ) − [δ B(1 + 1/φ, δ)]²}`.
    pub fn variance(&self) -> f64 {
        let m1 = self.raw_moment(1.0);
        let m2 = self.raw_moment(2.0);
        self.bounds.width().powi(2) * (m2 - m1 * m1)
    }

    /// `E(Y^k) = δ B(1 + k/φ, δ)` of the rescaled variable.
    fn raw_moment(&self, k: f64) -> f64 {
        (self.delta.ln() + ln_beta(1.0 + k / self.phi, self.delta)).exp()
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
