//! Monotone link functions `g: (0,1) → ℝ` for the conditional median.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::kuma::EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    #[default]
    Logit,
    Probit,
    /// `g(μ) = log(−log(1 − μ))`
    Cloglog,
    /// `g(μ) = −log(−log μ)`, increasing like the others.
    Loglog,
}

pub const ALL_LINKS: [LinkFunction; 4] = [
    LinkFunction::Logit,
    LinkFunction::Probit,
    LinkFunction::Cloglog,
    LinkFunction::Loglog,
];

fn check_unit(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(KarmaError::Domain(format!("link argument must lie in (0,1), got {mu}")))
    }
}

impl LinkFunction {
    /// `η = g(μ)`.
    pub fn apply(self, mu: f64) -> Result<f64> {
        check_unit(mu)?;
        Ok(match self {
            LinkFunction::Logit => (mu / (1.0 - mu)).ln(),
            LinkFunction::Probit => std_normal_quantile(mu),
            LinkFunction::Cloglog => (-(-mu).ln_1p()).ln(),
            LinkFunction::Loglog => -(-mu.ln()).ln(),
        })
    }

    /// `μ = g⁻¹(η)`, clamped to `[ε, 1 − ε]`.
    pub fn inverse(self, eta: f64) -> f64 {
        let mu = match self {
            LinkFunction::Logit => 1.0 / (1.0 + (-eta).exp()),
            LinkFunction::Probit => std_normal_cdf(eta),
            LinkFunction::Cloglog => -(-eta.exp()).exp_m1(),
            LinkFunction::Loglog => (-(-eta).exp()).exp(),
        };
        if mu.is_nan() {
            return if eta > 0.0 { 1.0 - EPS } else { EPS };
        }
        mu.clamp(EPS, 1.0 - EPS)
    }

    /// `log g⁻¹(η)` without the rounding of `μ` near 1.
    pub fn log_inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => -(-eta).exp().ln_1p(),
            LinkFunction::Probit => {
                if eta < 0.0 {
                    std_normal_cdf(eta).ln()
                } else {
                    (-std_normal_cdf(-eta)).ln_1p()
                }
            }
            LinkFunction::Cloglog => {
                let c = (-eta.exp()).exp();
                if c < 0.5 {
                    (-c).ln_1p()
                } else {
                    (-(-eta.exp()).exp_m1()).ln()
                }
            }
            LinkFunction::Loglog => -(-eta).exp(),
        }
    }

    /// `dμ/dη = 1/g′(μ)` as a function of `η`.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LinkFunction::Probit => std_normal_pdf(eta),
            LinkFunction::Cloglog => (eta - eta.exp()).exp(),
            LinkFunction::Loglog => (-eta - (-eta).exp()).exp(),
        }
    }

    /// `g′(μ)`.
    pub fn deriv(self, mu: f64) -> Result<f64> {
        check_unit(mu)?;
        Ok(match self {
            LinkFunction::Logit => 1.0 / (mu * (1.0 - mu)),
            LinkFunction::Probit => 1.0 / std_normal_pdf(std_normal_quantile(mu)),
            LinkFunction::Cloglog => -1.0 / ((1.0 - mu) * (-mu).ln_1p()),
            LinkFunction::Loglog => -1.0 / (mu * mu.ln()),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Logit => "logit",
            LinkFunction::Probit => "probit",
            LinkFunction::Cloglog => "cloglog",
            LinkFunction::Loglog => "loglog",
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = KarmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkFunction::Logit),
            "probit" => Ok(LinkFunction::Probit),
            "cloglog" => Ok(LinkFunction::Cloglog),
            "loglog" => Ok(LinkFunction::Loglog),
            other => Err(KarmaError::Domain(format!("unknown link function '{other}'"))),
        }
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Φ⁻¹(p) for `p ∈ (0, 1)`; ±∞ at the endpoints and NaN outside.
///
/// Wichura's AS 241 (PPND16), accurate to about 1e−16.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&AS241_A, r) / poly(&AS241_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&AS241_C, r) / poly(&AS241_D, r)
    } else {
        let r = r - 5.0;
        poly(&AS241_E, r) / poly(&AS241_F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const AS241_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_545,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.046_978_611_146_263_4e-15,
];
