//! Standard-normal special functions.
//!
//! The CDF is evaluated through the complementary error function so that both
//! tails keep their relative accuracy. The quantile uses Wichura's AS241
//! rational approximation on the lower half of the unit interval followed by a
//! single Newton correction; the upper half is obtained by exact reflection.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A probability, validated to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Standard deviation of the isotropic Gaussian smoothing noise, in input units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sigma(f64);

impl Sigma {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("sigma must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Sigma {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Sigma> for f64 {
    fn from(s: Sigma) -> f64 {
        s.0
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Density of the standard normal distribution.
pub fn std_normal_pdf(s: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * s * s).exp()
}

/// Cumulative distribution function of the standard normal distribution.
pub fn std_normal_cdf(s: f64) -> f64 {
    if s.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-s * FRAC_1_SQRT_2)
}

/// Survival function `1 - cdf(s)`, accurate in the upper tail.
pub fn std_normal_sf(s: f64) -> f64 {
    std_normal_cdf(-s)
}

/// Inverse of [`std_normal_cdf`].
///
/// Returns a domain error for `p <= 0`, `p >= 1` or NaN.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 - p is exact for p >= 1/2, so the reflection costs nothing.
    let (q, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let mut x = as241_lower(q);
    let residual = std_normal_cdf(x) - q;
    x -= residual / std_normal_pdf(x);
    Ok(if flip { -x } else { x })
}

/// AS241 (PPND16) for `0 < q <= 1/2`.
fn as241_lower(q: f64) -> f64 {
    let r = q - 0.5;
    if r.abs() <= 0.425 {
        let t = 0.180625 - r * r;
        return r * poly(&AS241_A, t) / poly(&AS241_B, t);
    }
    let mut t = (-q.ln()).sqrt();
    let x = if t <= 5.0 {
        t -= 1.6;
        poly(&AS241_C, t) / poly(&AS241_D, t)
    } else {
        t -= 5.0;
        poly(&AS241_E, t) / poly(&AS241_F, t)
    };
    -x
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const AS241_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Antiderivative of the standard normal CDF: `s * cdf(s) + pdf(s)`.
///
/// This is `E[(s - Z)^+]` for standard normal `Z`, so it is positive and
/// vanishes as `s -> -inf`. The left tail is evaluated through the Mills-ratio
/// continued fraction to avoid cancelling `s * cdf(s)` against `pdf(s)`.
pub fn cdf_antiderivative(s: f64) -> f64 {
    if s > 3.0 {
        return s + cdf_antiderivative(-s);
    }
    if s >= -3.0 {
        return s * std_normal_cdf(s) + std_normal_pdf(s);
    }
    // For x = -s > 3: cdf(s) = pdf(x) R(x), R(x) = 1 / (x + D(x)),
    // D(x) = 1 / (x + 2 / (x + 3 / (x + ...))), and 1 - x R(x) = D(x) R(x).
    let x = -s;
    let tail_d = mills_tail(x);
    let ratio = 1.0 / (x + tail_d);
    std_normal_pdf(x) * tail_d * ratio
}

/// Evaluates `1 / (x + 2 / (x + 3 / (x + ...)))` bottom-up.
fn mills_tail(x: f64) -> f64 {
    const DEPTH: usize = 60;
    let mut acc = x;
    for k in (2..=DEPTH).rev() {
        acc = x + k as f64 / acc;
    }
    1.0 / acc
}

/// Normal probability mass of `[a, b]`, accurate for narrow intervals and in both tails.
pub fn normal_interval_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if b - a <= 1.0 {
        return gauss_legendre(std_normal_pdf, a, b);
    }
    if a >= 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Mean of the survival function over `[a, a + width]`, i.e. `(1/width) * integral of sf`.
///
/// Narrow windows go through Gauss-Legendre quadrature; wide ones use the closed
/// form `integral of sf over [a, b] = A(-a) - A(-b)` with `A` the CDF antiderivative.
pub fn mean_sf_over(a: f64, width: f64) -> f64 {
    if width <= 1.0 {
        gauss_legendre(std_normal_sf, a, a + width) / width
    } else {
        (cdf_antiderivative(-a) - cdf_antiderivative(-(a + width))) / width
    }
}

#[allow(dead_code)]
pub(crate) fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}
