//! Certified l2 radii of the smoothed classifier: `R_mono`, `R_mult` and their plug-in forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{ConfidenceBound, Side};
use crate::normal::{std_normal_quantile, Sigma};

/// Raw proportions 0 or 1 are pulled this far inside the unit interval before `Phi^-1`.
pub const PROBABILITY_CLAMP: f64 = 1e-16;

/// Finite radii are capped at this many multiples of sigma.
pub const DEFAULT_RADIUS_CAP_SIGMAS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusKind {
    Mono,
    Mult,
    MonoLip,
    MultLip,
}

/// Outcome of a certification: either a nonnegative radius or no certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusValue {
    Certified(f64),
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedRadius {
    pub value: RadiusValue,
    pub kind: RadiusKind,
    pub sigma: Sigma,
    /// Set when a Lipschitz-adjusted radius reverted to its baseline term.
    #[serde(default)]
    pub fell_back: bool,
}

impl CertifiedRadius {
    pub(crate) fn from_margin(margin: f64, kind: RadiusKind, sigma: Sigma) -> Self {
        let value = if margin > 0.0 && !margin.is_nan() {
            RadiusValue::Certified(margin.min(DEFAULT_RADIUS_CAP_SIGMAS * sigma.value()))
        } else {
            RadiusValue::Abstain
        };
        Self { value, kind, sigma, fell_back: false }
    }

    pub fn abstain(kind: RadiusKind, sigma: Sigma) -> Self {
        Self { value: RadiusValue::Abstain, kind, sigma, fell_back: false }
    }

    /// The radius, or `None` when abstaining.
    pub fn radius(&self) -> Option<f64> {
        match self.value {
            RadiusValue::Certified(r) => Some(r),
            RadiusValue::Abstain => None,
        }
    }

    pub fn is_abstain(&self) -> bool {
        matches!(self.value, RadiusValue::Abstain)
    }

    /// Radius with abstention mapped to zero, for comparisons and aggregates.
    pub fn value_or_zero(&self) -> f64 {
        self.radius().unwrap_or(0.0)
    }

    /// Replaces the cap with a caller-chosen multiple of sigma.
    pub fn with_cap(mut self, cap_sigmas: f64) -> Self {
        if let RadiusValue::Certified(r) = self.value {
            self.value = RadiusValue::Certified(r.min(cap_sigmas * self.sigma.value()));
        }
        self
    }
}

/// Top-two class probabilities `p1 >= p2`, `p1 + p2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopTwoProbabilities {
    p1: f64,
    p2: f64,
}

impl TopTwoProbabilities {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        let valid = (0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2);
        // tolerate rounding in p1 + p2 coming from 1 - p1
        if !valid || p2 > p1 || p1 + p2 > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("invalid top-two probabilities p1={p1}, p2={p2}")));
        }
        Ok(Self { p1, p2 })
    }

    /// Pair without the ordering or `p1 + p2 <= 1` checks, for sweeping `p1` at a fixed `p2`.
    /// Radii of an unordered pair abstain.
    pub fn relaxed(p1: f64, p2: f64) -> Result<Self> {
        if !((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2)) {
            return Err(Error::Domain(format!("probabilities must lie in [0, 1], got p1={p1}, p2={p2}")));
        }
        Ok(Self { p1, p2 })
    }

    pub fn p1(self) -> f64 {
        self.p1
    }

    pub fn p2(self) -> f64 {
        self.p2
    }
}

/// `Phi^-1` on a proportion that may be exactly 0 or 1.
pub(crate) fn clamped_quantile(p: f64) -> f64 {
    let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
    std_normal_quantile(p).expect("clamped probability is interior")
}

/// `sigma * Phi^-1(p1)`, abstaining when `p1 <= 1/2`.
pub fn radius_mono(p1: f64, sigma: Sigma) -> CertifiedRadius {
    if !(p1 > 0.5) {
        return CertifiedRadius::abstain(RadiusKind::Mono, sigma);
    }
    CertifiedRadius::from_margin(sigma.value() * clamped_quantile(p1), RadiusKind::Mono, sigma)
}

/// Half-margin radius from the two largest probabilities (no ordering required).
pub(crate) fn mult_margin(p1: f64, p2: f64, sigma: Sigma) -> CertifiedRadius {
    if !(p1 > p2) {
        return CertifiedRadius::abstain(RadiusKind::Mult, sigma);
    }
    let margin = 0.5 * sigma.value() * (clamped_quantile(p1) - clamped_quantile(p2));
    CertifiedRadius::from_margin(margin, RadiusKind::Mult, sigma)
}

/// `(sigma / 2) (Phi^-1(p1) - Phi^-1(p2))`, abstaining when `p1 <= p2`.
pub fn radius_mult(p: TopTwoProbabilities, sigma: Sigma) -> CertifiedRadius {
    mult_margin(p.p1, p.p2, sigma)
}

/// `R_mult` evaluated at a lower bound on the top class and an upper bound on the runner-up.
pub fn plugin_radius_mult(
    lower_p1: &ConfidenceBound,
    upper_p2: &ConfidenceBound,
    sigma: Sigma,
) -> Result<CertifiedRadius> {
    if lower_p1.side != Side::Lower || upper_p2.side != Side::Upper {
        return Err(Error::Config("plug-in radius needs a lower bound on p1 and an upper bound on p2".into()));
    }
    Ok(mult_margin(lower_p1.value, upper_p2.value, sigma))
}
