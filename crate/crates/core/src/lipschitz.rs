//! Local Lipschitz constant of `Phi^-1 o F~` for an `L`-Lipschitz base function,
//! and the Lipschitz-adjusted radii built on it.
//!
//! In unit-noise coordinates the steepest smoothed function with mean `p` is the
//! ramp `g*(s) = clamp(L (s - s0), 0, 1)`. Its offset `s0` solves
//! `p = 1 - L * integral of Phi over [s0, s0 + 1/L]`, and its directional
//! derivative is `L [Phi(s0 + 1/L) - Phi(s0)]`. Dividing by `pdf(Phi^-1(p))`
//! gives the Lipschitz constant of `Phi^-1 o F~`, which never exceeds one.
//!
//! Noise `sigma != 1` is reduced to unit noise by rescaling the input: smoothing
//! `F` with `N(0, sigma^2)` equals smoothing `x -> F(sigma x)` (Lipschitz
//! `sigma L`) with unit noise, so the constant is `K(p, sigma L) / sigma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{mean_sf_over, normal_interval_mass, std_normal_pdf, std_normal_quantile, Sigma};
use crate::quadrature::integrate_with_breaks;
use crate::radii::{clamped_quantile, CertifiedRadius, RadiusKind, TopTwoProbabilities};
use crate::roots::{brent, BrentOptions};

/// Number of grid points used to take the supremum over a probability range.
pub const BALL_GRID_POINTS: usize = 1025;

/// Half-width of the default bracket for `s0` (the lower end is shifted by `1/L`).
pub const S0_BRACKET: f64 = 50.0;

/// Lipschitz constant of the base soft classifier (input units) and the neighbourhood radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSpec {
    lipschitz: f64,
    rho: f64,
}

impl LipschitzSpec {
    pub fn new(lipschitz: f64, rho: f64) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::Domain(format!("Lipschitz constant must be positive and finite, got {lipschitz}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::Domain(format!("neighbourhood radius must be nonnegative, got {rho}")));
        }
        Ok(Self { lipschitz, rho })
    }

    /// Pointwise spec (`rho = 0`).
    pub fn pointwise(lipschitz: f64) -> Result<Self> {
        Self::new(lipschitz, 0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Value of the smoothed classifier at the evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedPoint {
    pub p: f64,
    pub sigma: Sigma,
}

/// Worst-case range of the smoothed probability over the ball `B(x, rho)`, supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallRange {
    pub p_min: f64,
    pub p_max: f64,
}

/// Breakpoints and optimal value of the extremal ramp, in unit-noise coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSolution {
    pub s0: f64,
    pub s1: f64,
    /// `L [Phi(s1) - Phi(s0)]`.
    pub objective: f64,
    pub iterations: usize,
}

/// `1 - L * integral of Phi over [s0, s0 + 1/L]`, the smoothed mean of the ramp starting at `s0`.
///
/// Strictly decreasing in `s0`.
pub fn ramp_mean(s0: f64, lipschitz: f64) -> f64 {
    mean_sf_over(s0, 1.0 / lipschitz)
}

/// `p - ramp_mean(s0, L)`.
pub fn constraint_residual(p: f64, s0: f64, lipschitz: f64) -> f64 {
    p - ramp_mean(s0, lipschitz)
}

fn check_interior(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("smoothed probability must satisfy 0 < p < 1, got {p}")))
    }
}

/// Solves the mean constraint for `s0` with Brent's method (unit noise).
pub fn solve_s0(p: f64, lipschitz: f64) -> Result<ExtremalSolution> {
    check_interior(p)?;
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(Error::Domain(format!("Lipschitz constant must be positive and finite, got {lipschitz}")));
    }
    let width = 1.0 / lipschitz;
    // ramp_mean is ~1 when the whole ramp sits below -50 and ~0 above +50
    let (lo, hi) = (-S0_BRACKET - width, S0_BRACKET);
    let root = brent(|s| constraint_residual(p, s, lipschitz), lo, hi, BrentOptions::default())
        .map_err(|e| Error::Solver(format!("s0 for p={p}, L={lipschitz}: {e}")))?;
    let s0 = root.x;
    let s1 = s0 + width;
    Ok(ExtremalSolution { s0, s1, objective: lipschitz * normal_interval_mass(s0, s1), iterations: root.iterations })
}

/// Lipschitz constant of `Phi^-1 o F~` at smoothed value `p`, unit noise, base constant `L`.
pub fn unit_noise_constant(p: f64, lipschitz: f64) -> Result<f64> {
    let sol = solve_s0(p, lipschitz)?;
    let density = std_normal_pdf(std_normal_quantile(p)?);
    // the unconstrained optimum is pdf(Phi^-1(p)), so the ratio is at most one
    Ok((sol.objective / density).min(1.0))
}

/// Local Lipschitz constant of `Phi^-1 o F~` in input units.
///
/// With `rho = 0` the constant is evaluated at `point.p`. With `rho > 0` the
/// caller must supply the range the smoothed probability can take over the
/// ball; the supremum is taken over a uniform grid of that range.
pub fn smoothed_lipschitz_constant(point: SmoothedPoint, spec: LipschitzSpec, ball: Option<BallRange>) -> Result<f64> {
    check_interior(point.p)?;
    let sigma = point.sigma.value();
    let effective = sigma * spec.lipschitz;
    if spec.rho == 0.0 {
        return Ok(unit_noise_constant(point.p, effective)? / sigma);
    }
    let range =
        ball.ok_or_else(|| Error::Config(format!("rho = {} needs the probability range over the ball", spec.rho)))?;
    if !(range.p_min > 0.0 && range.p_max < 1.0 && range.p_min <= point.p && point.p <= range.p_max) {
        return Err(Error::Domain(format!(
            "ball range [{}, {}] must be interior and contain p = {}",
            range.p_min, range.p_max, point.p
        )));
    }
    let mut sup = 0.0_f64;
    for i in 0..BALL_GRID_POINTS {
        let t = i as f64 / (BALL_GRID_POINTS - 1) as f64;
        let p = range.p_min + t * (range.p_max - range.p_min);
        sup = sup.max(unit_noise_constant(p, effective)?);
    }
    Ok(sup / sigma)
}

/// `Phi^-1(p) / L(Phi^-1 o F~)`, failing instead of falling back.
fn lip_term(p: f64, spec: LipschitzSpec, sigma: Sigma, ball: Option<BallRange>) -> Result<f64> {
    let constant = smoothed_lipschitz_constant(SmoothedPoint { p, sigma }, spec, ball)?;
    Ok(std_normal_quantile(p)? / constant)
}

/// `R_monoLip` that reports solver failures instead of reverting to `R_mono`.
pub fn try_radius_mono_lip(
    p1: f64,
    spec: LipschitzSpec,
    sigma: Sigma,
    ball: Option<BallRange>,
) -> Result<CertifiedRadius> {
    if !(p1 > 0.5) {
        return Ok(CertifiedRadius::abstain(RadiusKind::MonoLip, sigma));
    }
    let margin = lip_term(p1, spec, sigma, ball)?;
    Ok(CertifiedRadius::from_margin(margin, RadiusKind::MonoLip, sigma))
}

/// `R_monoLip(p1) = Phi^-1(p1) / L(Phi^-1 o F~)`; abstains for `p1 <= 1/2`.
///
/// Reverts to `sigma Phi^-1(p1)` (flagged) when the constant cannot be computed.
pub fn radius_mono_lip(p1: f64, spec: LipschitzSpec, sigma: Sigma) -> CertifiedRadius {
    match try_radius_mono_lip(p1, spec, sigma, None) {
        Ok(r) => r,
        Err(_) => {
            let mut r = CertifiedRadius::from_margin(sigma.value() * clamped_quantile(p1), RadiusKind::MonoLip, sigma);
            r.fell_back = true;
            r
        }
    }
}

/// `R_multLip` that reports solver failures instead of reverting term by term.
pub fn try_radius_mult_lip(
    p: TopTwoProbabilities,
    spec1: LipschitzSpec,
    spec2: LipschitzSpec,
    sigma: Sigma,
) -> Result<CertifiedRadius> {
    if !(p.p1() > p.p2()) {
        return Ok(CertifiedRadius::abstain(RadiusKind::MultLip, sigma));
    }
    let t1 = lip_term(p.p1(), spec1, sigma, None)?;
    let t2 = lip_term(p.p2(), spec2, sigma, None)?;
    Ok(CertifiedRadius::from_margin(0.5 * (t1 - t2), RadiusKind::MultLip, sigma))
}

/// `R_multLip(p) = (1/2) (Phi^-1(p1) / L_1 - Phi^-1(p2) / L_2)`, abstaining when nonpositive.
///
/// A term whose constant cannot be computed reverts to `sigma Phi^-1(p_i)` and sets `fell_back`.
pub fn radius_mult_lip(
    p: TopTwoProbabilities,
    spec1: LipschitzSpec,
    spec2: LipschitzSpec,
    sigma: Sigma,
) -> CertifiedRadius {
    if !(p.p1() > p.p2()) {
        return CertifiedRadius::abstain(RadiusKind::MultLip, sigma);
    }
    let mut fell_back = false;
    let mut term = |prob: f64, spec: LipschitzSpec| match lip_term(prob, spec, sigma, None) {
        Ok(t) => t,
        Err(_) => {
            fell_back = true;
            sigma.value() * clamped_quantile(prob)
        }
    };
    let t1 = term(p.p1(), spec1);
    let t2 = term(p.p2(), spec2);
    let mut r = CertifiedRadius::from_margin(0.5 * (t1 - t2), RadiusKind::MultLip, sigma);
    r.fell_back = fell_back;
    r
}

/// The extremal ramp: 0 up to `s0`, slope `L` on `(s0, s1)`, 1 from `s1` on.
pub fn extremal_g(s: f64, sol: &ExtremalSolution, lipschitz: f64) -> f64 {
    if s <= sol.s0 {
        0.0
    } else if s >= sol.s1 {
        1.0
    } else {
        (lipschitz * (s - sol.s0)).min(1.0)
    }
}

/// Quadrature check of the two identities satisfied by the extremal ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalReport {
    /// Quadrature of `g* pdf` over `[-40, 40]`.
    pub mass: f64,
    /// Quadrature of `s g* pdf` over `[-40, 40]`.
    pub first_moment: f64,
    pub mass_residual: f64,
    pub objective_residual: f64,
    pub passed: bool,
}

pub const EXTREMAL_TOLERANCE: f64 = 1e-8;

pub fn verify_extremal(sol: &ExtremalSolution, lipschitz: f64, p: f64) -> ExtremalReport {
    let breaks = [sol.s0, sol.s1];
    let mass =
        integrate_with_breaks(|s| extremal_g(s, sol, lipschitz) * std_normal_pdf(s), -40.0, 40.0, &breaks, 1e-14);
    let first_moment =
        integrate_with_breaks(|s| s * extremal_g(s, sol, lipschitz) * std_normal_pdf(s), -40.0, 40.0, &breaks, 1e-14);
    let mass_residual = (mass - p).abs();
    let objective_residual = (first_moment - sol.objective).abs();
    ExtremalReport {
        mass,
        first_moment,
        mass_residual,
        objective_residual,
        passed: mass_residual <= EXTREMAL_TOLERANCE && objective_residual <= EXTREMAL_TOLERANCE,
    }
}
