//! One-sided confidence bounds on binomial proportions.
//!
//! Clopper-Pearson bounds are obtained by bisection on the exact binomial tail,
//! summed in scaled linear space from a log-space anchor so that `n = 10^6`
//! and extreme `k` neither underflow nor overflow.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Risk level `alpha` of a confidence statement, `0 < alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Domain(format!("risk level must satisfy 0 < alpha < 1, got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// Bonferroni share of this risk across `ways` simultaneous statements.
    pub fn split(self, ways: usize) -> RiskLevel {
        assert!(ways > 0, "cannot split risk zero ways");
        RiskLevel(self.0 / ways as f64)
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<RiskLevel> for f64 {
    fn from(r: RiskLevel) -> f64 {
        r.0
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `successes` out of `trials` Bernoulli draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialObservation {
    successes: u64,
    trials: u64,
}

impl BinomialObservation {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Domain("binomial observation needs at least one trial".into()));
        }
        if successes > trials {
            return Err(Error::Domain(format!("{successes} successes exceed {trials} trials")));
        }
        Ok(Self { successes, trials })
    }

    pub fn successes(self) -> u64 {
        self.successes
    }

    pub fn trials(self) -> u64 {
        self.trials
    }

    pub fn proportion(self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    ClopperPearson,
    Hoeffding,
    Bernstein,
}

/// A one-sided bound on a proportion holding with probability at least `1 - risk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBound {
    pub value: f64,
    pub side: Side,
    pub risk: RiskLevel,
    pub method: BoundMethod,
}

const BISECTION_TOL: f64 = 1e-12;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return libm::lgamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x / m) + m - x`, evaluated without cancellation when `x ~ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut sum = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = sum + ej / (2 * j + 1) as f64;
            if next == sum {
                break;
            }
            sum = next;
        }
        sum
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Log binomial pmf via Loader's saddle-point expansion (no large-lgamma cancellation).
fn ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k == 0 {
        return n as f64 * (-p).ln_1p();
    }
    if k == n {
        return n as f64 * p.ln();
    }
    let (kf, nf) = (k as f64, n as f64);
    let rest = nf - kf;
    stirling_error(nf) - stirling_error(kf) - stirling_error(rest) - deviance(kf, nf * p) - deviance(rest, nf * q)
        + 0.5 * (nf / (2.0 * std::f64::consts::PI * kf * rest)).ln()
}

/// Natural log of `P(X >= k)` for `X ~ Binomial(n, p)`, `0 < p < 1`.
pub fn ln_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let odds = p / (1.0 - p);
    // running sum relative to the pmf at k, rescaled whenever it grows large
    let (mut term, mut sum, mut shift) = (1.0_f64, 1.0_f64, 0.0_f64);
    for j in k..n {
        let ratio = (n - j) as f64 / (j + 1) as f64 * odds;
        term *= ratio;
        sum += term;
        if sum > 1e280 {
            term *= 1e-280;
            sum *= 1e-280;
            shift += 280.0 * std::f64::consts::LN_10;
        }
        if ratio < 1.0 && term < sum * 1e-18 {
            break;
        }
    }
    ln_pmf(k, n, p) + sum.ln() + shift
}

/// Natural log of `P(X <= k)` for `X ~ Binomial(n, p)`, `0 < p < 1`.
pub fn ln_lower_tail(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 0.0;
    }
    let inv_odds = (1.0 - p) / p;
    let (mut term, mut sum, mut shift) = (1.0_f64, 1.0_f64, 0.0_f64);
    for j in (1..=k).rev() {
        let ratio = j as f64 / (n - j + 1) as f64 * inv_odds;
        term *= ratio;
        sum += term;
        if sum > 1e280 {
            term *= 1e-280;
            sum *= 1e-280;
            shift += 280.0 * std::f64::consts::LN_10;
        }
        if ratio < 1.0 && term < sum * 1e-18 {
            break;
        }
    }
    ln_pmf(k, n, p) + sum.ln() + shift
}

/// Exact lower bound: the `p` at which `P(X >= k | p) = alpha` (closed forms at `k = 0` and `k = n`).
fn cp_lower_value(k: u64, n: u64, alpha: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k == n {
        return alpha.powf(1.0 / n as f64);
    }
    let target = alpha.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let guess = k as f64 / n as f64;
    if ln_upper_tail(k, n, guess) >= target {
        hi = guess;
    } else {
        lo = guess;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if ln_upper_tail(k, n, mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Exact upper bound: the `p` at which `P(X <= k | p) = alpha` (closed forms at `k = 0` and `k = n`).
fn cp_upper_value(k: u64, n: u64, alpha: f64) -> f64 {
    if k == n {
        return 1.0;
    }
    if k == 0 {
        return 1.0 - alpha.powf(1.0 / n as f64);
    }
    let target = alpha.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let guess = k as f64 / n as f64;
    if ln_lower_tail(k, n, guess) >= target {
        lo = guess;
    } else {
        hi = guess;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if ln_lower_tail(k, n, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn clopper_pearson_lower(obs: BinomialObservation, alpha: RiskLevel) -> ConfidenceBound {
    ConfidenceBound {
        value: cp_lower_value(obs.successes, obs.trials, alpha.alpha()),
        side: Side::Lower,
        risk: alpha,
        method: BoundMethod::ClopperPearson,
    }
}

pub fn clopper_pearson_upper(obs: BinomialObservation, alpha: RiskLevel) -> ConfidenceBound {
    ConfidenceBound {
        value: cp_upper_value(obs.successes, obs.trials, alpha.alpha()),
        side: Side::Upper,
        risk: alpha,
        method: BoundMethod::ClopperPearson,
    }
}

fn shift_and_clamp(mean: f64, width: f64, side: Side) -> f64 {
    match side {
        Side::Lower => (mean - width).clamp(0.0, 1.0),
        Side::Upper => (mean + width).clamp(0.0, 1.0),
    }
}

/// Hoeffding bound for the mean of `n` variables in `[0, 1]`.
pub fn hoeffding_bound(mean: f64, n: u64, alpha: RiskLevel, side: Side) -> Result<ConfidenceBound> {
    if !(0.0..=1.0).contains(&mean) || n == 0 {
        return Err(Error::Domain(format!("hoeffding bound needs mean in [0,1] and n >= 1 (mean={mean}, n={n})")));
    }
    let width = ((1.0 / alpha.alpha()).ln() / (2.0 * n as f64)).sqrt();
    Ok(ConfidenceBound { value: shift_and_clamp(mean, width, side), side, risk: alpha, method: BoundMethod::Hoeffding })
}

/// Maurer-Pontil empirical Bernstein bound.
pub fn empirical_bernstein_bound(
    mean: f64,
    sample_variance: f64,
    n: u64,
    alpha: RiskLevel,
    side: Side,
) -> Result<ConfidenceBound> {
    if n < 2 {
        return Err(Error::Domain(format!("empirical Bernstein bound needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&mean) || !(sample_variance >= 0.0) {
        return Err(Error::Domain(format!(
            "empirical Bernstein bound needs mean in [0,1] and nonnegative variance (mean={mean}, var={sample_variance})"
        )));
    }
    let log_term = (2.0 / alpha.alpha()).ln();
    let nf = n as f64;
    let width = (2.0 * sample_variance * log_term / nf).sqrt() + 7.0 * log_term / (3.0 * (nf - 1.0));
    Ok(ConfidenceBound { value: shift_and_clamp(mean, width, side), side, risk: alpha, method: BoundMethod::Bernstein })
}

/// Source of Clopper-Pearson bound values, so hot loops can memoize them.
pub trait BinomialBounds {
    fn lower(&self, k: u64, n: u64, alpha: RiskLevel) -> f64;
    fn upper(&self, k: u64, n: u64, alpha: RiskLevel) -> f64;
}

/// Computes every bound from scratch.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactBounds;

impl BinomialBounds for ExactBounds {
    fn lower(&self, k: u64, n: u64, alpha: RiskLevel) -> f64 {
        cp_lower_value(k, n, alpha.alpha())
    }
    fn upper(&self, k: u64, n: u64, alpha: RiskLevel) -> f64 {
        cp_upper_value(k, n, alpha.alpha())
    }
}

struct BoundTable {
    lower: Vec<OnceLock<f64>>,
    upper: Vec<OnceLock<f64>>,
}

/// Lazily filled per-`(n, alpha)` tables of Clopper-Pearson bounds.
#[derive(Default)]
pub struct CachedBounds {
    tables: Mutex<HashMap<(u64, u64), Arc<BoundTable>>>,
}

impl CachedBounds {
    pub fn new() -> Self {
        Self::default()
    }

    fn table(&self, n: u64, alpha: RiskLevel) -> Arc<BoundTable> {
        let mut tables = self.tables.lock().expect("bound cache poisoned");
        tables
            .entry((n, alpha.alpha().to_bits()))
            .or_insert_with(|| {
                let size = n as usize + 1;
                Arc::new(BoundTable {
                    lower: (0..size).map(|_| OnceLock::new()).collect(),
                    upper: (0..size).map(|_| OnceLock::new()).collect(),
                })
            })
            .clone()
    }
}

impl BinomialBounds for CachedBounds {
    fn lower(&self, k: u64, n: u64, alpha: RiskLevel) -> f64 {
        let table = self.table(n, alpha);
        *table.lower[k as usize].get_or_init(|| cp_lower_value(k, n, alpha.alpha()))
    }
    fn upper(&self, k: u64, n: u64, alpha: RiskLevel) -> f64 {
        let table = self.table(n, alpha);
        *table.upper[k as usize].get_or_init(|| cp_upper_value(k, n, alpha.alpha()))
    }
}
