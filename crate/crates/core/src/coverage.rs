//! Monte Carlo coverage of certification procedures under a known class distribution.
//!
//! Two failure events are supported. `Radius` counts replications whose emitted
//! radius for the selected class exceeds that class's true radius (abstaining
//! never fails). `Family` counts replications in which at least one of the
//! procedure's simultaneous two-sided Clopper-Pearson intervals at its per-test
//! risk `alpha'` misses its true probability: one interval per class for the
//! Bonferroni procedures, one per bucket for the partitioning method and one for
//! the selected class in the mono procedure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpm::{
    build_partition, certify_bonferroni_with, certify_cpm_with, certify_mono_with, ClassCounts, Partition,
};
use crate::error::{Error, Result};
use crate::intervals::{BinomialBounds, BinomialObservation, CachedBounds, RiskLevel};
use crate::normal::Sigma;
use crate::radii::{mult_margin, radius_mono, radius_mult, CertifiedRadius, RadiusKind, TopTwoProbabilities};
use crate::sampling::Multinomial;

/// Fewest replications accepted, enough for 3-sigma resolution at `alpha >= 0.01`.
pub const MIN_REPLICATIONS: u64 = 10_000;

/// Key stream reserved for the independent confirmation run of an adversarial search.
const CONFIRM_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Per-class bounds at `alpha / c`.
    BonferroniC,
    /// Per-class bounds at `alpha / 2` regardless of `c`.
    BonferroniHalf,
    Cpm,
    PearsonClopperMono,
}

impl Procedure {
    pub fn as_str(self) -> &'static str {
        match self {
            Procedure::BonferroniC => "bonferroni_c",
            Procedure::BonferroniHalf => "bonferroni_half",
            Procedure::Cpm => "cpm",
            Procedure::PearsonClopperMono => "pearson_clopper_mono",
        }
    }

    fn needs_selection_round(self) -> bool {
        matches!(self, Procedure::Cpm | Procedure::PearsonClopperMono)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageEvent {
    #[default]
    Radius,
    Family,
}

fn default_n0() -> u64 {
    crate::cpm::DEFAULT_N0
}

fn default_sigma() -> Sigma {
    Sigma::new(1.0).expect("unit sigma")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageExperiment {
    pub true_p: Vec<f64>,
    /// Estimation-round size.
    pub n: u64,
    /// Selection-round size, used by procedures with a pilot round.
    #[serde(default = "default_n0")]
    pub n0: u64,
    pub alpha: RiskLevel,
    pub procedure: Procedure,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma: Sigma,
    #[serde(default)]
    pub event: CoverageEvent,
}

impl CoverageExperiment {
    pub fn validate(&self) -> Result<Multinomial> {
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::Config(format!(
                "replications must be at least {MIN_REPLICATIONS}, got {}",
                self.replications
            )));
        }
        if self.n == 0 || (self.procedure.needs_selection_round() && self.n0 == 0) {
            return Err(Error::Config("round sizes must be positive".into()));
        }
        if self.true_p.len() < 2 {
            return Err(Error::Config("true_p needs at least two classes".into()));
        }
        Multinomial::new(self.true_p.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Covers,
    Inconclusive,
    Undercovers,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Covers => "covers",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Undercovers => "undercovers",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub procedure: Procedure,
    pub event: CoverageEvent,
    pub true_p: Vec<f64>,
    pub n: u64,
    pub alpha: RiskLevel,
    pub replications: u64,
    pub failures: u64,
    pub failure_rate: f64,
    /// `sqrt(alpha (1 - alpha) / R)`, the spread of the failure rate at exact level `alpha`.
    pub mc_stderr: f64,
    pub theoretical_floor: f64,
    pub verdict: Verdict,
}

impl CoverageReport {
    fn from_failures(exp: &CoverageExperiment, failures: u64) -> Self {
        let alpha = exp.alpha.alpha();
        let reps = exp.replications as f64;
        let failure_rate = failures as f64 / reps;
        let mc_stderr = (alpha * (1.0 - alpha) / reps).sqrt();
        let verdict = if failure_rate <= alpha {
            Verdict::Covers
        } else if failure_rate <= alpha + 3.0 * mc_stderr {
            Verdict::Inconclusive
        } else {
            Verdict::Undercovers
        };
        Self {
            procedure: exp.procedure,
            event: exp.event,
            true_p: exp.true_p.clone(),
            n: exp.n,
            alpha: exp.alpha,
            replications: exp.replications,
            failures,
            failure_rate,
            mc_stderr,
            theoretical_floor: 1.0 - alpha,
            verdict,
        }
    }

    /// Failure rate stays within three standard errors of `alpha`.
    pub fn within_budget(&self) -> bool {
        self.verdict != Verdict::Undercovers
    }
}

fn top_two(p: &[f64]) -> (f64, f64) {
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted[0], sorted.get(1).copied().unwrap_or(0.0))
}

/// `R_mono` or `R_mult` of the sorted true probabilities.
pub fn true_radius(true_p: &[f64], kind: RadiusKind, sigma: Sigma) -> CertifiedRadius {
    let (p1, p2) = top_two(true_p);
    match kind {
        RadiusKind::Mono | RadiusKind::MonoLip => radius_mono(p1, sigma),
        RadiusKind::Mult | RadiusKind::MultLip => match TopTwoProbabilities::new(p1, p2) {
            Ok(t) => radius_mult(t, sigma),
            Err(_) => CertifiedRadius::abstain(RadiusKind::Mult, sigma),
        },
    }
}

/// True radius for predicting `class`: abstains unless `class` is the strict top class.
pub fn true_radius_for_class(true_p: &[f64], class: usize, kind: RadiusKind, sigma: Sigma) -> CertifiedRadius {
    let others = true_p.iter().enumerate().filter(|&(i, _)| i != class).map(|(_, &v)| v).fold(0.0, f64::max);
    match kind {
        RadiusKind::Mono | RadiusKind::MonoLip => radius_mono(true_p[class], sigma),
        RadiusKind::Mult | RadiusKind::MultLip => mult_margin(true_p[class], others, sigma),
    }
}

fn exceeds(emitted: &CertifiedRadius, truth: &CertifiedRadius) -> bool {
    match (emitted.radius(), truth.radius()) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(e), Some(t)) => e > t,
    }
}

/// Whether the two-sided interval for `k` of `n` at total risk `alpha` misses `p`.
fn two_sided_miss<B: BinomialBounds + ?Sized>(bounds: &B, k: u64, n: u64, alpha: RiskLevel, p: f64) -> bool {
    let half = alpha.split(2);
    bounds.lower(k, n, half) > p || bounds.upper(k, n, half) < p
}

fn bucket_miss<B: BinomialBounds + ?Sized>(
    bounds: &B,
    partition: &Partition,
    est: &ClassCounts,
    p: &[f64],
    alpha_prime: RiskLevel,
) -> bool {
    let n = est.total();
    let mut buckets = partition.attack_buckets();
    buckets.push(vec![partition.i1]);
    buckets.iter().any(|b| {
        let k: u64 = b.iter().map(|&i| est.get(i)).sum();
        let q: f64 = b.iter().map(|&i| p[i]).sum();
        two_sided_miss(bounds, k, n, alpha_prime, q.min(1.0))
    })
}

fn replication_fails<B: BinomialBounds + ?Sized>(
    exp: &CoverageExperiment,
    dist: &Multinomial,
    bounds: &B,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let p = dist.probabilities();
    let c = p.len();
    let selection = if exp.procedure.needs_selection_round() {
        Some(ClassCounts::new(dist.sample_counts(exp.n0, rng))?)
    } else {
        None
    };
    let est = ClassCounts::new(dist.sample_counts(exp.n, rng))?;
    let n = est.total();

    match exp.procedure {
        Procedure::BonferroniC | Procedure::BonferroniHalf => {
            let ways = if exp.procedure == Procedure::BonferroniC { c } else { 2 };
            let alpha_prime = exp.alpha.split(ways);
            match exp.event {
                CoverageEvent::Family => Ok((0..c).any(|i| two_sided_miss(bounds, est.get(i), n, alpha_prime, p[i]))),
                CoverageEvent::Radius => {
                    let cert = certify_bonferroni_with(bounds, &est, alpha_prime, exp.sigma)?;
                    let truth = true_radius_for_class(p, cert.partition.i1, RadiusKind::Mult, exp.sigma);
                    Ok(exceeds(&cert.radius, &truth))
                }
            }
        }
        Procedure::Cpm => {
            let selection = selection.expect("selection round drawn");
            match exp.event {
                CoverageEvent::Family => {
                    let partition = build_partition(&selection);
                    let alpha_prime = exp.alpha.split(partition.c_star);
                    Ok(bucket_miss(bounds, &partition, &est, p, alpha_prime))
                }
                CoverageEvent::Radius => {
                    let cert = certify_cpm_with(bounds, &selection, &est, exp.alpha, exp.sigma)?;
                    let truth = true_radius_for_class(p, cert.partition.i1, RadiusKind::Mult, exp.sigma);
                    Ok(exceeds(&cert.radius, &truth))
                }
            }
        }
        Procedure::PearsonClopperMono => {
            let i1 = selection.expect("selection round drawn").argmax_excluding(None);
            match exp.event {
                CoverageEvent::Family => Ok(two_sided_miss(bounds, est.get(i1), n, exp.alpha, p[i1])),
                CoverageEvent::Radius => {
                    let obs = BinomialObservation::new(est.get(i1), n)?;
                    let emitted = certify_mono_with(bounds, obs, exp.alpha, exp.sigma);
                    let truth = true_radius_for_class(p, i1, RadiusKind::Mono, exp.sigma);
                    Ok(exceeds(&emitted, &truth))
                }
            }
        }
    }
}

pub fn run_coverage(exp: &CoverageExperiment) -> Result<CoverageReport> {
    run_coverage_with(&CachedBounds::new(), exp)
}

/// [`run_coverage`] sharing a bound cache across experiments.
///
/// Replication `r` uses its own ChaCha8 stream `r`, so the failure count is
/// independent of evaluation order.
pub fn run_coverage_with<B: BinomialBounds + ?Sized>(bounds: &B, exp: &CoverageExperiment) -> Result<CoverageReport> {
    let dist = exp.validate()?;
    let mut failures = 0u64;
    for r in 0..exp.replications {
        let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
        rng.set_stream(r);
        if replication_fails(exp, &dist, bounds, &mut rng)? {
            failures += 1;
        }
    }
    Ok(CoverageReport::from_failures(exp, failures))
}

/// Points of the 3-class simplex on a `step` grid with `p1 >= p2 >= p3`.
pub fn sorted_simplex_grid(step: f64) -> Vec<Vec<f64>> {
    let m = (1.0 / step).round() as i64;
    let mut points = Vec::new();
    for a in 0..=m {
        for b in 0..=(m - a) {
            let c = m - a - b;
            if a >= b && b >= c {
                points.push(vec![a as f64 / m as f64, b as f64 / m as f64, c as f64 / m as f64]);
            }
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSearch {
    /// Every evaluated point with its report, coarse grid first.
    pub evaluated: Vec<CoverageReport>,
    /// Index into `evaluated` of the worst point.
    pub worst: usize,
    /// Independent re-run at the worst point with a fresh seed.
    pub confirmation: CoverageReport,
}

impl AdversarialSearch {
    pub fn worst_report(&self) -> &CoverageReport {
        &self.evaluated[self.worst]
    }
}

fn normalized(p: [f64; 3]) -> Option<Vec<f64>> {
    if p.iter().any(|&x| x < -1e-12) {
        return None;
    }
    let p: Vec<f64> = p.iter().map(|&x| (x.max(0.0) * 1e6).round() / 1e6).collect();
    let total: f64 = p.iter().sum();
    ((total - 1.0).abs() < 1e-9).then_some(p)
}

/// Coarse `0.05` simplex grid over three classes, then a `0.01` grid within
/// `0.05` of the worst coarse point, then an independent confirmation run.
pub fn search_adversarial_p(template: &CoverageExperiment) -> Result<AdversarialSearch> {
    let bounds = CachedBounds::new();
    let mut evaluated = Vec::new();
    let run = |p: Vec<f64>, evaluated: &mut Vec<CoverageReport>| -> Result<()> {
        let exp = CoverageExperiment { true_p: p, ..template.clone() };
        evaluated.push(run_coverage_with(&bounds, &exp)?);
        Ok(())
    };
    for p in sorted_simplex_grid(0.05) {
        run(p, &mut evaluated)?;
    }
    let worst_of = |reports: &[CoverageReport]| {
        reports
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.failure_rate.total_cmp(&b.1.failure_rate).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("nonempty grid")
    };
    let coarse = evaluated[worst_of(&evaluated)].true_p.clone();
    for da in -5..=5 {
        for db in -5..=5 {
            let (a, b) = (coarse[0] + da as f64 * 0.01, coarse[1] + db as f64 * 0.01);
            if (da, db) == (0, 0) {
                continue;
            }
            if let Some(p) = normalized([a, b, 1.0 - a - b]) {
                if p[0] >= p[1] && p[1] >= p[2] {
                    run(p, &mut evaluated)?;
                }
            }
        }
    }
    let worst = worst_of(&evaluated);
    let confirm = CoverageExperiment {
        true_p: evaluated[worst].true_p.clone(),
        seed: template.seed ^ CONFIRM_SEED_OFFSET,
        ..template.clone()
    };
    let confirmation = run_coverage_with(&bounds, &confirm)?;
    Ok(AdversarialSearch { evaluated, worst, confirmation })
}
