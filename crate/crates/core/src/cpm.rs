//! Class partitioning: a pilot round groups classes into a few buckets so the
//! Bonferroni divisor is the bucket count `c*` instead of the class count `c`.
//!
//! Class ids are 0-based vector indices. Every argmax breaks ties toward the
//! lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{
    BinomialBounds, BinomialObservation, BoundMethod, ConfidenceBound, ExactBounds, RiskLevel, Side,
};
use crate::normal::Sigma;
use crate::radii::{mult_margin, radius_mono, CertifiedRadius, RadiusKind};

pub const DEFAULT_N0: u64 = 100;
pub const DEFAULT_N: u64 = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.001;

/// Per-class hit counts from one sampling round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct ClassCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Config(format!("need at least two classes, got {}", counts.len())));
        }
        let total = counts.iter().try_fold(0u64, |acc, &c| acc.checked_add(c));
        match total {
            Some(0) => Err(Error::Config("counts must contain at least one sample".into())),
            Some(total) => Ok(Self { counts, total }),
            None => Err(Error::Config("count total overflows u64".into())),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, class: usize) -> u64 {
        self.counts[class]
    }

    /// Lowest-index argmax, optionally skipping one class.
    pub fn argmax_excluding(&self, skip: Option<usize>) -> usize {
        argmax_by(self.counts.len(), skip, |i| self.counts[i] as f64)
    }
}

impl TryFrom<Vec<u64>> for ClassCounts {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassCounts> for Vec<u64> {
    fn from(c: ClassCounts) -> Self {
        c.counts
    }
}

fn argmax_by(len: usize, skip: Option<usize>, key: impl Fn(usize) -> f64) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in (0..len).filter(|&i| Some(i) != skip) {
        let v = key(i);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.expect("at least one candidate").0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub i1: usize,
    /// Singleton attack buckets, runner-up first, then peeled classes in peel order.
    pub attack_singletons: Vec<usize>,
    /// Remaining classes pooled into one bucket; empty when nothing is left.
    pub meta_class: Vec<usize>,
    pub c_star: usize,
}

impl Partition {
    /// Attack buckets as class lists: each singleton, then the meta class if nonempty.
    pub fn attack_buckets(&self) -> Vec<Vec<usize>> {
        let mut buckets: Vec<Vec<usize>> = self.attack_singletons.iter().map(|&i| vec![i]).collect();
        if !self.meta_class.is_empty() {
            buckets.push(self.meta_class.clone());
        }
        buckets
    }
}

pub fn build_partition(initial: &ClassCounts) -> Partition {
    let i1 = initial.argmax_excluding(None);
    let i2 = initial.argmax_excluding(Some(i1));
    let threshold = initial.get(i2);

    let mut meta: Vec<usize> = (0..initial.num_classes()).filter(|&i| i != i1 && i != i2).collect();
    // stable sort keeps lowest index first among equal counts
    meta.sort_by_key(|&i| std::cmp::Reverse(initial.get(i)));
    let mut remaining: u64 = meta.iter().map(|&i| initial.get(i)).sum();

    let mut singletons = vec![i2];
    let mut peeled = 0;
    while remaining > threshold && peeled < meta.len() {
        let class = meta[peeled];
        remaining -= initial.get(class);
        singletons.push(class);
        peeled += 1;
    }
    let mut meta_class = meta.split_off(peeled);
    meta_class.sort_unstable();

    let c_star = singletons.len() + usize::from(!meta_class.is_empty()) + 1;
    Partition { i1, attack_singletons: singletons, meta_class, c_star }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmCertificate {
    pub radius: CertifiedRadius,
    pub lower_p1: ConfidenceBound,
    pub max_upper: ConfidenceBound,
    pub partition: Partition,
    pub alpha_prime: RiskLevel,
}

fn cp_bound(value: f64, side: Side, risk: RiskLevel) -> ConfidenceBound {
    ConfidenceBound { value, side, risk, method: BoundMethod::ClopperPearson }
}

fn check_same_classes(initial: &ClassCounts, estimation: &ClassCounts) -> Result<()> {
    if initial.num_classes() != estimation.num_classes() {
        return Err(Error::Config(format!(
            "selection round has {} classes but estimation round has {}",
            initial.num_classes(),
            estimation.num_classes()
        )));
    }
    Ok(())
}

pub fn certify_cpm(
    initial: &ClassCounts,
    estimation: &ClassCounts,
    alpha: RiskLevel,
    sigma: Sigma,
) -> Result<CpmCertificate> {
    certify_cpm_with(&ExactBounds, initial, estimation, alpha, sigma)
}

/// [`certify_cpm`] drawing bound values from `bounds`.
pub fn certify_cpm_with<B: BinomialBounds + ?Sized>(
    bounds: &B,
    initial: &ClassCounts,
    estimation: &ClassCounts,
    alpha: RiskLevel,
    sigma: Sigma,
) -> Result<CpmCertificate> {
    check_same_classes(initial, estimation)?;
    let partition = build_partition(initial);
    let alpha_prime = alpha.split(partition.c_star);
    let n = estimation.total();

    let lower = bounds.lower(estimation.get(partition.i1), n, alpha_prime);
    let max_upper = partition
        .attack_buckets()
        .iter()
        .map(|bucket| bounds.upper(bucket.iter().map(|&i| estimation.get(i)).sum(), n, alpha_prime))
        .fold(0.0, f64::max);

    Ok(CpmCertificate {
        radius: mult_margin(lower, max_upper, sigma),
        lower_p1: cp_bound(lower, Side::Lower, alpha_prime),
        max_upper: cp_bound(max_upper, Side::Upper, alpha_prime),
        partition,
        alpha_prime,
    })
}

pub fn certify_bonferroni_full(estimation: &ClassCounts, alpha: RiskLevel, sigma: Sigma) -> Result<CpmCertificate> {
    certify_bonferroni_with(&ExactBounds, estimation, alpha.split(estimation.num_classes()), sigma)
}

/// Per-class bounds at an explicit per-class risk `alpha_prime`; `I1` maximizes
/// the lower bound and the runner-up maximizes the upper bound over the rest.
pub fn certify_bonferroni_with<B: BinomialBounds + ?Sized>(
    bounds: &B,
    estimation: &ClassCounts,
    alpha_prime: RiskLevel,
    sigma: Sigma,
) -> Result<CpmCertificate> {
    let n = estimation.total();
    let c = estimation.num_classes();
    let lowers: Vec<f64> = estimation.counts().iter().map(|&k| bounds.lower(k, n, alpha_prime)).collect();
    let i1 = argmax_by(c, None, |i| lowers[i]);
    let uppers: Vec<f64> =
        (0..c).map(|i| if i == i1 { 0.0 } else { bounds.upper(estimation.get(i), n, alpha_prime) }).collect();
    let i2 = argmax_by(c, Some(i1), |i| uppers[i]);

    let mut singletons = vec![i2];
    singletons.extend((0..c).filter(|&i| i != i1 && i != i2));
    let partition = Partition { i1, attack_singletons: singletons, meta_class: Vec::new(), c_star: c };

    Ok(CpmCertificate {
        radius: mult_margin(lowers[i1], uppers[i2], sigma),
        lower_p1: cp_bound(lowers[i1], Side::Lower, alpha_prime),
        max_upper: cp_bound(uppers[i2], Side::Upper, alpha_prime),
        partition,
        alpha_prime,
    })
}

/// Single-class certificate: `sigma * Phi^-1` of the lower bound on the selected class.
pub fn certify_pearson_clopper_mono(
    estimation_i1: BinomialObservation,
    alpha: RiskLevel,
    sigma: Sigma,
) -> CertifiedRadius {
    certify_mono_with(&ExactBounds, estimation_i1, alpha, sigma)
}

pub fn certify_mono_with<B: BinomialBounds + ?Sized>(
    bounds: &B,
    estimation_i1: BinomialObservation,
    alpha: RiskLevel,
    sigma: Sigma,
) -> CertifiedRadius {
    let lower = bounds.lower(estimation_i1.successes(), estimation_i1.trials(), alpha);
    radius_mono(lower, sigma)
}

impl CpmCertificate {
    pub fn kind(&self) -> RadiusKind {
        self.radius.kind
    }
}
