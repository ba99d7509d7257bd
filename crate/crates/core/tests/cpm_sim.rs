use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smoothcert::coverage::{run_coverage_with, CoverageEvent, CoverageExperiment, Procedure, Verdict};
use smoothcert::cpm::{build_partition, certify_bonferroni_with, certify_cpm_with, ClassCounts};
use smoothcert::intervals::{BinomialBounds, CachedBounds};
use smoothcert::sampling::Multinomial;
use smoothcert::{RiskLevel, Sigma};

fn concentrated(c: usize) -> Vec<f64> {
    let mut p = vec![0.01 / (c - 3) as f64; c];
    p[0] = 0.8;
    p[1] = 0.15;
    p[2] = 0.04;
    p
}

#[test]
fn concentrated_thousand_classes_partition_small_and_beat_bonferroni() {
    let dist = Multinomial::new(concentrated(1000)).unwrap();
    let bounds = CachedBounds::new();
    let alpha = RiskLevel::new(0.001).unwrap();
    let sigma = Sigma::new(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut in_range, mut cpm_radii, mut bonf_radii) = (0, Vec::new(), Vec::new());
    let runs = 200;
    for _ in 0..runs {
        let initial = ClassCounts::new(dist.sample_counts(100, &mut rng)).unwrap();
        let estimation = ClassCounts::new(dist.sample_counts(10_000, &mut rng)).unwrap();
        let cpm = certify_cpm_with(&bounds, &initial, &estimation, alpha, sigma).unwrap();
        let bonf = certify_bonferroni_with(&bounds, &estimation, alpha.split(1000), sigma).unwrap();
        in_range += usize::from((3..=5).contains(&cpm.partition.c_star));
        cpm_radii.push(cpm.radius.value_or_zero());
        bonf_radii.push(bonf.radius.value_or_zero());
    }
    assert!(in_range as f64 >= 0.9 * runs as f64, "{in_range}/{runs}");
    cpm_radii.sort_by(f64::total_cmp);
    bonf_radii.sort_by(f64::total_cmp);
    assert!(cpm_radii[runs / 2] > bonf_radii[runs / 2]);
}

#[test]
fn cpm_radius_coverage_ten_and_hundred_classes() {
    let bounds = CachedBounds::new();
    for &c in &[10usize, 100] {
        let mut p = vec![0.2 / (c - 2) as f64; c];
        p[0] = 0.55;
        p[1] = 0.25;
        let exp = CoverageExperiment {
            true_p: p,
            n: 10_000,
            n0: 100,
            alpha: RiskLevel::new(0.05).unwrap(),
            procedure: Procedure::Cpm,
            replications: 20_000,
            seed: 5,
            sigma: Sigma::new(1.0).unwrap(),
            event: CoverageEvent::Radius,
        };
        let report = run_coverage_with(&bounds, &exp).unwrap();
        assert_ne!(report.verdict, Verdict::Undercovers, "c={c}: {}", report.failure_rate);
    }
}

#[test]
fn meta_bucket_bound_covers_each_member() {
    let p = {
        let mut p = vec![0.5, 0.2];
        p.extend(std::iter::repeat_n(0.3 / 30.0, 30));
        p
    };
    let dist = Multinomial::new(p.clone()).unwrap();
    let bounds = CachedBounds::new();
    let alpha = RiskLevel::new(0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut checked, mut misses) = (0u64, 0u64);
    for _ in 0..20_000 {
        let initial = ClassCounts::new(dist.sample_counts(100, &mut rng)).unwrap();
        let estimation = ClassCounts::new(dist.sample_counts(2000, &mut rng)).unwrap();
        let partition = build_partition(&initial);
        if partition.meta_class.is_empty() {
            continue;
        }
        let ap = alpha.split(partition.c_star);
        let k: u64 = partition.meta_class.iter().map(|&i| estimation.get(i)).sum();
        let upper = bounds.upper(k, estimation.total(), ap);
        let worst_member = partition.meta_class.iter().map(|&i| p[i]).fold(0.0, f64::max);
        checked += 1;
        misses += u64::from(upper < worst_member);
    }
    assert!(checked > 10_000);
    // each miss implies the bucket bound missed the bucket mass, which has risk at most alpha / c*
    assert!((misses as f64) / (checked as f64) <= 0.05 / 3.0);
}
