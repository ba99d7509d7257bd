use smoothcert::intervals::{clopper_pearson_lower, clopper_pearson_upper, ln_upper_tail};
use smoothcert::{BinomialObservation, RiskLevel};
use statrs::function::gamma::ln_gamma;

/// `ln C(n, j)` for every `j`, from `ln_gamma`.
fn ln_choose_table(n: u64) -> Vec<f64> {
    let lg_n = ln_gamma(n as f64 + 1.0);
    (0..=n).map(|j| lg_n - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0)).collect()
}

/// `P(lo <= X <= hi)` by log-sum-exp over every term.
fn tail(table: &[f64], p: f64, lo: u64, hi: u64) -> f64 {
    let n = (table.len() - 1) as f64;
    let terms: Vec<f64> =
        (lo..=hi).map(|j| table[j as usize] + j as f64 * p.ln() + (n - j as f64) * (-p).ln_1p()).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()
}

fn bisect(mut f: impl FnMut(f64) -> bool) -> f64 {
    // f is true below the root
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn oracle_lower(table: &[f64], k: u64, alpha: f64) -> f64 {
    let n = (table.len() - 1) as u64;
    if k == 0 {
        return 0.0;
    }
    bisect(|p| tail(table, p, k, n) < alpha)
}

fn oracle_upper(table: &[f64], k: u64, alpha: f64) -> f64 {
    let n = (table.len() - 1) as u64;
    if k == n {
        return 1.0;
    }
    bisect(|p| tail(table, p, 0, k) > alpha)
}

#[test]
fn bounds_match_direct_summation() {
    for &n in &[10u64, 100, 1000] {
        let table = ln_choose_table(n);
        let ks: Vec<u64> = (0..20).map(|i| i * n / 19).collect();
        for &alpha in &[0.001, 0.05] {
            for &k in &ks {
                let obs = BinomialObservation::new(k, n).unwrap();
                let risk = RiskLevel::new(alpha).unwrap();
                let lo = clopper_pearson_lower(obs, risk).value;
                let up = clopper_pearson_upper(obs, risk).value;
                assert!((lo - oracle_lower(&table, k, alpha)).abs() < 1e-9, "lower k={k} n={n} alpha={alpha}");
                assert!((up - oracle_upper(&table, k, alpha)).abs() < 1e-9, "upper k={k} n={n} alpha={alpha}");
            }
        }
    }
}

#[test]
fn tail_matches_high_precision_values() {
    // P(X >= k), summed in 50-digit arithmetic
    let cases = [
        (3u64, 10u64, 0.2, 0.322_200_473_6),
        (700, 1000, 0.68, 0.092_565_664_387_221_16),
        (5, 1_000_000, 2e-6, 0.052_652_836_896_486_394),
        (9990, 10_000, 0.999, 0.583_039_760_629_257_4),
    ];
    for (k, n, p, expected) in cases {
        let ours = ln_upper_tail(k, n, p).exp();
        assert!((ours - expected).abs() <= 1e-12 * expected, "k={k} n={n}: {ours} vs {expected}");
    }
}

#[test]
fn large_n_stays_finite() {
    let risk = RiskLevel::new(0.001).unwrap();
    for &k in &[0u64, 1, 17, 500_000, 999_999, 1_000_000] {
        let obs = BinomialObservation::new(k, 1_000_000).unwrap();
        let lo = clopper_pearson_lower(obs, risk).value;
        let up = clopper_pearson_upper(obs, risk).value;
        assert!(lo.is_finite() && up.is_finite() && lo <= up, "k={k}: {lo} {up}");
    }
}
