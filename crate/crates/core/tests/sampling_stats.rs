use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smoothcert::sampling::{
    collect_counts, collect_two_phase, lipschitz_1d_oracle, multinomial_sample, MultinomialOracle, Round,
    SamplingConfig, StreamId,
};
use smoothcert::{Probability, Sigma};

/// 0.999 quantile of chi-square with 3 degrees of freedom.
const CHI2_3_999: f64 = 16.266_236_196_238_13;

#[test]
fn frequencies_follow_law_of_large_numbers() {
    let p = [0.5, 0.3, 0.2];
    let oracle = MultinomialOracle::new(p.to_vec()).unwrap();
    let m = 100_000u64;
    let counts = collect_counts(&oracle, 0, Round { size: m, seed: 11, stream: StreamId(0), batch: 4096 }).unwrap();
    for (i, &pi) in p.iter().enumerate() {
        let freq = counts.get(i) as f64 / m as f64;
        let band = 6.0 * (pi * (1.0 - pi) / m as f64).sqrt();
        assert!((freq - pi).abs() < band.min(0.01), "class {i}: {freq}");
    }
}

#[test]
fn uniform_draws_pass_chi_square() {
    let oracle = MultinomialOracle::new(vec![0.25; 4]).unwrap();
    let m = 1_000_000u64;
    let counts = collect_counts(&oracle, 0, Round { size: m, seed: 3, stream: StreamId(8), batch: 65_536 }).unwrap();
    let expected = m as f64 / 4.0;
    let chi2: f64 = counts.counts().iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < CHI2_3_999, "chi2 = {chi2}");
}

#[test]
fn inverse_cdf_sampler_binary_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let m = 100_000;
    let hits = (0..m).filter(|_| multinomial_sample(&[0.9, 0.1], &mut rng).unwrap() == 0).count();
    assert!((hits as f64 / m as f64 - 0.9).abs() < 0.006);
}

#[test]
fn phases_are_independent_by_permutation_test() {
    // correlation of the top-class count across phases, against its permutation null
    let oracle = MultinomialOracle::new(vec![0.6, 0.3, 0.1]).unwrap();
    let config = SamplingConfig::new(100, 400, Sigma::new(0.5).unwrap(), 2024, 64).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..300)
        .map(|id| {
            let (sel, est) = collect_two_phase(&oracle, id, &config).unwrap();
            (sel.get(0) as f64, est.get(0) as f64)
        })
        .unzip();
    let corr = |x: &[f64], y: &[f64]| {
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    };
    let observed = corr(&xs, &ys).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut shuffled = ys.clone();
    let trials = 2000;
    let mut extreme = 0;
    for _ in 0..trials {
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        if corr(&xs, &shuffled).abs() >= observed {
            extreme += 1;
        }
    }
    let p_value = (extreme + 1) as f64 / (trials + 1) as f64;
    assert!(p_value > 0.001, "p = {p_value}, corr = {observed}");
}

#[test]
fn extremal_oracle_monte_carlo_matches_target() {
    let sigma = Sigma::new(0.5).unwrap();
    let mut pairs = Vec::new();
    for &l in &[0.2, 1.0, 4.0, 25.0] {
        for &p in &[0.05, 0.3, 0.5, 0.8, 0.97] {
            pairs.push((l, p));
        }
    }
    assert_eq!(pairs.len(), 20);
    for (i, &(l, p)) in pairs.iter().enumerate() {
        let f = lipschitz_1d_oracle(l, Probability::new(p).unwrap(), sigma).unwrap();
        let (mean, se) = f.monte_carlo_mean(0.0, 100_000, 17, StreamId(i as u64));
        assert!((mean - p).abs() < 6.0 * se.max(1e-12), "L={l} p={p}: {mean} +- {se}");
        assert!((f.smoothed_value(0.0) - p).abs() < 1e-10);
    }
    let f = lipschitz_1d_oracle(4.0, Probability::new(0.7).unwrap(), sigma).unwrap();
    let (mean, se) = f.monte_carlo_mean(0.0, 1_000_000, 1, StreamId(99));
    assert!((mean - 0.7).abs() < 6.0 * se);
}

#[test]
fn extremal_oracle_is_lipschitz_in_input_units() {
    let f = lipschitz_1d_oracle(3.0, Probability::new(0.4).unwrap(), Sigma::new(0.25).unwrap()).unwrap();
    let lip = f.lipschitz_input_units();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let x: f64 = rand::Rng::random_range(&mut rng, -2.0..2.0);
        let y: f64 = rand::Rng::random_range(&mut rng, -2.0..2.0);
        assert!((f.soft_value(x) - f.soft_value(y)).abs() <= lip * (x - y).abs() * (1.0 + 1e-12) + 1e-15);
    }
}
