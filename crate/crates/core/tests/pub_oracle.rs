use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smoothcert::pub_bound::{
    layer_lipschitz, linear_network_true_lipschitz, pub_bound, spectral_norm_power_iteration, LayerSpec,
    PowerIterationOptions,
};

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn svd_norm(m: &DMatrix<f64>) -> (f64, f64) {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    (s[0], s.get(1).copied().unwrap_or(0.0))
}

#[test]
fn power_iteration_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = PowerIterationOptions::default();
    let mut checked = 0;
    while checked < 30 {
        let (r, c) = (rng.random_range(2..=80), rng.random_range(2..=80));
        let m = gaussian_matrix(r, c, &mut rng);
        let (s1, s2) = svd_norm(&m);
        if (s1 - s2) / s1 < 1e-3 {
            continue;
        }
        let est = spectral_norm_power_iteration(&m, opts).unwrap();
        assert!((est.value - s1).abs() <= 1e-6 * s1, "{r}x{c}: {} vs {s1}", est.value);
        checked += 1;
    }
}

#[test]
fn pub_dominates_true_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = PowerIterationOptions::default();
    for _ in 0..20 {
        let depth = rng.random_range(1..6);
        let mut widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..12)).collect();
        widths[0] = widths[0].max(2);
        let layers: Vec<LayerSpec> =
            (0..depth).map(|i| LayerSpec::dense(gaussian_matrix(widths[i + 1], widths[i], &mut rng))).collect();
        let bound = pub_bound(&layers, opts).unwrap();
        let truth = linear_network_true_lipschitz(&layers, opts).unwrap();
        assert!(truth.log_norm <= bound.log_pub + 1e-9);
        // shallow chains are representable, so the log-space fold must agree with the direct product
        let direct: f64 = bound.per_layer.iter().map(|l| l.lipschitz).product();
        assert!((bound.value().unwrap() - direct).abs() <= 1e-12 * direct);
        let product = layers.iter().fold(DMatrix::identity(widths[0], widths[0]), |acc, l| match l {
            LayerSpec::Dense { matrix } => matrix * acc,
            _ => unreachable!(),
        });
        let (s1, _) = svd_norm(&product);
        assert!((truth.value() - s1).abs() <= 1e-6 * s1.max(1e-300));
    }
}

#[test]
fn batchnorm_bound_matches_finite_difference_probe() {
    let gamma = vec![0.5, -2.0, 1.5, 0.1];
    let var = vec![0.2, 3.0, 0.01, 0.0];
    let eps = 1e-3;
    let layer = LayerSpec::Batchnorm { gamma: gamma.clone(), running_var: var.clone(), eps };
    let bound = layer_lipschitz(&layer, PowerIterationOptions::default()).unwrap().0;
    let scale = DVector::from_iterator(4, gamma.iter().zip(&var).map(|(g, v)| g / (v + eps).sqrt()));
    let apply = |x: &DVector<f64>| x.component_mul(&scale).add_scalar(0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut best: f64 = 0.0;
    for _ in 0..20_000 {
        let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal)) * 1e-3;
        let ratio = (apply(&(&x + &d)) - apply(&x)).norm() / d.norm();
        assert!(ratio <= bound * (1.0 + 1e-9));
        best = best.max(ratio);
    }
    assert!(best > 0.9 * bound);
}
