//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smoothcert::cpm::ClassCounts;
use smoothcert::pub_bound::DMatrix;
use smoothcert::sampling::{Multinomial, NoiseSource, StreamId};

/// Selection and estimation counts drawn from a 0.8 / 0.15 / 0.04 profile spread over `classes`.
pub fn concentrated_rounds(classes: usize, seed: u64) -> (ClassCounts, ClassCounts) {
    let mut p = vec![0.01 / (classes - 3) as f64; classes];
    p[..3].copy_from_slice(&[0.8, 0.15, 0.04]);
    let dist = Multinomial::new(p).expect("valid profile");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selection = ClassCounts::new(dist.sample_counts(100, &mut rng)).expect("nonempty");
    let estimation = ClassCounts::new(dist.sample_counts(10_000, &mut rng)).expect("nonempty");
    (selection, estimation)
}

/// Square matrix with standard normal entries.
pub fn gaussian_matrix(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut source = NoiseSource::new(seed, StreamId(0));
    DMatrix::from_fn(dim, dim, |_, _| source.next_draw().gaussian())
}
