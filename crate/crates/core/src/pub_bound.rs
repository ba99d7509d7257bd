//! Product upper bound (PUB) on a network's Lipschitz constant.
//!
//! Per-layer bounds are folded in log space so deep chains neither overflow nor underflow.

pub use nalgebra::DMatrix;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Weight matrix, serialized as a list of rows; acts as `x -> W x`.
    Dense {
        #[serde(serialize_with = "ser_rows", deserialize_with = "de_rows")]
        matrix: DMatrix<f64>,
    },
    /// A layer whose operator norm was computed elsewhere (e.g. a convolution).
    Norm {
        value: f64,
    },
    Batchnorm {
        gamma: Vec<f64>,
        running_var: Vec<f64>,
        eps: f64,
    },
    Pooling,
    Activation,
    Residual {
        main: Vec<LayerSpec>,
    },
}

fn ser_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn de_rows<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
    let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(serde::de::Error::custom("dense matrix must be nonempty"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(serde::de::Error::custom("dense matrix rows have unequal lengths"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

impl LayerSpec {
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        LayerSpec::Dense { matrix }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 10_000, seed: 0 }
    }
}

/// Consecutive small relative changes required to declare convergence.
const STABLE_STEPS: usize = 3;
/// Estimates averaged when the iteration does not converge.
const FALLBACK_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn check_finite(matrix: &DMatrix<f64>) -> Result<()> {
    if matrix.is_empty() || matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("matrix must be nonempty and finite".into()));
    }
    if matrix.iter().all(|&x| x == 0.0) {
        return Err(Error::Config("matrix is zero".into()));
    }
    Ok(())
}

/// Largest singular value by alternating products with `A` and `A^T`.
pub fn spectral_norm_power_iteration(matrix: &DMatrix<f64>, opts: PowerIterationOptions) -> Result<SpectralEstimate> {
    check_finite(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DVector::from_fn(matrix.ncols(), |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();

    let mut history: Vec<f64> = Vec::with_capacity(FALLBACK_WINDOW);
    let mut previous = f64::NAN;
    let mut stable = 0;
    for iter in 1..=opts.max_iters {
        let u = matrix * &v;
        let u_norm = u.norm();
        if u_norm == 0.0 {
            // the start vector hit the null space; perturb deterministically
            v = DVector::from_fn(matrix.ncols(), |i, _| 1.0 + i as f64);
            v /= v.norm();
            continue;
        }
        let w = matrix.transpose() * (u / u_norm);
        let estimate = w.norm();
        v = w / estimate;

        if history.len() == FALLBACK_WINDOW {
            history.remove(0);
        }
        history.push(estimate);
        if (estimate - previous).abs() <= opts.tol * estimate {
            stable += 1;
            if stable >= STABLE_STEPS {
                return Ok(SpectralEstimate { value: estimate, converged: true, iterations: iter });
            }
        } else {
            stable = 0;
        }
        previous = estimate;
    }
    let value = history.iter().sum::<f64>() / history.len().max(1) as f64;
    Ok(SpectralEstimate { value, converged: false, iterations: opts.max_iters })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBound {
    pub index: usize,
    pub lipschitz: f64,
    pub converged: bool,
}

fn batchnorm_bound(gamma: &[f64], running_var: &[f64], eps: f64) -> Result<f64> {
    if gamma.len() != running_var.len() || gamma.is_empty() {
        return Err(Error::Config("batchnorm gamma and running_var must be nonempty and equally long".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("batchnorm eps must be positive, got {eps}")));
    }
    if running_var.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Config("batchnorm parameters must be finite with nonnegative variance".into()));
    }
    Ok(gamma.iter().zip(running_var).map(|(g, v)| (g / (v + eps).sqrt()).abs()).fold(0.0, f64::max))
}

/// Lipschitz bound of one layer and whether every power iteration inside it converged.
pub fn layer_lipschitz(layer: &LayerSpec, opts: PowerIterationOptions) -> Result<(f64, bool)> {
    match layer {
        LayerSpec::Dense { matrix } => {
            let est = spectral_norm_power_iteration(matrix, opts)?;
            Ok((est.value, est.converged))
        }
        LayerSpec::Norm { value } => {
            if value.is_finite() && *value >= 0.0 {
                Ok((*value, true))
            } else {
                Err(Error::Config(format!("precomputed norm must be finite and nonnegative, got {value}")))
            }
        }
        LayerSpec::Batchnorm { gamma, running_var, eps } => Ok((batchnorm_bound(gamma, running_var, *eps)?, true)),
        LayerSpec::Pooling | LayerSpec::Activation => Ok((1.0, true)),
        LayerSpec::Residual { main } => {
            let mut product = 1.0;
            let mut converged = true;
            for inner in main {
                let (l, c) = layer_lipschitz(inner, opts)?;
                product *= l;
                converged &= c;
            }
            Ok((1.0 + product, converged))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PubResult {
    /// Natural log of the product of per-layer bounds.
    pub log_pub: f64,
    pub per_layer: Vec<LayerBound>,
}

impl PubResult {
    /// The product itself, or `None` when it is not representable as a finite `f64`.
    pub fn value(&self) -> Option<f64> {
        let v = self.log_pub.exp();
        (v.is_finite() && v > 0.0).then_some(v)
    }

    pub fn converged(&self) -> bool {
        self.per_layer.iter().all(|l| l.converged)
    }
}

pub fn pub_bound(layers: &[LayerSpec], opts: PowerIterationOptions) -> Result<PubResult> {
    if layers.is_empty() {
        return Err(Error::Config("layer list is empty".into()));
    }
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut log_pub = 0.0;
    for (index, layer) in layers.iter().enumerate() {
        let (lipschitz, converged) = layer_lipschitz(layer, opts)?;
        if !(lipschitz > 0.0) {
            return Err(Error::Config(format!("layer {index} has nonpositive Lipschitz bound {lipschitz}")));
        }
        log_pub += lipschitz.ln();
        per_layer.push(LayerBound { index, lipschitz, converged });
    }
    Ok(PubResult { log_pub, per_layer })
}

/// Spectral norm of an end-to-end linear map, kept as `exp(log_norm)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainNorm {
    pub log_norm: f64,
    pub converged: bool,
}

impl ChainNorm {
    pub fn value(&self) -> f64 {
        self.log_norm.exp()
    }
}

/// Spectral norm of `W_k ... W_1` for a chain of dense layers applied in order.
///
/// The running product is rescaled after every factor and the scale kept in log space.
pub fn linear_network_true_lipschitz(layers: &[LayerSpec], opts: PowerIterationOptions) -> Result<ChainNorm> {
    let mut acc: Option<DMatrix<f64>> = None;
    let mut log_scale = 0.0;
    for (index, layer) in layers.iter().enumerate() {
        let LayerSpec::Dense { matrix } = layer else {
            return Err(Error::Config(format!("layer {index} is not dense")));
        };
        check_finite(matrix)?;
        let next = match acc {
            None => matrix.clone(),
            Some(prev) => {
                if matrix.ncols() != prev.nrows() {
                    return Err(Error::Config(format!(
                        "layer {index} expects {} inputs but receives {}",
                        matrix.ncols(),
                        prev.nrows()
                    )));
                }
                matrix * prev
            }
        };
        let scale = next.norm();
        if scale == 0.0 {
            return Ok(ChainNorm { log_norm: f64::NEG_INFINITY, converged: true });
        }
        log_scale += scale.ln();
        acc = Some(next / scale);
    }
    let product = acc.ok_or_else(|| Error::Config("layer list is empty".into()))?;
    let est = spectral_norm_power_iteration(&product, opts)?;
    Ok(ChainNorm { log_norm: log_scale + est.value.ln(), converged: est.converged })
}

/// Negative slope of the leaky rectifier used to derive the default gain of linear layers.
pub const DEFAULT_KAIMING_SLOPE: f64 = 2.236_067_977_499_79;

/// Dense chain `input -> hidden -> ... -> hidden -> output` of `depth` layers with
/// Kaiming-uniform weights: `U(-b, b)`, `b = gain sqrt(3 / fan_in)`, `gain = sqrt(2 / (1 + a^2))`.
///
/// With `a = sqrt(5)` this is the common default initialization of linear layers, `b = 1 / sqrt(fan_in)`.
pub fn kaiming_uniform_chain(
    depth: usize,
    input: usize,
    hidden: usize,
    output: usize,
    slope: f64,
    seed: u64,
) -> Result<Vec<LayerSpec>> {
    if depth == 0 || input == 0 || hidden == 0 || output == 0 {
        return Err(Error::Config("depth and widths must be positive".into()));
    }
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let fan_in = if i == 0 { input } else { hidden };
        let fan_out = if i + 1 == depth { output } else { hidden };
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let dist = Uniform::new(-bound, bound).map_err(|e| Error::Config(e.to_string()))?;
        let matrix = DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(&mut rng));
        layers.push(LayerSpec::Dense { matrix });
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> PowerIterationOptions {
        PowerIterationOptions::default()
    }

    #[test]
    fn diagonal_and_identity() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let est = spectral_norm_power_iteration(&d, opts()).unwrap();
        assert!(est.converged);
        assert!((est.value - 3.0).abs() < 1e-10);
        let est = spectral_norm_power_iteration(&DMatrix::identity(5, 5), opts()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-14);
        assert!(spectral_norm_power_iteration(&DMatrix::zeros(3, 3), opts()).is_err());
    }

    #[test]
    fn nonconvergence_averages_window() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let est = spectral_norm_power_iteration(&d, PowerIterationOptions { max_iters: 2, ..opts() }).unwrap();
        assert!(!est.converged);
        assert!(est.value <= 1.0 + 1e-15 && est.value > 0.5);
    }

    #[test]
    fn deterministic_under_seed() {
        let m = DMatrix::from_fn(7, 4, |i, j| ((i * 4 + j) as f64).sin());
        let a = spectral_norm_power_iteration(&m, opts()).unwrap();
        let b = spectral_norm_power_iteration(&m, opts()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layer_rules() {
        let bn = LayerSpec::Batchnorm { gamma: vec![2.0, -3.0], running_var: vec![0.0, 8.0], eps: 1.0 };
        assert_eq!(layer_lipschitz(&bn, opts()).unwrap().0, 2.0);
        assert_eq!(layer_lipschitz(&LayerSpec::Pooling, opts()).unwrap().0, 1.0);
        let residual = LayerSpec::Residual { main: vec![LayerSpec::Norm { value: 1.5 }] };
        assert_eq!(layer_lipschitz(&residual, opts()).unwrap().0, 2.5);
        let bad = LayerSpec::Batchnorm { gamma: vec![1.0], running_var: vec![-1.0], eps: 1.0 };
        assert!(layer_lipschitz(&bad, opts()).is_err());
    }

    #[test]
    fn pub_of_doubling_chain() {
        let layers = vec![LayerSpec::Norm { value: 2.0 }; 110];
        let r = pub_bound(&layers, opts()).unwrap();
        assert!((r.log_pub - 110.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(pub_bound(&[], opts()).is_err());
        assert!(pub_bound(&[LayerSpec::Norm { value: 0.0 }], opts()).is_err());
        let single = pub_bound(&[LayerSpec::dense(DMatrix::identity(4, 4))], opts()).unwrap();
        assert!((single.value().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn looseness_contrast_case() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.1]);
        let b = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 2.0]);
        let layers = vec![LayerSpec::dense(b), LayerSpec::dense(a)];
        let truth = linear_network_true_lipschitz(&layers, opts()).unwrap();
        assert!((truth.value() - 0.2).abs() < 1e-12);
        assert!((pub_bound(&layers, opts()).unwrap().value().unwrap() - 4.0).abs() < 1e-12);
        let mismatch = vec![LayerSpec::dense(DMatrix::identity(2, 3)), LayerSpec::dense(DMatrix::identity(2, 3))];
        assert!(linear_network_true_lipschitz(&mismatch, opts()).is_err());
    }

    #[test]
    fn orthogonal_chain_is_tight() {
        let (c, s) = (0.6, 0.8);
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let layers = vec![LayerSpec::dense(q.clone()), LayerSpec::dense(q.transpose() * &q * &q)];
        assert!((linear_network_true_lipschitz(&layers, opts()).unwrap().value() - 1.0).abs() < 1e-12);
        assert!(pub_bound(&layers, opts()).unwrap().log_pub.abs() < 1e-12);
    }

    #[test]
    fn layer_spec_json() {
        let json = r#"[{"kind": "dense", "matrix": [[1.0, 2.0], [3.0, 4.0]]}, {"kind": "pooling"},
            {"kind": "residual", "main": [{"kind": "norm", "value": 0.5}]}]"#;
        let layers: Vec<LayerSpec> = serde_json::from_str(json).unwrap();
        let LayerSpec::Dense { matrix } = &layers[0] else { panic!() };
        assert_eq!(matrix[(1, 0)], 3.0);
        let back: Vec<LayerSpec> = serde_json::from_str(&serde_json::to_string(&layers).unwrap()).unwrap();
        assert_eq!(back, layers);
        assert!(
            serde_json::from_str::<Vec<LayerSpec>>(r#"[{"kind": "dense", "matrix": [[1.0], [2.0, 3.0]]}]"#).is_err()
        );
    }

    #[test]
    fn kaiming_chain_shapes_and_bound() {
        let layers = kaiming_uniform_chain(4, 6, 5, 3, 5f64.sqrt(), 1).unwrap();
        let shapes: Vec<(usize, usize)> = layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense { matrix } => matrix.shape(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(shapes, vec![(5, 6), (5, 5), (5, 5), (3, 5)]);
        let LayerSpec::Dense { matrix } = &layers[0] else { unreachable!() };
        assert!(matrix.iter().all(|x| x.abs() <= 1.0 / 6f64.sqrt()));
        assert!((DEFAULT_KAIMING_SLOPE - 5f64.sqrt()).abs() < 1e-14);
    }
}
