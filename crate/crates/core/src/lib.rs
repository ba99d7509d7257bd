//! Certification toolkit for randomized smoothing.
//!
//! Exact Clopper-Pearson bounds, the class partitioning method for Bonferroni
//! risk allocation, standard and Lipschitz-adjusted certified radii, Monte Carlo
//! coverage experiments and product upper bounds on network Lipschitz constants.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod cpm;
pub mod error;
pub mod intervals;
pub mod lipschitz;
pub mod normal;
pub mod pub_bound;
pub mod quadrature;
pub mod radii;
pub mod roots;
pub mod sampling;

pub use error::{Error, Result};
pub use intervals::{BinomialObservation, BoundMethod, ConfidenceBound, RiskLevel, Side};
pub use lipschitz::{ExtremalSolution, LipschitzSpec, SmoothedPoint};
pub use normal::{Probability, Sigma};
pub use radii::{CertifiedRadius, RadiusKind, RadiusValue, TopTwoProbabilities};
