//! Balancing-weights counterfactual regression.
//!
//! The crate is organized around the steps of the method:
//!
//! - [`numcore`]: dense matrices, fully-connected networks with exact
//!   reverse-mode gradients, and Adam.
//! - [`dataset`] and [`propensity`]: observational data and the design-stage
//!   propensity network `e(x) = sigmoid(s(x))`.
//! - [`weights`]: tilting functions and balancing weights (IPW, truncated IPW,
//!   matching weights, overlap weights, and an unweighted baseline).
//! - [`ipm`]: weighted MMD estimates and the unrolled Sinkhorn-Knopp
//!   Wasserstein approximation, both differentiable in the representations,
//!   plus an exact transport solver used as an oracle.
//! - [`cfr`]: encoder, outcome heads, proportion-preserving batches, the
//!   weighted objective and its training loop.
//! - [`synthgen`]: the equicorrelated-Gaussian toy benchmark.
//! - [`metrics`]: target-population PEHE, ATE, doubly-robust ATE and the
//!   nearest-neighbour PEHE proxy.
//! - [`theorycheck`]: exact verification of the balance bounds on finite
//!   covariate spaces.
//! - [`harness`]: configuration, CSV I/O, grid runs and reports.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cfr;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ipm;
pub mod metrics;
pub mod numcore;
pub mod propensity;
pub mod synthgen;
pub mod theorycheck;
pub mod weights;

pub use cfr::{CfrModel, TrainConfig};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use ipm::{IpmSpec, WeightedSample};
pub use numcore::{DenseMatrix, MlpParams};
pub use propensity::PropensityModel;
pub use weights::WeightScheme;

/// Deterministic 64-bit mixing (SplitMix64 finalizer) used to derive
/// independent seeds from structured keys.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
