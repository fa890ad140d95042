//! Discrepancies between weighted empirical representation distributions.
//!
//! Both arms of a batch become [`WeightedSample`]s (representations plus
//! balancing weights). The weights are self-normalized inside every
//! discrepancy, so scaling one sample's weights leaves the value unchanged.

mod exact;
mod mmd;
mod sinkhorn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

pub use exact::{exact_ot_cost, exact_ot_plan, EXACT_OT_MAX_CELLS};
pub use mmd::{weighted_mmd2, weighted_mmd2_gradient, Kernel, MmdEstimate};
pub use sinkhorn::{sinkhorn_wasserstein, sinkhorn_wasserstein_gradient, KERNEL_FLOOR};

pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_SINKHORN_ITERATIONS: usize = 10;
pub const DEFAULT_RBF_SIGMA: f64 = 0.1;

/// Points with nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    pub points: DenseMatrix,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(points: DenseMatrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points with {} weights",
                points.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::EmptySample);
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: DenseMatrix) -> Result<Self> {
        let n = points.rows();
        Self::new(points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights divided by their total.
    pub fn probabilities(&self) -> Vec<f64> {
        let s = self.total_weight();
        self.weights.iter().map(|w| w / s).collect()
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "samples live in {} and {} dimensions",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Which discrepancy to use as the balance regularizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IpmSpec {
    /// Entropic Wasserstein via `iterations` Sinkhorn-Knopp steps.
    SinkhornWasserstein { lambda: f64, iterations: usize },
    /// Squared MMD with the linear kernel.
    MmdLinear,
    /// Squared MMD with `k(r, s) = exp(-|r - s|^2 / sigma^2)`.
    MmdRbf { sigma: f64 },
}

impl Default for IpmSpec {
    fn default() -> Self {
        IpmSpec::SinkhornWasserstein {
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_SINKHORN_ITERATIONS,
        }
    }
}

/// Value of a discrepancy and its gradient with respect to both point sets.
#[derive(Clone, Debug)]
pub struct IpmGradient {
    pub value: f64,
    pub grad_a: DenseMatrix,
    pub grad_b: DenseMatrix,
    /// Set when an MMD within-group term was undefined and taken as zero.
    pub degenerate: bool,
}

impl IpmSpec {
    pub fn wass() -> Self {
        Self::default()
    }

    pub fn mmd_rbf() -> Self {
        IpmSpec::MmdRbf {
            sigma: DEFAULT_RBF_SIGMA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IpmSpec::SinkhornWasserstein { .. } => "wass",
            IpmSpec::MmdLinear => "mmd-lin",
            IpmSpec::MmdRbf { .. } => "mmd-rbf",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IpmSpec::SinkhornWasserstein { lambda, iterations } => {
                if !(lambda > 0.0 && lambda.is_finite()) || iterations == 0 {
                    return Err(Error::Config(format!(
                        "Sinkhorn needs lambda > 0 and at least one iteration (got {lambda}, {iterations})"
                    )));
                }
            }
            IpmSpec::MmdRbf { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("RBF bandwidth {sigma} must be positive")));
                }
            }
            IpmSpec::MmdLinear => {}
        }
        Ok(())
    }

    /// Discrepancy value only. For MMD this is squared MMD.
    pub fn value(&self, a: &WeightedSample, b: &WeightedSample) -> Result<f64> {
        match *self {
            IpmSpec::SinkhornWasserstein { lambda, iterations } => {
                sinkhorn_wasserstein(lambda, iterations, a, b)
            }
            IpmSpec::MmdLinear => weighted_mmd2(Kernel::Linear, a, b).map(|m| m.value),
            IpmSpec::MmdRbf { sigma } => weighted_mmd2(Kernel::Rbf { sigma }, a, b).map(|m| m.value),
        }
    }

    /// Value and gradient with respect to every coordinate of both point
    /// sets. Weights are treated as constants.
    pub fn gradient(&self, a: &WeightedSample, b: &WeightedSample) -> Result<IpmGradient> {
        match *self {
            IpmSpec::SinkhornWasserstein { lambda, iterations } => {
                let (value, grad_a, grad_b) =
                    sinkhorn_wasserstein_gradient(lambda, iterations, a, b)?;
                Ok(IpmGradient {
                    value,
                    grad_a,
                    grad_b,
                    degenerate: false,
                })
            }
            IpmSpec::MmdLinear => mmd_gradient(Kernel::Linear, a, b),
            IpmSpec::MmdRbf { sigma } => mmd_gradient(Kernel::Rbf { sigma }, a, b),
        }
    }
}

fn mmd_gradient(kernel: Kernel, a: &WeightedSample, b: &WeightedSample) -> Result<IpmGradient> {
    let (est, grad_a, grad_b) = weighted_mmd2_gradient(kernel, a, b)?;
    Ok(IpmGradient {
        value: est.value,
        grad_a,
        grad_b,
        degenerate: est.degenerate,
    })
}

impl fmt::Display for IpmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IpmSpec::SinkhornWasserstein { lambda, iterations } => {
                write!(f, "wass(lambda={lambda},S={iterations})")
            }
            IpmSpec::MmdLinear => f.write_str("mmd-lin"),
            IpmSpec::MmdRbf { sigma } => write!(f, "mmd-rbf(sigma={sigma})"),
        }
    }
}

impl FromStr for IpmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.trim().to_ascii_lowercase().as_str() {
            "wass" => IpmSpec::wass(),
            "mmd-lin" => IpmSpec::MmdLinear,
            "mmd-rbf" => IpmSpec::mmd_rbf(),
            other => return Err(Error::Config(format!("unknown IPM '{other}'"))),
        };
        Ok(spec)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum IpmRepr {
    Name(String),
    Detailed {
        kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iterations: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
}

impl Serialize for IpmSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match *self {
            IpmSpec::SinkhornWasserstein { lambda, iterations } => IpmRepr::Detailed {
                kind: "wass".into(),
                lambda: Some(lambda),
                iterations: Some(iterations),
                sigma: None,
            },
            IpmSpec::MmdLinear => IpmRepr::Name("mmd-lin".into()),
            IpmSpec::MmdRbf { sigma } => IpmRepr::Detailed {
                kind: "mmd-rbf".into(),
                lambda: None,
                iterations: None,
                sigma: Some(sigma),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IpmSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = match IpmRepr::deserialize(d)? {
            IpmRepr::Name(n) => n.parse().map_err(serde::de::Error::custom)?,
            IpmRepr::Detailed {
                kind,
                lambda,
                iterations,
                sigma,
            } => match kind.to_ascii_lowercase().as_str() {
                "wass" => IpmSpec::SinkhornWasserstein {
                    lambda: lambda.unwrap_or(DEFAULT_LAMBDA),
                    iterations: iterations.unwrap_or(DEFAULT_SINKHORN_ITERATIONS),
                },
                "mmd-lin" => IpmSpec::MmdLinear,
                "mmd-rbf" => IpmSpec::MmdRbf {
                    sigma: sigma.unwrap_or(DEFAULT_RBF_SIGMA),
                },
                other => return Err(serde::de::Error::custom(format!("unknown IPM '{other}'"))),
            },
        };
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}
