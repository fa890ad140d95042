//! Tilting functions `f(e)` and the balancing weights
//! `w(x, t) = f(e(x)) / (t e(x) + (1 - t)(1 - e(x)))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;
use crate::propensity::PropensityModel;

pub const DEFAULT_XI: f64 = 0.1;

/// Weighting scheme, named in configuration files as `"ipw"`, `"truncipw"`,
/// `"mw"`, `"ow"` or `"uniform"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightScheme {
    /// Inverse probability weights, `f = 1`.
    Ipw,
    /// Truncated IPW, `f = 1{xi < e < 1 - xi}`.
    TruncIpw { xi: f64 },
    /// Matching weights, `f = min(e, 1 - e)`.
    Mw,
    /// Overlap weights, `f = e (1 - e)`.
    Ow,
    /// No weighting: every unit gets weight 1.
    Uniform,
}

impl WeightScheme {
    pub const PROPENSITY_SCHEMES: [WeightScheme; 4] = [
        WeightScheme::Ipw,
        WeightScheme::TruncIpw { xi: DEFAULT_XI },
        WeightScheme::Mw,
        WeightScheme::Ow,
    ];

    pub fn truncipw() -> Self {
        WeightScheme::TruncIpw { xi: DEFAULT_XI }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Ipw => "ipw",
            WeightScheme::TruncIpw { .. } => "truncipw",
            WeightScheme::Mw => "mw",
            WeightScheme::Ow => "ow",
            WeightScheme::Uniform => "uniform",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let WeightScheme::TruncIpw { xi } = *self {
            if !(xi > 0.0 && xi < 0.5) {
                return Err(Error::Config(format!("truncation xi = {xi} must lie in (0, 0.5)")));
            }
        }
        Ok(())
    }

    /// Tilting function `f(e)`; always in `[0, 1]`. Defined on the closed
    /// interval so saturated true propensities can still be tilted.
    pub fn tilting(&self, e: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::Domain(format!("propensity {e} outside [0, 1]")));
        }
        Ok(match *self {
            WeightScheme::Ipw | WeightScheme::Uniform => 1.0,
            WeightScheme::TruncIpw { xi } => {
                if xi < e && e < 1.0 - xi {
                    1.0
                } else {
                    0.0
                }
            }
            WeightScheme::Mw => e.min(1.0 - e),
            WeightScheme::Ow => e * (1.0 - e),
        })
    }

    /// Balancing weight for a unit with propensity `e` in arm `t`.
    pub fn balancing_weight(&self, e: f64, treated: bool) -> Result<f64> {
        if *self == WeightScheme::Uniform {
            check_propensity(e)?;
            return Ok(1.0);
        }
        check_propensity(e)?;
        let f = self.tilting(e)?;
        let denom = if treated { e } else { 1.0 - e };
        Ok(f / denom)
    }

    pub fn weights_from_propensity(&self, e: &[f64], t: &[bool]) -> Result<Vec<f64>> {
        if e.len() != t.len() {
            return Err(Error::Shape(format!(
                "{} propensities for {} treatments",
                e.len(),
                t.len()
            )));
        }
        e.iter()
            .zip(t)
            .map(|(&e, &t)| self.balancing_weight(e, t))
            .collect()
    }

    pub fn tilts_from_propensity(&self, e: &[f64]) -> Result<Vec<f64>> {
        e.iter().map(|&e| self.tilting(e)).collect()
    }
}

fn check_propensity(e: f64) -> Result<()> {
    if e > 0.0 && e < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("propensity {e} outside (0, 1)")))
    }
}

/// `w(X_i, T_i)` for every row, computed through the propensity model.
pub fn batch_weights(
    scheme: WeightScheme,
    model: &PropensityModel,
    x: &DenseMatrix,
    t: &[bool],
) -> Result<Vec<f64>> {
    if x.rows() != t.len() {
        return Err(Error::Shape(format!(
            "{} covariate rows for {} treatments",
            x.rows(),
            t.len()
        )));
    }
    if scheme == WeightScheme::Uniform {
        return Ok(vec![1.0; t.len()]);
    }
    let e = model.predict(x)?;
    scheme.weights_from_propensity(&e, t)
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WeightScheme::TruncIpw { xi } if xi != DEFAULT_XI => write!(f, "truncipw:{xi}"),
            s => f.write_str(s.name()),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, param) = match lower.split_once(':') {
            Some((n, p)) => (n.to_string(), Some(p.to_string())),
            None => (lower, None),
        };
        let scheme = match (name.as_str(), param) {
            ("ipw", None) => WeightScheme::Ipw,
            ("mw", None) => WeightScheme::Mw,
            ("ow", None) => WeightScheme::Ow,
            ("uniform", None) => WeightScheme::Uniform,
            ("truncipw", None) => WeightScheme::truncipw(),
            ("truncipw", Some(p)) => WeightScheme::TruncIpw {
                xi: p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad truncation level '{p}'")))?,
            },
            _ => return Err(Error::Config(format!("unknown weight scheme '{s}'"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SchemeRepr {
    Name(String),
    Detailed { kind: String, xi: Option<f64> },
}

impl Serialize for WeightScheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            WeightScheme::TruncIpw { xi } if xi != DEFAULT_XI => SchemeRepr::Detailed {
                kind: "truncipw".into(),
                xi: Some(xi),
            },
            other => SchemeRepr::Name(other.name().into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightScheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let scheme = match SchemeRepr::deserialize(d)? {
            SchemeRepr::Name(n) => n.parse(),
            SchemeRepr::Detailed { kind, xi } => match (kind.to_ascii_lowercase().as_str(), xi) {
                ("truncipw", Some(xi)) => {
                    let s = WeightScheme::TruncIpw { xi };
                    s.validate().map(|_| s)
                }
                (_, None) => kind.parse(),
                (k, Some(_)) => Err(Error::Config(format!("scheme '{k}' takes no xi"))),
            },
        };
        scheme.map_err(serde::de::Error::custom)
    }
}
