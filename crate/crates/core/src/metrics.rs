//! Evaluation metrics over observed and tilted target populations.
//!
//! A tilting `f` defines the target `g(x) ∝ f(x) p(x)`, and every metric is
//! a self-normalized average over the sample with weights `f(X_i)`.

use serde::{Deserialize, Serialize};

use crate::cfr::CfrModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numcore::squared_euclidean;
use crate::propensity::PropensityModel;
use crate::weights::{batch_weights, WeightScheme};

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b} entries")));
    }
    Ok(())
}

fn tilted_mean(tilts: &[f64], values: impl Iterator<Item = f64>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, v) in tilts.iter().zip(values) {
        num += f * v;
        den += f;
    }
    if den <= 0.0 {
        return Err(Error::EmptyTarget);
    }
    Ok(num / den)
}

/// `sum f (tau - tau_hat)^2 / sum f`. Pass `f = 1` for the observed
/// population.
pub fn pehe(tilts: &[f64], tau_true: &[f64], tau_hat: &[f64]) -> Result<f64> {
    check_len(tilts.len(), tau_true.len(), "tilts and true effects")?;
    check_len(tau_true.len(), tau_hat.len(), "true and predicted effects")?;
    tilted_mean(tilts, tau_true.iter().zip(tau_hat).map(|(a, b)| (a - b).powi(2)))
}

/// `sum f tau_hat / sum f`.
pub fn ate_estimate(tilts: &[f64], tau_hat: &[f64]) -> Result<f64> {
    check_len(tilts.len(), tau_hat.len(), "tilts and effects")?;
    tilted_mean(tilts, tau_hat.iter().copied())
}

/// Weighted mean residual `h - Y` of each arm: `(b1, b0)`.
pub fn dr_corrections(weights: &[f64], t: &[bool], fitted: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_len(weights.len(), t.len(), "weights and treatments")?;
    check_len(fitted.len(), t.len(), "fitted values and treatments")?;
    check_len(y.len(), t.len(), "outcomes and treatments")?;
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for i in 0..t.len() {
        let a = t[i] as usize;
        num[a] += weights[i] * (fitted[i] - y[i]);
        den[a] += weights[i];
    }
    for arm in [1u8, 0] {
        if den[arm as usize] <= 0.0 {
            return Err(Error::ZeroMass(arm));
        }
    }
    Ok((num[1] / den[1], num[0] / den[0]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrAte {
    pub vanilla: f64,
    pub b1: f64,
    pub b0: f64,
    pub corrected: f64,
}

/// Doubly-robust ATE: the tilted mean of `tau_hat_eval`, corrected by the
/// weighted factual residuals of each arm on the training split.
pub fn dr_ate(
    model: &CfrModel,
    propensity: &PropensityModel,
    scheme: WeightScheme,
    train: &Dataset,
    tau_hat_eval: &[f64],
    tilts_eval: &[f64],
) -> Result<DrAte> {
    let vanilla = ate_estimate(tilts_eval, tau_hat_eval)?;
    let w = batch_weights(scheme, propensity, &train.x, &train.t)?;
    let fitted = model.predict_factual(&train.x, &train.t)?;
    let (b1, b0) = dr_corrections(&w, &train.t, &fitted, &train.y)?;
    Ok(DrAte {
        vanilla,
        b1,
        b0,
        corrected: vanilla - b1 + b0,
    })
}

/// Index of each unit's nearest neighbour in the opposite arm; ties go to
/// the lowest index.
pub fn nearest_opposite(x: &crate::numcore::DenseMatrix, t: &[bool]) -> Result<Vec<usize>> {
    check_len(x.rows(), t.len(), "covariate rows and treatments")?;
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if t[j] == t[i] {
                continue;
            }
            let d = squared_euclidean(x.row(i), x.row(j));
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        match best {
            Some(j) => out.push(j),
            None => {
                let treated = t.iter().filter(|&&v| v).count();
                return Err(Error::SingleArm {
                    treated,
                    control: n - treated,
                });
            }
        }
    }
    Ok(out)
}

/// Counterfactual-free PEHE proxy: mean of
/// `[(1 - 2 T_i)(Y_j(i) - Y_i) - tau_hat_i]^2` with `j(i)` the nearest
/// opposite-arm neighbour.
pub fn pehe_nn_from_predictions(data: &Dataset, tau_hat: &[f64]) -> Result<f64> {
    data.require_both_arms()?;
    check_len(tau_hat.len(), data.len(), "predictions and units")?;
    let nn = nearest_opposite(&data.x, &data.t)?;
    let n = data.len() as f64;
    Ok((0..data.len())
        .map(|i| {
            let sign = if data.t[i] { -1.0 } else { 1.0 };
            (sign * (data.y[nn[i]] - data.y[i]) - tau_hat[i]).powi(2)
        })
        .sum::<f64>()
        / n)
}

pub fn pehe_nn_proxy(model: &CfrModel, data: &Dataset) -> Result<f64> {
    let tau_hat = model.predict_ite(&data.x)?;
    pehe_nn_from_predictions(data, &tau_hat)
}

/// Metrics for one target population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub tilting: String,
    /// `"true"` or `"model"`: which propensity defined the tilts.
    pub propensity: String,
    pub pehe_g: Option<f64>,
    pub sqrt_pehe_g: Option<f64>,
    pub ate_g_hat: f64,
    pub ate_g_true: Option<f64>,
    pub ate_error_g: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub n_units: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub pehe_p: Option<f64>,
    pub sqrt_pehe_p: Option<f64>,
    pub ate_p_hat: f64,
    pub ate_p_true: Option<f64>,
    pub ate_error_p: Option<f64>,
    /// The training scheme's own target population, with the true
    /// propensity when known.
    pub ate_g_hat: Option<f64>,
    pub ate_g_true: Option<f64>,
    pub ate_error_g: Option<f64>,
    pub b1: f64,
    pub b0: f64,
    pub ate_dr: Option<f64>,
    pub ate_error_dr: Option<f64>,
    pub pehe_nn: Option<f64>,
    /// Every propensity-based tilting, evaluated with each available propensity.
    pub targets: Vec<TargetMetrics>,
}

impl EvalReport {
    /// Look up a target by tilting name and propensity source.
    pub fn target(&self, tilting: &str, propensity: &str) -> Option<&TargetMetrics> {
        self.targets
            .iter()
            .find(|t| t.tilting == tilting && t.propensity == propensity)
    }
}

fn target_for(
    scheme: WeightScheme,
    source: &str,
    e: &[f64],
    tau_true: Option<&[f64]>,
    tau_hat: &[f64],
) -> Result<Option<TargetMetrics>> {
    let tilts = scheme.tilts_from_propensity(e)?;
    let ate_g_hat = match ate_estimate(&tilts, tau_hat) {
        Ok(v) => v,
        Err(Error::EmptyTarget) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (pehe_g, ate_g_true) = match tau_true {
        Some(tt) => (Some(pehe(&tilts, tt, tau_hat)?), Some(ate_estimate(&tilts, tt)?)),
        None => (None, None),
    };
    Ok(Some(TargetMetrics {
        tilting: scheme.name().into(),
        propensity: source.into(),
        pehe_g,
        sqrt_pehe_g: pehe_g.map(f64::sqrt),
        ate_g_hat,
        ate_g_true,
        ate_error_g: ate_g_true.map(|t| (t - ate_g_hat).abs()),
    }))
}

/// Full report for a trained model on `eval`, with the DR correction taken
/// from `train`.
pub fn evaluate(
    model: &CfrModel,
    propensity: &PropensityModel,
    scheme: WeightScheme,
    train: &Dataset,
    eval: &Dataset,
) -> Result<EvalReport> {
    let tau_hat = model.predict_ite(&eval.x)?;
    let tau_true = eval.tau_true();
    let ones = vec![1.0; eval.len()];
    let ate_p_hat = ate_estimate(&ones, &tau_hat)?;
    let pehe_p = match &tau_true {
        Some(tt) => Some(pehe(&ones, tt, &tau_hat)?),
        None => None,
    };
    let ate_p_true = match &tau_true {
        Some(tt) => Some(ate_estimate(&ones, tt)?),
        None => None,
    };

    let e_model = propensity.predict(&eval.x)?;
    let mut targets = Vec::new();
    for s in WeightScheme::PROPENSITY_SCHEMES {
        if let Some(e) = &eval.e_true {
            targets.extend(target_for(s, "true", e, tau_true.as_deref(), &tau_hat)?);
        }
        targets.extend(target_for(s, "model", &e_model, tau_true.as_deref(), &tau_hat)?);
    }

    let own_e = eval.e_true.as_ref().unwrap_or(&e_model);
    let own_tilts = scheme.tilts_from_propensity(own_e)?;
    let own = ate_estimate(&own_tilts, &tau_hat).ok();
    let own_true = match &tau_true {
        Some(tt) => ate_estimate(&own_tilts, tt).ok(),
        None => None,
    };

    let w = batch_weights(scheme, propensity, &train.x, &train.t)?;
    let fitted = model.predict_factual(&train.x, &train.t)?;
    let (b1, b0) = dr_corrections(&w, &train.t, &fitted, &train.y)?;
    let ate_dr = own.map(|v| v - b1 + b0);

    let pehe_nn = if eval.n_treated() > 0 && eval.n_control() > 0 {
        Some(pehe_nn_from_predictions(eval, &tau_hat)?)
    } else {
        None
    };

    Ok(EvalReport {
        scheme: scheme.to_string(),
        n_units: eval.len(),
        n_treated: eval.n_treated(),
        n_control: eval.n_control(),
        pehe_p,
        sqrt_pehe_p: pehe_p.map(f64::sqrt),
        ate_p_hat,
        ate_p_true,
        ate_error_p: ate_p_true.map(|t| (t - ate_p_hat).abs()),
        ate_g_hat: own,
        ate_g_true: own_true,
        ate_error_g: own.zip(own_true).map(|(a, b)| (a - b).abs()),
        b1,
        b0,
        ate_dr,
        ate_error_dr: ate_dr.zip(own_true).map(|(a, b)| (a - b).abs()),
        pehe_nn,
        targets,
    })
}
