//! Design-stage propensity network `e(x) = sigmoid(s(x))`, trained before any
//! representation learning and frozen afterwards.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{Activation, AdamState, DenseMatrix, MlpParams};

pub const DEFAULT_CLAMP: f64 = 1e-6;

/// Propensity network with a logistic output, clamped to
/// `[clamp, 1 - clamp]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub net: MlpParams,
    pub clamp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensityConfig {
    pub hidden_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop when the training loss improved by less than
    /// `plateau_tolerance` (relative) over the last `plateau_window` epochs.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub clamp: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 1,
            hidden_dim: 10,
            learning_rate: 0.001,
            batch_size: 200,
            max_epochs: 1000,
            plateau_window: 20,
            plateau_tolerance: 1e-4,
            clamp: DEFAULT_CLAMP,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropensityFit {
    pub model: PropensityModel,
    /// Full training loss after each epoch.
    pub losses: Vec<f64>,
    pub stopped_on_plateau: bool,
}

impl PropensityModel {
    pub fn new(net: MlpParams, clamp: f64) -> Result<Self> {
        net.validate()?;
        if net.output != Activation::Logistic || net.output_dim() != 1 {
            return Err(Error::Config(
                "propensity network needs a single logistic output".into(),
            ));
        }
        if !(clamp > 0.0 && clamp < 0.5) {
            return Err(Error::Config(format!("clamp {clamp} must lie in (0, 0.5)")));
        }
        Ok(Self { net, clamp })
    }

    pub fn init(input_dim: usize, config: &PropensityConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(config.hidden_dim).take(config.hidden_layers));
        dims.push(1);
        let net = MlpParams::init(&dims, Activation::Relu, Activation::Logistic, &mut rng)?;
        Self::new(net, config.clamp)
    }

    fn clamp_value(&self, e: f64) -> f64 {
        e.clamp(self.clamp, 1.0 - self.clamp)
    }

    /// Predicted propensities, each in `[clamp, 1 - clamp]`.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        let out = self.net.forward(x)?;
        Ok(out.data().iter().map(|&e| self.clamp_value(e)).collect())
    }

    /// Class-balanced cross-entropy
    /// `-sum_i [T_i/N1 log e_i + (1 - T_i)/N0 log(1 - e_i)]`.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        data.require_both_arms()?;
        let e = self.predict(&data.x)?;
        Ok(class_balanced_loss(&e, &data.t))
    }

    /// Loss and parameter gradient on the rows `idx` of `data`, with the
    /// class normalizers taken from those rows.
    fn loss_and_grad(
        &self,
        data: &Dataset,
        idx: &[usize],
    ) -> Result<(f64, crate::numcore::MlpGrads)> {
        let x = data.x.select_rows(idx);
        let t: Vec<bool> = idx.iter().map(|&i| data.t[i]).collect();
        let n1 = t.iter().filter(|&&v| v).count().max(1) as f64;
        let n0 = (t.len() - t.iter().filter(|&&v| v).count()).max(1) as f64;
        let tape = self.net.forward_tape(&x)?;
        let raw = tape.output().data();
        let mut upstream = DenseMatrix::zeros(idx.len(), 1);
        let mut loss = 0.0;
        for (k, (&e_raw, &treated)) in raw.iter().zip(&t).enumerate() {
            let e = self.clamp_value(e_raw);
            let inside = e == e_raw;
            if treated {
                loss -= e.ln() / n1;
                if inside {
                    upstream.data_mut()[k] = -1.0 / (n1 * e);
                }
            } else {
                loss -= (1.0 - e).ln() / n0;
                if inside {
                    upstream.data_mut()[k] = 1.0 / (n0 * (1.0 - e));
                }
            }
        }
        let (grads, _) = self.net.backward(&tape, &upstream)?;
        Ok((loss, grads))
    }

    /// Gradient of [`PropensityModel::loss`] over the full dataset.
    pub fn loss_gradient(&self, data: &Dataset) -> Result<(f64, crate::numcore::MlpGrads)> {
        data.require_both_arms()?;
        let idx: Vec<usize> = (0..data.len()).collect();
        self.loss_and_grad(data, &idx)
    }
}

pub(crate) fn class_balanced_loss(e: &[f64], t: &[bool]) -> f64 {
    let n1 = t.iter().filter(|&&v| v).count() as f64;
    let n0 = t.len() as f64 - n1;
    let mut loss = 0.0;
    for (&e, &treated) in e.iter().zip(t) {
        if treated {
            loss -= e.ln() / n1;
        } else {
            loss -= (1.0 - e).ln() / n0;
        }
    }
    loss
}

/// Minibatch Adam on the class-balanced loss until the training loss
/// plateaus or `max_epochs` is reached.
pub fn train_propensity(
    data: &Dataset,
    config: &PropensityConfig,
    seed: u64,
) -> Result<PropensityFit> {
    data.require_both_arms()?;
    if config.batch_size == 0 {
        return Err(Error::Config("propensity batch size must be positive".into()));
    }
    let mut model = PropensityModel::init(data.dim(), config, seed)?;
    let mut adam = AdamState::new(&model.net, config.learning_rate);
    let mut rng = ChaCha20Rng::seed_from_u64(crate::mix_seed(&[seed, 0x5052_4f50]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::new();
    let mut stopped_on_plateau = false;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grad(data, chunk)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "propensity loss became {loss} in epoch {epoch}"
                )));
            }
            adam.step(&mut model.net, &grads)?;
        }
        let loss = model.loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "propensity loss became {loss} after epoch {epoch}"
            )));
        }
        losses.push(loss);
        let w = config.plateau_window;
        if w > 0 && losses.len() > w {
            let old = losses[losses.len() - 1 - w];
            if old - loss < config.plateau_tolerance * old.abs() {
                stopped_on_plateau = true;
                break;
            }
        }
    }
    Ok(PropensityFit {
        model,
        losses,
        stopped_on_plateau,
    })
}
