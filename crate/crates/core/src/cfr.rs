//! The weighted counterfactual-regression learner.
//!
//! An encoder `Phi` maps covariates to representations, and two heads
//! `h(., 0)` and `h(., 1)` predict each potential outcome from `Phi(x)`.
//! Training minimizes, per batch,
//!
//! ```text
//! (1/n) sum_i w_i (y_i - h(Phi(x_i), t_i))^2 + alpha * IPM(treated, control)
//! ```
//!
//! where the IPM compares the weighted representation clouds of the two
//! arms. The balancing weights come from a frozen propensity model.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ipm::{IpmSpec, WeightedSample};
use crate::numcore::{euclidean, Activation, AdamState, DenseMatrix, MlpGrads, MlpParams};
use crate::propensity::PropensityModel;
use crate::weights::{batch_weights, WeightScheme};

/// Layer counts and widths for the encoder and the heads.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub encoder_layers: usize,
    pub encoder_dim: usize,
    /// Width of the representation `Phi(x)`.
    pub rep_dim: usize,
    pub head_layers: usize,
    pub head_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_layers: 1,
            encoder_dim: 100,
            rep_dim: 100,
            head_layers: 1,
            head_dim: 100,
        }
    }
}

impl Architecture {
    fn encoder_dims(&self, input: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat(self.encoder_dim).take(self.encoder_layers));
        d.push(self.rep_dim);
        d
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut d = vec![self.rep_dim];
        d.extend(std::iter::repeat(self.head_dim).take(self.head_layers));
        d.push(1);
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfrModel {
    pub encoder: MlpParams,
    pub head0: MlpParams,
    pub head1: MlpParams,
}

/// Gradients for the three networks of a [`CfrModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct CfrGrads {
    pub encoder: MlpGrads,
    pub head0: MlpGrads,
    pub head1: MlpGrads,
}

impl CfrGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.to_flat();
        v.extend(self.head0.to_flat());
        v.extend(self.head1.to_flat());
        v
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.head0.is_finite() && self.head1.is_finite()
    }
}

impl CfrModel {
    pub fn new(encoder: MlpParams, head0: MlpParams, head1: MlpParams) -> Result<Self> {
        for net in [&encoder, &head0, &head1] {
            net.validate()?;
        }
        if head0.input_dim() != encoder.output_dim() || head1.input_dim() != encoder.output_dim() {
            return Err(Error::Shape("head input width differs from the representation width".into()));
        }
        if head0.output_dim() != 1 || head1.output_dim() != 1 {
            return Err(Error::Shape("heads must have a single output".into()));
        }
        Ok(Self {
            encoder,
            head0,
            head1,
        })
    }

    pub fn init(input_dim: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let enc = MlpParams::init(&arch.encoder_dims(input_dim), Activation::Elu, Activation::Identity, &mut rng)?;
        let h0 = MlpParams::init(&arch.head_dims(), Activation::Elu, Activation::Identity, &mut rng)?;
        let h1 = MlpParams::init(&arch.head_dims(), Activation::Elu, Activation::Identity, &mut rng)?;
        Self::new(enc, h0, h1)
    }

    pub fn rep_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.head0.parameter_count() + self.head1.parameter_count()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.to_flat();
        v.extend(self.head0.to_flat());
        v.extend(self.head1.to_flat());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let (a, b) = (self.encoder.parameter_count(), self.head0.parameter_count());
        if flat.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        self.encoder.set_flat(&flat[..a])?;
        self.head0.set_flat(&flat[a..a + b])?;
        self.head1.set_flat(&flat[a + b..])
    }

    pub fn represent(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.encoder.forward(x)
    }

    /// `(h(Phi(x), 0), h(Phi(x), 1))` for every row.
    pub fn predict_outcomes(&self, x: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.represent(x)?;
        Ok((self.head0.forward(&r)?.into_data(), self.head1.forward(&r)?.into_data()))
    }

    /// `h(Phi(x), 1) - h(Phi(x), 0)`.
    pub fn predict_ite(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        let (m0, m1) = self.predict_outcomes(x)?;
        Ok(m1.iter().zip(&m0).map(|(a, b)| a - b).collect())
    }

    /// Prediction from the head matching each unit's own treatment.
    pub fn predict_factual(&self, x: &DenseMatrix, t: &[bool]) -> Result<Vec<f64>> {
        if x.rows() != t.len() {
            return Err(Error::Shape(format!("{} rows for {} treatments", x.rows(), t.len())));
        }
        let (m0, m1) = self.predict_outcomes(x)?;
        Ok(t.iter()
            .enumerate()
            .map(|(i, &ti)| if ti { m1[i] } else { m0[i] })
            .collect())
    }
}

/// Units of one batch, split by arm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.treated.len() + self.control.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Treated indices followed by control indices.
    pub fn indices(&self) -> Vec<usize> {
        let mut v = self.treated.clone();
        v.extend(&self.control);
        v
    }
}

/// Number of treated units in a batch of `n`: `round(n N1 / N)`, clipped to
/// `[1, n - 1]`.
pub fn treated_batch_size(n: usize, n_treated: usize, n_total: usize) -> usize {
    let raw = (n as f64 * n_treated as f64 / n_total as f64).round() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Batch whose treated share matches the dataset's, drawn uniformly without
/// replacement inside each arm.
pub fn sample_batch<R: Rng>(data: &Dataset, n: usize, rng: &mut R) -> Result<Batch> {
    data.require_both_arms()?;
    if n < 2 || n > data.len() {
        return Err(Error::Config(format!(
            "batch size {n} must lie in [2, {}]",
            data.len()
        )));
    }
    let (treated_all, control_all) = (data.treated_indices(), data.control_indices());
    let n1 = treated_batch_size(n, treated_all.len(), data.len()).min(treated_all.len());
    let n0 = (n - n1).min(control_all.len());
    let pick = |pool: &[usize], k: usize, rng: &mut R| -> Vec<usize> {
        sample_indices(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
    };
    let treated = pick(&treated_all, n1, rng);
    let control = pick(&control_all, n0, rng);
    Ok(Batch { treated, control })
}

/// `(1/n) sum_i w_i (y_i - h(Phi(x_i), t_i))^2` over the batch. `weights`
/// holds one entry per row of `data`.
pub fn factual_loss(model: &CfrModel, data: &Dataset, batch: &Batch, weights: &[f64]) -> Result<f64> {
    if weights.len() != data.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} units",
            weights.len(),
            data.len()
        )));
    }
    let idx = batch.indices();
    let sub = data.subset(&idx);
    let pred = model.predict_factual(&sub.x, &sub.t)?;
    let n = idx.len() as f64;
    Ok(idx
        .iter()
        .zip(pred.iter().zip(&sub.y))
        .map(|(&i, (p, y))| weights[i] * (y - p).powi(2))
        .sum::<f64>()
        / n)
}

/// Weighted factual MSE on a whole dataset.
pub fn weighted_mse(model: &CfrModel, data: &Dataset, weights: &[f64]) -> Result<f64> {
    let pred = model.predict_factual(&data.x, &data.t)?;
    if weights.len() != pred.len() {
        return Err(Error::Shape(format!("{} weights for {} units", weights.len(), pred.len())));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(&data.y)
        .zip(weights)
        .map(|((p, y), w)| w * (y - p).powi(2))
        .sum::<f64>()
        / n)
}

/// Objective settings needed to score one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub alpha: f64,
    pub ipm: IpmSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub factual: f64,
    /// `None` when the regularizer was not evaluated (alpha = 0 or a
    /// zero-mass arm).
    pub ipm: Option<f64>,
    /// An arm had no positive weight, so the IPM term was skipped.
    pub skipped_ipm: bool,
    /// An MMD within-group term was undefined and taken as zero.
    pub degenerate_mmd: bool,
}

fn arm_sample(rep: &DenseMatrix, rows: std::ops::Range<usize>, weights: &[f64]) -> Option<WeightedSample> {
    let idx: Vec<usize> = rows.collect();
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    WeightedSample::new(rep.select_rows(&idx), w).ok()
}

/// Batch objective and, when `with_grad`, its gradient.
fn evaluate(
    model: &CfrModel,
    data: &Dataset,
    batch: &Batch,
    weights: &[f64],
    spec: &ObjectiveSpec,
    with_grad: bool,
) -> Result<(ObjectiveValue, Option<CfrGrads>)> {
    if weights.len() != data.len() {
        return Err(Error::Shape(format!("{} weights for {} units", weights.len(), data.len())));
    }
    let idx = batch.indices();
    let n1 = batch.treated.len();
    let n = idx.len();
    let x = data.x.select_rows(&idx);
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();

    let enc_tape = model.encoder.forward_tape(&x)?;
    let rep = enc_tape.output().clone();
    let rep1 = rep.select_rows(&(0..n1).collect::<Vec<_>>());
    let rep0 = rep.select_rows(&(n1..n).collect::<Vec<_>>());
    let tape1 = model.head1.forward_tape(&rep1)?;
    let tape0 = model.head0.forward_tape(&rep0)?;
    let pred: Vec<f64> = tape1.output().data().iter().chain(tape0.output().data()).copied().collect();

    let nf = n as f64;
    let factual: f64 = (0..n).map(|i| w[i] * (y[i] - pred[i]).powi(2)).sum::<f64>() / nf;

    let mut value = ObjectiveValue {
        total: factual,
        factual,
        ipm: None,
        skipped_ipm: false,
        degenerate_mmd: false,
    };
    let mut ipm_grad = None;
    if spec.alpha > 0.0 {
        match (arm_sample(&rep, 0..n1, &w), arm_sample(&rep, n1..n, &w)) {
            (Some(a), Some(b)) => {
                if with_grad {
                    let g = spec.ipm.gradient(&a, &b)?;
                    value.ipm = Some(g.value);
                    value.degenerate_mmd = g.degenerate;
                    ipm_grad = Some((g.grad_a, g.grad_b));
                } else {
                    let v = spec.ipm.value(&a, &b)?;
                    value.ipm = Some(v);
                }
                value.total = factual + spec.alpha * value.ipm.unwrap();
            }
            _ => value.skipped_ipm = true,
        }
    }
    if !value.total.is_finite() {
        return Err(Error::Diverged(format!("objective became {}", value.total)));
    }
    if !with_grad {
        return Ok((value, None));
    }

    let up = |rows: std::ops::Range<usize>| {
        let vals: Vec<f64> = rows.map(|i| 2.0 * w[i] * (pred[i] - y[i]) / nf).collect();
        DenseMatrix::from_vec(vals.len(), 1, vals)
    };
    let (g1, r1) = model.head1.backward(&tape1, &up(0..n1)?)?;
    let (g0, r0) = model.head0.backward(&tape0, &up(n1..n)?)?;
    let mut rep_grad = DenseMatrix::vstack(&r1, &r0)?;
    if let Some((ga, gb)) = ipm_grad {
        let d = rep_grad.cols();
        let data = rep_grad.data_mut();
        for (k, v) in ga.data().iter().chain(gb.data()).enumerate() {
            data[k] += spec.alpha * v;
        }
        debug_assert_eq!(data.len(), n * d);
    }
    let (ge, _) = model.encoder.backward(&enc_tape, &rep_grad)?;
    Ok((
        value,
        Some(CfrGrads {
            encoder: ge,
            head0: g0,
            head1: g1,
        }),
    ))
}

/// Batch objective without gradients.
pub fn objective_value(
    model: &CfrModel,
    data: &Dataset,
    batch: &Batch,
    weights: &[f64],
    spec: &ObjectiveSpec,
) -> Result<ObjectiveValue> {
    evaluate(model, data, batch, weights, spec, false).map(|v| v.0)
}

/// Batch objective and its gradient with respect to the encoder and both
/// heads. Weights are constants.
pub fn objective_with_gradient(
    model: &CfrModel,
    data: &Dataset,
    batch: &Batch,
    weights: &[f64],
    spec: &ObjectiveSpec,
) -> Result<(ObjectiveValue, CfrGrads)> {
    let (v, g) = evaluate(model, data, batch, weights, spec, true)?;
    Ok((v, g.expect("gradient requested")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub ipm: IpmSpec,
    pub scheme: WeightScheme,
    pub architecture: Architecture,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            ipm: IpmSpec::default(),
            scheme: WeightScheme::Ow,
            architecture: Architecture::default(),
            batch_size: 200,
            learning_rate: 0.001,
            max_epochs: 300,
            patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.ipm.validate()?;
        self.scheme.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective; `None` for the initial evaluation.
    pub train_objective: Option<f64>,
    pub val_loss: f64,
    /// Mean batch IPM; `None` when it was never evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipm: Option<f64>,
    /// Largest pairwise distance between validation representations.
    pub rep_diameter: f64,
    pub skipped_ipm_batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Why training stopped before finishing, if it did.
    pub aborted: Option<String>,
    pub skipped_ipm_batches: usize,
    pub degenerate_mmd_batches: usize,
}

#[derive(Clone, Debug)]
pub struct CfrFit {
    pub model: CfrModel,
    pub trace: TrainTrace,
}

fn diameter(r: &DenseMatrix) -> f64 {
    let n = r.rows();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(euclidean(r.row(i), r.row(j)));
        }
    }
    best
}

/// Trains the encoder and heads with Adam, keeping the snapshot with the
/// lowest weighted validation MSE.
///
/// An error inside an epoch (a non-finite objective or gradient, or a
/// transport-kernel underflow) stops training; the best snapshot so far is
/// returned and the reason is stored in the trace.
pub fn train_cfr(
    train: &Dataset,
    val: &Dataset,
    propensity: &PropensityModel,
    config: &TrainConfig,
) -> Result<CfrFit> {
    config.validate()?;
    train.require_both_arms()?;
    let batch_size = config.batch_size.min(train.len());
    let w_train = batch_weights(config.scheme, propensity, &train.x, &train.t)?;
    let w_val = batch_weights(config.scheme, propensity, &val.x, &val.t)?;
    let spec = ObjectiveSpec {
        alpha: config.alpha,
        ipm: config.ipm,
    };

    let mut model = CfrModel::init(train.dim(), &config.architecture, crate::mix_seed(&[config.seed, 1]))?;
    let mut rng = ChaCha20Rng::seed_from_u64(crate::mix_seed(&[config.seed, 2]));
    let mut adam = [
        AdamState::new(&model.encoder, config.learning_rate),
        AdamState::new(&model.head0, config.learning_rate),
        AdamState::new(&model.head1, config.learning_rate),
    ];

    let val_loss0 = weighted_mse(&model, val, &w_val)?;
    let mut trace = TrainTrace {
        epochs: vec![EpochRecord {
            epoch: 0,
            train_objective: None,
            val_loss: val_loss0,
            ipm: None,
            rep_diameter: diameter(&model.represent(&val.x)?),
            skipped_ipm_batches: 0,
        }],
        best_epoch: 0,
        best_val_loss: val_loss0,
        stopped_early: false,
        aborted: None,
        skipped_ipm_batches: 0,
        degenerate_mmd_batches: 0,
    };
    let mut best = model.clone();
    let batches = train.len().div_ceil(batch_size);

    'epochs: for epoch in 1..=config.max_epochs {
        let (mut obj_sum, mut ipm_sum, mut ipm_count, mut skipped) = (0.0, 0.0, 0usize, 0usize);
        for _ in 0..batches {
            let step = sample_batch(train, batch_size, &mut rng).and_then(|batch| {
                let (v, g) = objective_with_gradient(&model, train, &batch, &w_train, &spec)?;
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient("objective".into()));
                }
                Ok((v, g))
            });
            let (v, g) = match step {
                Ok(s) => s,
                Err(e) => {
                    trace.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
            };
            adam[0].step(&mut model.encoder, &g.encoder)?;
            adam[1].step(&mut model.head0, &g.head0)?;
            adam[2].step(&mut model.head1, &g.head1)?;
            obj_sum += v.total;
            if let Some(ipm) = v.ipm {
                ipm_sum += ipm;
                ipm_count += 1;
            }
            if v.skipped_ipm {
                skipped += 1;
            }
            if v.degenerate_mmd {
                trace.degenerate_mmd_batches += 1;
            }
        }
        trace.skipped_ipm_batches += skipped;
        let val_loss = match weighted_mse(&model, val, &w_val) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                trace.aborted = Some(format!("epoch {epoch}: validation loss became {v}"));
                break;
            }
            Err(e) => return Err(e),
        };
        trace.epochs.push(EpochRecord {
            epoch,
            train_objective: Some(obj_sum / batches as f64),
            val_loss,
            ipm: (ipm_count > 0).then(|| ipm_sum / ipm_count as f64),
            rep_diameter: diameter(&model.represent(&val.x)?),
            skipped_ipm_batches: skipped,
        });
        if val_loss < trace.best_val_loss {
            trace.best_val_loss = val_loss;
            trace.best_epoch = epoch;
            best = model.clone();
        } else if epoch - trace.best_epoch >= config.patience {
            trace.stopped_early = true;
            break;
        }
    }
    Ok(CfrFit { model: best, trace })
}

/// One row per unit: representation, balancing weight, treatment, outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationTable {
    pub rep: DenseMatrix,
    pub weight: Vec<f64>,
    pub t: Vec<bool>,
    pub y: Vec<f64>,
}

impl RepresentationTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.rep.cols()).map(|k| format!("r_{k}")).collect();
        h.extend(["w", "t", "y"].map(String::from));
        h
    }

    pub fn n_columns(&self) -> usize {
        self.rep.cols() + 3
    }

    pub fn n_rows(&self) -> usize {
        self.rep.rows()
    }
}

pub fn export_representations(
    model: &CfrModel,
    propensity: &PropensityModel,
    scheme: WeightScheme,
    data: &Dataset,
) -> Result<RepresentationTable> {
    Ok(RepresentationTable {
        rep: model.represent(&data.x)?,
        weight: batch_weights(scheme, propensity, &data.x, &data.t)?,
        t: data.t.clone(),
        y: data.y.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propensity::PropensityConfig;

    fn toy(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_vec(n, p, (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut t: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        t[0] = true;
        t[1] = false;
        let y = (0..n).map(|i| x.get(i, 0) + if t[i] { 1.0 } else { 0.0 }).collect();
        Dataset::new(x, t, y).unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture {
            encoder_layers: 1,
            encoder_dim: 5,
            rep_dim: 3,
            head_layers: 1,
            head_dim: 4,
        }
    }

    #[test]
    fn batch_sizes_follow_the_treated_share() {
        assert_eq!(treated_batch_size(10, 30, 100), 3);
        assert_eq!(treated_batch_size(200, 50, 100), 100);
        assert_eq!(treated_batch_size(4, 1, 10), 1);
        assert_eq!(treated_batch_size(4, 9, 10), 3);
        let mut x = vec![true; 30];
        x.extend(vec![false; 70]);
        let d = Dataset::new(DenseMatrix::zeros(100, 1), x, vec![0.0; 100]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let b = sample_batch(&d, 10, &mut rng).unwrap();
        assert_eq!((b.treated.len(), b.control.len()), (3, 7));
        assert!(b.treated.iter().all(|&i| d.t[i]) && b.control.iter().all(|&i| !d.t[i]));
        let mut all = b.indices();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn alpha_zero_objective_is_the_factual_loss() {
        let d = toy(20, 3, 1);
        let m = CfrModel::init(3, &small_arch(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let b = sample_batch(&d, 10, &mut rng).unwrap();
        let w: Vec<f64> = (0..20).map(|i| 0.5 + i as f64 / 20.0).collect();
        let spec = ObjectiveSpec {
            alpha: 0.0,
            ipm: IpmSpec::wass(),
        };
        let v = objective_value(&m, &d, &b, &w, &spec).unwrap();
        assert_eq!(v.ipm, None);
        let fl = factual_loss(&m, &d, &b, &w).unwrap();
        assert!((v.total - fl).abs() < 1e-14);
    }

    #[test]
    fn factual_loss_matches_scalar_loop() {
        let d = toy(15, 2, 4);
        let m = CfrModel::init(2, &small_arch(), 5).unwrap();
        let b = Batch {
            treated: d.treated_indices(),
            control: d.control_indices(),
        };
        let w: Vec<f64> = (0..15).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut s = 0.0;
        for i in 0..15 {
            let x = d.x.select_rows(&[i]);
            let r = m.encoder.forward(&x).unwrap();
            let h = if d.t[i] { &m.head1 } else { &m.head0 };
            let p = h.forward(&r).unwrap().data()[0];
            s += w[i] * (d.y[i] - p) * (d.y[i] - p);
        }
        assert!((factual_loss(&m, &d, &b, &w).unwrap() - s / 15.0).abs() < 1e-12);
        let uniform = vec![1.0; 15];
        let pred = m.predict_factual(&d.x, &d.t).unwrap();
        let mse = pred.iter().zip(&d.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 15.0;
        assert!((factual_loss(&m, &d, &b, &uniform).unwrap() - mse).abs() < 1e-12);
    }

    #[test]
    fn identical_heads_predict_no_effect() {
        let mut m = CfrModel::init(2, &small_arch(), 6).unwrap();
        m.head1 = m.head0.clone();
        let x = toy(5, 2, 7).x;
        assert!(m.predict_ite(&x).unwrap().iter().all(|&v| v == 0.0));
        for h in [&mut m.head0, &mut m.head1] {
            h.layers.iter_mut().for_each(|l| l.weight.data_mut().iter_mut().for_each(|w| *w = 0.0));
        }
        m.head1.layers[1].bias[0] = 2.5;
        m.head0.layers[1].bias[0] = -1.0;
        assert!(m.predict_ite(&x).unwrap().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let d = toy(30, 3, 8);
        let prop = PropensityModel::init(3, &PropensityConfig::default(), 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            architecture: small_arch(),
            seed: 3,
            ..Default::default()
        };
        let fit = train_cfr(&d, &d, &prop, &cfg).unwrap();
        let init = CfrModel::init(3, &small_arch(), crate::mix_seed(&[3, 1])).unwrap();
        assert_eq!(fit.model, init);
        assert_eq!(fit.trace.epochs.len(), 1);
    }

    #[test]
    fn export_shape_and_uniform_weights() {
        let d = toy(12, 3, 9);
        let m = CfrModel::init(3, &small_arch(), 1).unwrap();
        let prop = PropensityModel::init(3, &PropensityConfig::default(), 0).unwrap();
        let table = export_representations(&m, &prop, WeightScheme::Uniform, &d).unwrap();
        assert_eq!((table.n_rows(), table.n_columns()), (12, 6));
        assert!(table.weight.iter().all(|&w| w == 1.0));
        assert_eq!(table.header().last().unwrap(), "y");
    }
}
