use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Elementwise activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Exponential linear unit with unit scale.
    Elu,
    Relu,
    Identity,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Logistic => logistic(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            // The derivative at exactly 0 is taken as 0.
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer `x W + b` with `W` stored as `(in, out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Fully-connected network parameters.
///
/// `hidden[l]` is applied after layer `l` for every layer but the last; the
/// last layer is followed by `output`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDocument", into = "MlpDocument")]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub hidden: Vec<Activation>,
    pub output: Activation,
}

/// Gradients shaped like [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

/// Cached intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<DenseMatrix>,
    /// Pre-activations of each layer.
    pre: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl Tape {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases. `dims` lists every layer width
    /// from input to output.
    pub fn init(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(dims, hidden, output)?;
        for layer in &mut p.layers {
            let bound = (6.0 / (layer.input_dim() + layer.output_dim()) as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "network needs at least an input and an output width, all positive; got {dims:?}"
            )));
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            layers,
            hidden: vec![hidden; dims.len() - 2],
            output,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        if self.hidden.len() + 1 != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} layers need {} hidden activations, got {}",
                self.layers.len(),
                self.layers.len() - 1,
                self.hidden.len()
            )));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::Shape(format!("layer {l} bias length mismatch")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Layer::output_dim));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden[layer]
        }
    }

    fn check_input(&self, input: &DenseMatrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = x.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias);
            let act = self.activation(l);
            if act != Activation::Identity {
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            x = z;
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: &DenseMatrix) -> Result<Tape> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = x.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias);
            let act = self.activation(l);
            let a = if act == Activation::Identity {
                z.clone()
            } else {
                z.map(|v| act.apply(v))
            };
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(Tape {
            inputs,
            pre,
            output: x,
        })
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to the parameters
    /// and to the input of the recorded forward pass.
    pub fn backward(&self, tape: &Tape, upstream: &DenseMatrix) -> Result<(MlpGrads, DenseMatrix)> {
        if upstream.shape() != tape.output.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, output is {:?}",
                upstream.shape(),
                tape.output.shape()
            )));
        }
        let n = self.layers.len();
        let mut grads: Vec<Option<Layer>> = vec![None; n];
        let mut delta = upstream.clone();
        let mut out_of_layer = &tape.output;
        for l in (0..n).rev() {
            let act = self.activation(l);
            if act != Activation::Identity {
                let z = tape.pre[l].data();
                let a = out_of_layer.data();
                for (k, d) in delta.data_mut().iter_mut().enumerate() {
                    *d *= act.derivative(z[k], a[k]);
                }
            }
            let gw = tape.inputs[l].matmul_tn(&delta)?;
            let gb = delta.column_sums();
            let next = delta.matmul_nt(&self.layers[l].weight)?;
            grads[l] = Some(Layer {
                weight: gw,
                bias: gb,
            });
            delta = next;
            out_of_layer = &tape.inputs[l];
        }
        Ok((
            MlpGrads {
                layers: grads.into_iter().map(Option::unwrap).collect(),
            },
            delta,
        ))
    }

    /// Forward and reverse pass in one call.
    pub fn gradient(
        &self,
        input: &DenseMatrix,
        upstream: &DenseMatrix,
    ) -> Result<(MlpGrads, DenseMatrix)> {
        let tape = self.forward_tape(input)?;
        self.backward(&tape, upstream)
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }
}

impl MlpGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn shape_matches(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.shape() == p.weight.shape() && g.bias.len() == p.bias.len())
    }
}

/// Flat on-disk form of a network: layer widths, activation names and
/// row-major weight arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpDocument {
    pub dims: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
    pub output_activation: Activation,
    /// `weights[l]` has `dims[l] * dims[l + 1]` entries, row-major `(in, out)`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<MlpParams> for MlpDocument {
    fn from(p: MlpParams) -> Self {
        Self {
            dims: p.dims(),
            hidden_activations: p.hidden.clone(),
            output_activation: p.output,
            weights: p.layers.iter().map(|l| l.weight.data().to_vec()).collect(),
            biases: p.layers.into_iter().map(|l| l.bias).collect(),
        }
    }
}

impl TryFrom<MlpDocument> for MlpParams {
    type Error = Error;

    fn try_from(doc: MlpDocument) -> Result<Self> {
        if doc.dims.len() < 2 || doc.weights.len() + 1 != doc.dims.len() {
            return Err(Error::Shape("network document has inconsistent layer count".into()));
        }
        if doc.biases.len() != doc.weights.len() {
            return Err(Error::Shape("network document bias count mismatch".into()));
        }
        let layers = doc
            .weights
            .into_iter()
            .zip(doc.biases)
            .enumerate()
            .map(|(l, (w, b))| {
                Ok(Layer {
                    weight: DenseMatrix::from_vec(doc.dims[l], doc.dims[l + 1], w)?,
                    bias: b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = MlpParams {
            layers,
            hidden: doc.hidden_activations,
            output: doc.output_activation,
        };
        p.validate()?;
        Ok(p)
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Elu => "elu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Logistic => "logistic",
        };
        f.write_str(s)
    }
}
