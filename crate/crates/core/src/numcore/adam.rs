use super::mlp::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

/// Adam optimizer state for one network.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: MlpGrads,
    v: MlpGrads,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        Self {
            m: params.zero_grads(),
            v: params.zero_grads(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &MlpGrads {
        &self.m
    }

    pub fn second_moment(&self) -> &MlpGrads {
        &self.v
    }

    /// Bias-corrected Adam update. A non-finite gradient leaves parameters
    /// and state untouched.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if !grads.shape_matches(params) || !self.m.shape_matches(params) {
            return Err(Error::Shape("gradient does not match parameter shapes".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient(format!("Adam step {}", self.step + 1)));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let (m, v) = (&mut self.m.layers[l], &mut self.v.layers[l]);
            update(
                layer.weight.data_mut(),
                g.weight.data(),
                m.weight.data_mut(),
                v.weight.data_mut(),
            );
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}
