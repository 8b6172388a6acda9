use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, congruent with the parameters they update.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub step: u64,
    pub first: ParamStore<T>,
    pub second: ParamStore<T>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
            config,
        }
    }

    /// One Adam step, applied in place. Moment updates run in f64 and are
    /// rounded back to `T`.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) -> Result<()> {
        params.expect_congruent(grads, "adam gradients")?;
        params.expect_congruent(&self.first, "adam first moment")?;
        params.expect_congruent(&self.second, "adam second moment")?;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        if !(learning_rate > 0.0) || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Config(format!("bad adam hyperparameters {:?}", self.config)));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let arrays = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()));
        for ((p, g), (m, v)) in arrays {
            let p = p.value.data_mut();
            let m = m.value.data_mut();
            let v = v.value.data_mut();
            for (i, &gi) in g.value.data().iter().enumerate() {
                let gi = gi.as_f64();
                let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let step = learning_rate * (mi / c1) / ((vi / c2).sqrt() + epsilon);
                p[i] = T::from_f64(p[i].as_f64() - step);
            }
        }
        Ok(())
    }
}
