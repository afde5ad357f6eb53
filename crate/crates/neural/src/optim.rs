use crate::error::{NeuralError, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamW {
    /// Creates an optimizer without moment buffers; call [`AdamW::init`] before stepping.
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn for_store(config: AdamWConfig, store: &ParamStore) -> Self {
        let mut opt = Self::new(config);
        opt.init(store);
        opt
    }

    pub fn init(&mut self, store: &ParamStore) {
        self.first = store.iter().map(|p| Tensor::zeros_like(&p.value)).collect();
        self.second = self.first.clone();
        self.step = 0;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.first.len() != store.len()
            || self
                .first
                .iter()
                .zip(store.iter())
                .any(|(m, p)| m.shape() != p.value.shape())
        {
            return Err(NeuralError::UninitializedOptimizer);
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in store
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            if !p.trainable {
                continue;
            }
            let decay = if p.decay {
                1.0 - lr * weight_decay
            } else {
                1.0
            };
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let (ms, vs) = (m.data_mut(), v.data_mut());
            for k in 0..values.len() {
                let g = grads[k];
                ms[k] = beta1 * ms[k] + (1.0 - beta1) * g;
                vs[k] = beta2 * vs[k] + (1.0 - beta2) * g * g;
                let m_hat = ms[k] / correction1;
                let v_hat = vs[k] / correction2;
                values[k] = values[k] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
