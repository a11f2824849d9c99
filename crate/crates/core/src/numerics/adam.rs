use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` must align with `store`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Shape(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            if store.get(id).shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "adam: gradient {:?} for parameter `{}` {:?}",
                    g.shape(),
                    store.name(id),
                    store.get(id).shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((id, g), (m, v)) in store
            .ids()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = store.get_mut(id).data_mut();
            for (((p, g), m), v) in p
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::from_vec(values));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = one_param(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            adam.step(&mut store, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(store.get(super::super::ParamId(0)).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_sign_scaled() {
        let lr = 0.01;
        let cfg = AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        let g = [0.3, -5.0, 1e-9];
        let mut store = one_param(vec![0.0; 3]);
        let mut adam = Adam::new(cfg, &store);
        adam.step(&mut store, &[Tensor::from_vec(g.to_vec())]).unwrap();
        // bias-corrected moments are exactly g and g², so Δ = -lr·g/(|g|+eps)
        for (p, g) in store.get(super::super::ParamId(0)).data().iter().zip(g) {
            let expected = -lr * g / (g.abs() + cfg.eps);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let lr = 0.002;
        let cfg = AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        let mut store = one_param(vec![0.0]);
        let mut adam = Adam::new(cfg, &store);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..500 {
            adam.step(&mut store, &[Tensor::from_vec(vec![-0.7])]).unwrap();
            let now = store.get(super::super::ParamId(0)).data()[0];
            last_step = now - prev;
            prev = now;
        }
        assert!((last_step - lr).abs() < 1e-6 * lr.max(1.0));
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut store = one_param(vec![0.0; 3]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        assert!(adam.step(&mut store, &[Tensor::zeros(&[2])]).is_err());
        assert!(adam.step(&mut store, &[]).is_err());
        assert_eq!(adam.steps(), 0);
    }
}
