//! Adam with classic L2 weight decay and the step-decay learning-rate
//! schedule. Frozen parameters are never touched: the update loop skips them
//! entirely, so they stay bitwise identical no matter how many steps run.

use crate::config::{ModelConfig, Precision};
use crate::error::{Error, Result};
use crate::params::ParameterStore;
use indexmap::IndexMap;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Classic (non-decoupled) L2 weight decay, added to the gradient.
    pub weight_decay: f64,
}

impl AdamParams {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        AdamParams {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
        }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hp: AdamParams,
    step: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(hp: AdamParams) -> Self {
        AdamState {
            hp,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam step over every trainable entry, using `lr` (already
    /// scheduled). Requires a gradient for each trainable parameter.
    pub fn step(
        &mut self,
        store: &mut ParameterStore,
        grads: &IndexMap<String, Vec<f64>>,
        lr: f64,
        precision: Precision,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.hp.beta1.powf(t);
        let bc2 = 1.0 - self.hp.beta2.powf(t);
        let names: Vec<String> = store
            .iter()
            .filter(|(_, p)| !p.frozen)
            .map(|(n, _)| n.to_string())
            .collect();
        for name in names {
            let grad = grads.get(&name).ok_or_else(|| {
                Error::Contract(format!("no gradient for trainable parameter `{}`", name))
            })?;
            let param = store.get_mut(&name).expect("name from iteration");
            if grad.len() != param.values.len() {
                return Err(Error::Dimension(format!(
                    "gradient length {} does not match parameter `{}` ({})",
                    grad.len(),
                    name,
                    param.values.len()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for i in 0..grad.len() {
                let g = grad[i] + self.hp.weight_decay * param.values[i];
                m[i] = self.hp.beta1 * m[i] + (1.0 - self.hp.beta1) * g;
                v[i] = self.hp.beta2 * v[i] + (1.0 - self.hp.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let updated = param.values[i] - lr * m_hat / (v_hat.sqrt() + self.hp.epsilon);
                param.values[i] = precision.quantize(updated);
            }
        }
        Ok(())
    }
}

/// Step-decay schedule: drop the rate by 10x every `decay_epochs` epochs.
pub fn lr_schedule(epoch: usize, lr0: f64, decay_epochs: usize) -> f64 {
    lr0 * 10f64.powi(-((epoch / decay_epochs) as i32))
}
