//! Adam with decoupled weight decay.
//!
//! Decay multiplies each parameter by `1 - lr * weight_decay` before the
//! moment-based update is applied, so decay strength does not pass
//! through the adaptive scaling.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tape::{Gradients, Param};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot {
    m: Tensor2,
    v: Tensor2,
}

/// Optimizer state for one parameter group.  Moment estimates are keyed
/// by parameter id and created lazily on the first step.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    slots: BTreeMap<usize, Slot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, slots: BTreeMap::new() }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// Applies one update to every parameter in the group.  Aborts,
    /// naming the parameter, if its gradient is not finite.
    pub fn step(&mut self, params: &mut [&mut Param], grads: &Gradients) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for p in params.iter_mut() {
            let g = grads.for_param(p);
            if !g.all_finite() {
                return Err(Error::NonFinite {
                    name: p.name().to_string(),
                    detail: "gradient is not finite; aborting optimization".to_string(),
                });
            }
            let slot = self.slots.entry(p.id()).or_insert_with(|| Slot {
                m: Tensor2::zeros(g.rows(), g.cols()),
                v: Tensor2::zeros(g.rows(), g.cols()),
            });
            if c.weight_decay != 0.0 {
                let decay = 1.0 - c.lr * c.weight_decay;
                for w in p.value.data_mut() {
                    *w *= decay;
                }
            }
            for i in 0..g.len() {
                let gi = g.data()[i];
                let m = &mut slot.m.data_mut()[i];
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                let mhat = *m / bc1;
                let v = &mut slot.v.data_mut()[i];
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let vhat = *v / bc2;
                p.value.data_mut()[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
