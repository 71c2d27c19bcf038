//! Learning-rate law and the optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};

/// Linear warmup from 0 to `peak` over the first `warmup_fraction · total`
/// steps, then cosine decay to 0 at `total`.
pub fn lr_schedule(step: usize, total: usize, peak: f64, warmup_fraction: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let step = step.min(total) as f64;
    let total = total as f64;
    let warmup = warmup_fraction * total;
    if step < warmup {
        return peak * step / warmup;
    }
    let span = total - warmup;
    if span <= 0.0 {
        return peak;
    }
    let progress = (step - warmup) / span;
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adaptive per-parameter step without momentum: a running mean of squared
/// gradients with bias correction, optional global-norm clipping and
/// decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<S: Scalar> {
    pub cfg: OptimizerConfig,
    second_moment: BTreeMap<String, Vec<S>>,
    steps: i32,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            second_moment: BTreeMap::new(),
            steps: 0,
        }
    }

    /// Applies one update to each `(name, param, grad)`. Returns the gradient
    /// norm before clipping.
    pub fn step(&mut self, lr: f64, updates: Vec<(&str, &mut Tensor<S>, &Tensor<S>)>) -> f64 {
        self.steps += 1;
        let norm = updates
            .iter()
            .flat_map(|(_, _, g)| g.data())
            .map(|g| g.f64().powi(2))
            .sum::<f64>()
            .sqrt();
        let clip = if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };
        let OptimizerConfig {
            beta2, eps, weight_decay, ..
        } = self.cfg;
        let correction = 1.0 - beta2.powi(self.steps);
        for (name, param, grad) in updates {
            let v = self
                .second_moment
                .entry(name.to_string())
                .or_insert_with(|| vec![S::zero(); grad.numel()]);
            for ((p, &g), m) in param.data_mut().iter_mut().zip(grad.data()).zip(v.iter_mut()) {
                let g = g.f64() * clip;
                let mv = beta2 * m.f64() + (1.0 - beta2) * g * g;
                *m = S::of(mv);
                let pv = p.f64();
                *p = S::of(pv - lr * (g / ((mv / correction).sqrt() + eps) + weight_decay * pv));
            }
        }
        norm
    }
}
