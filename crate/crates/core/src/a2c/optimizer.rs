//! RMSprop with momentum.

use super::TrainerConfig;
use crate::tensor::{ParameterSet, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Moving average of squared gradients.
    pub square_avg: Vec<Tensor>,
    pub momentum: Vec<Tensor>,
    pub steps: u64,
    pub skipped: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Tensor> = params.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            square_avg: zeros.clone(),
            momentum: zeros,
            steps: 0,
            skipped: 0,
        }
    }
}

/// `s <- rho s + (1-rho) g^2; u <- m u + lr g / sqrt(s + eps); theta <- theta - u`
/// using the gradients accumulated in `params`. Returns `false` (and leaves
/// everything untouched) when any gradient is non-finite.
pub fn rmsprop_update(params: &mut ParameterSet, opt: &mut OptimizerState, cfg: &TrainerConfig) -> bool {
    if params.grads().iter().any(|g| !g.is_finite()) {
        opt.skipped += 1;
        return false;
    }
    let (rho, eps, lr, mom) = (cfg.rms_decay, cfg.rms_epsilon, cfg.learning_rate, cfg.momentum);
    let (values, grads) = params.values_and_grads_mut();
    for (((theta, g), s), u) in values
        .iter_mut()
        .zip(grads)
        .zip(opt.square_avg.iter_mut())
        .zip(opt.momentum.iter_mut())
    {
        for (((th, gi), si), ui) in theta
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(s.data_mut().iter_mut())
            .zip(u.data_mut().iter_mut())
        {
            *si = rho * *si + (1.0 - rho) * gi * gi;
            *ui = mom * *ui + lr * gi / (*si + eps).sqrt();
            *th -= *ui;
        }
    }
    opt.steps += 1;
    true
}
