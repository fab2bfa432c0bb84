//! Synchronous advantage actor-critic: rollout collection behind a barrier,
//! n-step advantages, the policy-gradient loss and RMSprop.

mod optimizer;
mod trainer;
mod worker;


pub use optimizer::{rmsprop_update, OptimizerState};
pub use trainer::{random_seed_for, MetricRecord, Trainer, TrainerState};
pub use worker::{collect_minibatch, ActiveSession, Minibatch, Outcome, RngState, Worker, WorkerState};

use crate::error::{Error, Result};
use crate::teacher::TaskType;
use crate::tensor::{Graph, NodeId, Tensor};
use serde::{Deserialize, Serialize};

fn default_tasks() -> Vec<TaskType> {
    TaskType::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// Entropy weight (kappa).
    pub entropy_weight: f64,
    /// Value regression weight (eta).
    pub value_weight: f64,
    pub learning_rate: f64,
    pub rms_epsilon: f64,
    pub rms_decay: f64,
    pub momentum: f64,
    pub n_agents: usize,
    pub n_batch: usize,
    pub minibatches: u64,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskType>,
    pub start_level: usize,
    pub max_level: usize,
    /// Advance levels from trailing success rates; when false the level is
    /// pinned to `start_level`.
    pub curriculum: bool,
    /// Step workers on scoped threads instead of round-robin.
    pub parallel: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            entropy_weight: 0.05,
            value_weight: 1.0,
            learning_rate: 1e-5,
            rms_epsilon: 0.01,
            rms_decay: 0.95,
            momentum: 0.9,
            n_agents: 32,
            n_batch: 128,
            minibatches: 2_000_000,
            tasks: default_tasks(),
            start_level: 1,
            max_level: 6,
            curriculum: true,
            parallel: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_batch == 0 || self.n_batch % self.n_agents != 0 {
            return Err(Error::Config(format!(
                "batch {} must be a positive multiple of {} agents",
                self.n_batch, self.n_agents
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("no task types enabled".into()));
        }
        if !(1..=6).contains(&self.start_level) || self.max_level < self.start_level || self.max_level > 6 {
            return Err(Error::Config("levels must satisfy 1 <= start <= max <= 6".into()));
        }
        let rates = [self.learning_rate, self.rms_epsilon, self.rms_decay, self.momentum];
        if rates.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("optimizer settings must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Steps per worker per minibatch (the `n` of n-step TD).
    pub fn segment(&self) -> usize {
        self.n_batch / self.n_agents
    }
}

/// One environment step as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: usize,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    pub entropy: f64,
    pub terminal: bool,
}

/// A worker's contribution to one minibatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub worker: usize,
    pub records: Vec<StepRecord>,
    /// Value estimate after the last record; zero when it was terminal.
    pub bootstrap: f64,
}

/// Forward n-step returns and advantages. A terminal at step `t` cuts the
/// return after `r_t`; otherwise the tail bootstraps from `bootstrap`.
pub fn compute_advantages(rewards: &[f64], values: &[f64], terminals: &[bool], bootstrap: f64, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut returns = vec![0.0; n];
    let mut running = bootstrap;
    for t in (0..n).rev() {
        if terminals[t] {
            running = 0.0;
        }
        running = rewards[t] + gamma * running;
        returns[t] = running;
    }
    let adv = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    (adv, returns)
}

/// Per-step graph handles consumed by [`a2c_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossInput {
    pub log_probs: NodeId,
    pub probs: NodeId,
    pub value: NodeId,
    pub action: usize,
    pub advantage: f64,
    pub target: f64,
}

/// Summed (not averaged) loss pieces; divide by the record count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// `sum -log pi(a) * A`
    pub policy: f64,
    /// `sum 1/2 (R - v)^2`
    pub value: f64,
    /// `sum H(pi)`
    pub entropy: f64,
}

impl LossParts {
    pub fn total(&self, cfg: &TrainerConfig) -> f64 {
        self.policy + cfg.value_weight * self.value - cfg.entropy_weight * self.entropy
    }

    pub fn add(&mut self, o: &LossParts) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
    }

    pub fn scaled(&self, k: f64) -> LossParts {
        LossParts {
            policy: self.policy * k,
            value: self.value * k,
            entropy: self.entropy * k,
        }
    }
}

/// `scale * sum_t [ -log pi(a_t) A_t + eta/2 (R_t - v_t)^2 - kappa H_t ]`
/// with advantages held constant in the policy term.
pub fn a2c_loss(g: &mut Graph, steps: &[LossInput], cfg: &TrainerConfig, scale: f64) -> Result<(NodeId, LossParts)> {
    let mut parts = LossParts::default();
    let mut terms = Vec::with_capacity(steps.len());
    for s in steps {
        let lp = g.pick(s.log_probs, s.action)?;
        parts.policy += -g.value(lp).item() * s.advantage;
        let pg = g.scale(lp, -s.advantage);

        let diff = g.add_scalar(s.value, -s.target);
        let sq = g.mul(diff, diff)?;
        parts.value += 0.5 * g.value(sq).item();
        let vt = g.scale(sq, 0.5 * cfg.value_weight);

        let plogp = g.mul(s.probs, s.log_probs)?;
        let neg_h = g.sum(plogp);
        parts.entropy += -g.value(neg_h).item();
        let et = g.scale(neg_h, cfg.entropy_weight);

        let a = g.add(pg, vt)?;
        terms.push(g.add(a, et)?);
    }
    let mut total = match terms.first() {
        Some(t) => *t,
        None => g.constant(Tensor::scalar(0.0)),
    };
    for t in terms.iter().skip(1) {
        total = g.add(total, *t)?;
    }
    Ok((g.scale(total, scale), parts))
}
