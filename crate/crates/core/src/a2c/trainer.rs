//! The synchronous training loop.

use super::{collect_minibatch, rmsprop_update, OptimizerState, Outcome, TrainerConfig, Worker, WorkerState};
use crate::agent::{Agent, AgentConfig};
use crate::error::Result;
use crate::teacher::{CurriculumState, TaskType, Teacher, WINDOW};
use crate::tensor::ParameterSet;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// splitmix64 of `seed` mixed with the worker index.
pub fn random_seed_for(seed: u64, worker: usize) -> u64 {
    let mut z = seed ^ (worker as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One JSON line per minibatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub batch: u64,
    pub env_steps: u64,
    pub records: usize,
    /// Mean per record.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub loss: f64,
    pub sessions: u64,
    pub finished: usize,
    /// Over the last 200 finished sessions, all workers pooled.
    pub success_rate: Option<f64>,
    pub task_success: BTreeMap<String, Option<f64>>,
    /// Workers per curriculum level (index 0 is level 1).
    pub levels: Vec<usize>,
    pub updated: bool,
    pub skipped_updates: u64,
}

/// Everything except parameters and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub config: TrainerConfig,
    pub agent: AgentConfig,
    pub seed: u64,
    pub batches: u64,
    pub env_steps: u64,
    pub sessions: u64,
    pub recent: VecDeque<Outcome>,
    pub workers: Vec<WorkerState>,
}

pub struct Trainer {
    pub config: TrainerConfig,
    pub teacher: Teacher,
    pub agent: Agent,
    pub params: ParameterSet,
    pub optimizer: OptimizerState,
    pub workers: Vec<Worker>,
    pub seed: u64,
    pub batches: u64,
    pub env_steps: u64,
    pub sessions: u64,
    pub recent: VecDeque<Outcome>,
}

impl Trainer {
    /// Trainer over the bundled desk vocabulary and grammar.
    pub fn new(config: TrainerConfig, agent_cfg: &AgentConfig, seed: u64) -> Result<Self> {
        Self::with_teacher(config, agent_cfg, seed, Teacher::desk())
    }

    pub fn with_teacher(config: TrainerConfig, agent_cfg: &AgentConfig, seed: u64, teacher: Teacher) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterSet::new(seed);
        let agent = Agent::new(&mut params, agent_cfg, teacher.vocab.len())?;
        let optimizer = OptimizerState::new(&params);
        let max = if config.curriculum { config.max_level } else { config.start_level };
        let workers = (0..config.n_agents)
            .map(|i| {
                let cur = CurriculumState::new(config.start_level, max, config.tasks.clone());
                Worker::new(i, random_seed_for(seed, i), cur)
            })
            .collect();
        Ok(Self {
            config,
            teacher,
            agent,
            params,
            optimizer,
            workers,
            seed,
            batches: 0,
            env_steps: 0,
            sessions: 0,
            recent: VecDeque::with_capacity(WINDOW),
        })
    }

    /// Rebuilds a trainer; parameters and moments come from the caller.
    pub fn restore(state: &TrainerState, teacher: Teacher, params: ParameterSet, optimizer: OptimizerState) -> Result<Self> {
        let mut t = Self::with_teacher(state.config.clone(), &state.agent, state.seed, teacher)?;
        if params.names() != t.params.names() || params.values().iter().zip(t.params.values()).any(|(a, b)| a.shape() != b.shape()) {
            return Err(crate::Error::Checkpoint("parameter layout does not match the agent".into()));
        }
        if optimizer.square_avg.len() != params.len() || optimizer.momentum.len() != params.len() {
            return Err(crate::Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        t.params = params;
        t.optimizer = optimizer;
        t.workers = state.workers.iter().map(Worker::from_state).collect::<Result<_>>()?;
        t.batches = state.batches;
        t.env_steps = state.env_steps;
        t.sessions = state.sessions;
        t.recent = state.recent.clone();
        Ok(t)
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            config: self.config.clone(),
            agent: self.agent.config().clone(),
            seed: self.seed,
            batches: self.batches,
            env_steps: self.env_steps,
            sessions: self.sessions,
            recent: self.recent.clone(),
            workers: self.workers.iter().map(Worker::state).collect(),
        }
    }

    /// Collect one minibatch, then apply a single averaged update.
    pub fn step(&mut self) -> Result<MetricRecord> {
        let batch = collect_minibatch(&mut self.workers, &self.agent, &self.params, &self.teacher, &self.config)?;
        let records = batch.records();
        self.params.zero_grad();
        self.params.accumulate(&batch.grads);
        let updated = if records > 0 {
            self.params.scale_grads(1.0 / records as f64);
            rmsprop_update(&mut self.params, &mut self.optimizer, &self.config)
        } else {
            false
        };
        self.batches += 1;
        self.env_steps += records as u64;
        self.sessions += batch.outcomes.len() as u64;
        for o in &batch.outcomes {
            if self.recent.len() == WINDOW {
                self.recent.pop_front();
            }
            self.recent.push_back(*o);
        }
        let mean = batch.parts.scaled(1.0 / records.max(1) as f64);
        Ok(MetricRecord {
            batch: self.batches,
            env_steps: self.env_steps,
            records,
            policy_loss: mean.policy,
            value_loss: mean.value,
            entropy: mean.entropy,
            loss: mean.total(&self.config),
            sessions: self.sessions,
            finished: batch.outcomes.len(),
            success_rate: rate(self.recent.iter()),
            task_success: TaskType::ALL
                .iter()
                .map(|t| (t.name().to_string(), rate(self.recent.iter().filter(|o| o.task == *t))))
                .collect(),
            levels: self.level_histogram(),
            updated,
            skipped_updates: self.optimizer.skipped,
        })
    }

    pub fn level_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; 6];
        for w in &self.workers {
            h[w.curriculum.level - 1] += 1;
        }
        h
    }
}

fn rate<'a>(it: impl Iterator<Item = &'a Outcome>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0usize);
    for o in it {
        n += 1;
        s += o.success() as usize;
    }
    (n > 0).then(|| s as f64 / n as f64)
}
