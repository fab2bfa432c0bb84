//! Rollout workers and barrier-synchronised minibatch collection.

use super::{a2c_loss, compute_advantages, LossInput, LossParts, Rollout, StepRecord, TrainerConfig};
use crate::agent::{reset_history, sample_categorical, Agent, History, HistoryNodes};
use crate::environment::{render, Action};
use crate::error::{Error, Result};
use crate::teacher::{judge, sample_task_from, CurriculumState, Session, TaskType, Teacher, Terminal};
use crate::tensor::{GradBuffer, Graph, ParameterSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128`.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Checkpoint("malformed rng state".into());
        let bytes = hex::decode(&self.seed).map_err(|_| bad())?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

/// A session in progress plus the agent's recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSession {
    pub session: Session,
    pub history: History,
    pub steps: usize,
    pub reward: f64,
}

/// How a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub worker: usize,
    pub task: TaskType,
    pub terminal: Terminal,
    pub steps: usize,
    pub reward: f64,
    pub level: usize,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.terminal == Terminal::Success
    }
}

#[derive(Debug, Clone)]
pub struct Worker {
    pub id: usize,
    pub rng: ChaCha8Rng,
    pub active: Option<ActiveSession>,
    pub curriculum: CurriculumState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub id: usize,
    pub rng: RngState,
    pub active: Option<ActiveSession>,
    pub curriculum: CurriculumState,
}

/// What one worker hands back at the barrier.
struct Segment {
    rollout: Rollout,
    grads: GradBuffer,
    parts: LossParts,
    outcome: Option<Outcome>,
}

impl Worker {
    pub fn new(id: usize, seed: u64, curriculum: CurriculumState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        Self {
            id,
            rng,
            active: None,
            curriculum,
        }
    }

    pub fn state(&self) -> WorkerState {
        WorkerState {
            id: self.id,
            rng: RngState::capture(&self.rng),
            active: self.active.clone(),
            curriculum: self.curriculum.clone(),
        }
    }

    pub fn from_state(s: &WorkerState) -> Result<Self> {
        Ok(Self {
            id: s.id,
            rng: s.rng.restore()?,
            active: s.active.clone(),
            curriculum: s.curriculum.clone(),
        })
    }

    /// Installs a prepared session (used for scripted scenarios).
    pub fn begin(&mut self, session: Session, agent: &Agent) {
        self.active = Some(ActiveSession {
            session,
            history: reset_history(agent.config()),
            steps: 0,
            reward: 0.0,
        });
    }

    fn ensure_session(&mut self, teacher: &Teacher, agent: &Agent) -> Result<()> {
        if self.active.is_none() {
            let task = sample_task_from(&self.curriculum.tasks, &mut self.rng);
            let cfg = self.curriculum.config();
            let session = teacher.new_session(&cfg, task, &mut self.rng)?;
            self.begin(session, agent);
        }
        Ok(())
    }

    /// Up to `cfg.segment()` steps under the current parameters; stops early
    /// when the session ends.
    fn collect(&mut self, agent: &Agent, params: &ParameterSet, teacher: &Teacher, cfg: &TrainerConfig) -> Result<Segment> {
        self.ensure_session(teacher, agent)?;
        let n_classes = teacher.n_classes();
        let mut active = self.active.take().expect("session ensured");
        let tokens = active.session.command.tokens.clone();
        let mut g = Graph::new(params);
        let mut h = HistoryNodes::constant(&mut g, &active.history);
        let mut records = Vec::with_capacity(cfg.segment());
        let mut inputs = Vec::with_capacity(cfg.segment());
        let mut outcome = None;
        for _ in 0..cfg.segment() {
            let obs = render(&active.session.state, n_classes)?;
            let out = agent.forward(&mut g, &obs, &tokens, &h)?;
            let probs = g.value(out.probs).data().to_vec();
            let action = sample_categorical(&probs, &mut self.rng);
            let state = &mut active.session.state;
            let event = state.step(Action::from_index(action).expect("policy has six outputs"))?;
            let (reward, verdict) = judge(&event, state.agent, &active.session.target);
            active.steps += 1;
            active.reward += reward;
            let log_prob = g.value(out.log_probs).data()[action];
            records.push(StepRecord {
                action,
                reward,
                value: g.value(out.value).item(),
                log_prob,
                entropy: crate::agent::entropy(&probs),
                terminal: verdict.is_terminal(),
            });
            inputs.push(LossInput {
                log_probs: out.log_probs,
                probs: out.probs,
                value: out.value,
                action,
                advantage: 0.0,
                target: 0.0,
            });
            h = out.next.with_action(action);
            if verdict.is_terminal() {
                state.terminate();
                outcome = Some(Outcome {
                    worker: self.id,
                    task: active.session.command.task,
                    terminal: verdict,
                    steps: active.steps,
                    reward: active.reward,
                    level: self.curriculum.level,
                });
                break;
            }
        }
        let history = h.to_history(&g);
        let bootstrap = if outcome.is_some() {
            0.0
        } else {
            let obs = render(&active.session.state, n_classes)?;
            let mut bg = Graph::new(params);
            let hb = HistoryNodes::constant(&mut bg, &history);
            let out = agent.forward(&mut bg, &obs, &tokens, &hb)?;
            bg.value(out.value).item()
        };

        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let values: Vec<f64> = records.iter().map(|r| r.value).collect();
        let terminals: Vec<bool> = records.iter().map(|r| r.terminal).collect();
        let (adv, ret) = compute_advantages(&rewards, &values, &terminals, bootstrap, cfg.gamma);
        for ((inp, a), r) in inputs.iter_mut().zip(&adv).zip(&ret) {
            inp.advantage = *a;
            inp.target = *r;
        }
        let (loss, parts) = a2c_loss(&mut g, &inputs, cfg, 1.0)?;
        let mut grads = params.grad_buffer();
        g.backward(loss)?.accumulate_into(&mut grads);

        if let Some(o) = &outcome {
            self.curriculum.update(o.task, o.success());
        } else {
            active.history = history;
            self.active = Some(active);
        }
        Ok(Segment {
            rollout: Rollout {
                worker: self.id,
                records,
                bootstrap,
            },
            grads,
            parts,
            outcome,
        })
    }
}

/// Everything gathered between two parameter updates.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub rollouts: Vec<Rollout>,
    /// Sum of per-record loss gradients (not yet averaged).
    pub grads: GradBuffer,
    /// Summed loss pieces.
    pub parts: LossParts,
    pub outcomes: Vec<Outcome>,
}

impl Minibatch {
    pub fn records(&self) -> usize {
        self.rollouts.iter().map(|r| r.records.len()).sum()
    }
}

/// Every worker advances under the same read-only parameters; gradients
/// are summed in worker order so threaded and round-robin runs agree.
pub fn collect_minibatch(
    workers: &mut [Worker],
    agent: &Agent,
    params: &ParameterSet,
    teacher: &Teacher,
    cfg: &TrainerConfig,
) -> Result<Minibatch> {
    let before = params.checksum();
    let segments: Vec<Result<Segment>> = if cfg.parallel && workers.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| scope.spawn(move || w.collect(agent, params, teacher, cfg)))
                .collect();
            handles
                .into_iter()
                .enumerate()
                .map(|(i, h)| h.join().unwrap_or(Err(Error::WorkerFailed(i))))
                .collect()
        })
    } else {
        workers.iter_mut().map(|w| w.collect(agent, params, teacher, cfg)).collect()
    };
    if params.checksum() != before {
        return Err(Error::Config("parameters changed during collection".into()));
    }
    let mut batch = Minibatch {
        rollouts: Vec::with_capacity(workers.len()),
        grads: params.grad_buffer(),
        parts: LossParts::default(),
        outcomes: Vec::new(),
    };
    for (i, seg) in segments.into_iter().enumerate() {
        let seg = seg.map_err(|e| match e {
            Error::WorkerFailed(_) => Error::WorkerFailed(i),
            other => other,
        })?;
        batch.grads.add_buffer(&seg.grads);
        batch.parts.add(&seg.parts);
        batch.rollouts.push(seg.rollout);
        batch.outcomes.extend(seg.outcome);
    }
    Ok(batch)
}
