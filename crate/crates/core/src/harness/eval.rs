//! Evaluation protocol: fresh sessions at a fixed map configuration,
//! curriculum off, per-task tallies aggregated across models.

use crate::agent::{reset_history, Agent, History};
use crate::environment::{bfs_distances, render, Action, Cell, EnvironmentState, Heading, MapConfig};
use crate::error::{Error, Result};
use crate::teacher::{generalization_config, judge, sample_task_from, Session, TargetSpec, TaskType, Teacher, Terminal};
use crate::tensor::ParameterSet;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Anything that can drive a session.
pub trait Policy {
    fn name(&self) -> String;
    fn begin(&mut self, _session: &Session) -> Result<()> {
        Ok(())
    }
    fn act(&mut self, session: &Session, rng: &mut ChaCha8Rng) -> Result<Action>;
}

/// The learned agent; greedy by default.
pub struct AgentPolicy<'a> {
    pub label: String,
    pub agent: &'a Agent,
    pub params: &'a ParameterSet,
    pub n_classes: usize,
    pub greedy: bool,
    history: Option<History>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(label: impl Into<String>, agent: &'a Agent, params: &'a ParameterSet, n_classes: usize) -> Self {
        Self {
            label: label.into(),
            agent,
            params,
            n_classes,
            greedy: true,
            history: None,
        }
    }
}

impl Policy for AgentPolicy<'_> {
    fn name(&self) -> String {
        format!("{} ({})", self.label, if self.greedy { "greedy" } else { "sampled" })
    }

    fn begin(&mut self, _session: &Session) -> Result<()> {
        self.history = Some(reset_history(self.agent.config()));
        Ok(())
    }

    fn act(&mut self, session: &Session, rng: &mut ChaCha8Rng) -> Result<Action> {
        let obs = render(&session.state, self.n_classes)?;
        let prev = self.history.take().unwrap_or_else(|| reset_history(self.agent.config()));
        let (a, _, next) = self.agent.act(self.params, &obs, &session.command.tokens, &prev, self.greedy, rng)?;
        self.history = Some(next);
        Ok(Action::from_index(a).expect("six actions"))
    }
}

pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn name(&self) -> String {
        "uniform".into()
    }
    fn act(&mut self, _session: &Session, rng: &mut ChaCha8Rng) -> Result<Action> {
        Ok(Action::ALL[rng.random_range(0..Action::COUNT)])
    }
}

/// Turns on the spot forever.
pub struct TurnPolicy;

impl Policy for TurnPolicy {
    fn name(&self) -> String {
        "turn-only".into()
    }
    fn act(&mut self, _session: &Session, _rng: &mut ChaCha8Rng) -> Result<Action> {
        Ok(Action::TurnLeft)
    }
}

/// Shortest-path follower with full knowledge of the target.
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "bfs-oracle".into()
    }
    fn act(&mut self, session: &Session, _rng: &mut ChaCha8Rng) -> Result<Action> {
        oracle_action(&session.state, &session.target)
            .ok_or_else(|| Error::Infeasible("target unreachable from the agent".into()))
    }
}

fn move_towards(heading: Heading, from: Cell, to: Cell) -> Action {
    let dir = match (to.row as isize - from.row as isize, to.col as isize - from.col as isize) {
        (-1, 0) => Heading::N,
        (1, 0) => Heading::S,
        (0, -1) => Heading::W,
        _ => Heading::E,
    };
    Action::ALL
        .into_iter()
        .find(|a| a.direction(heading) == Some(dir))
        .expect("every compass direction has a move")
}

/// Next move on a shortest path into the success set, never touching
/// anything but the goal. `None` when the goal cannot be reached.
pub fn oracle_action(state: &EnvironmentState, target: &TargetSpec) -> Option<Action> {
    let here = state.agent;
    // cells one move away from winning; same rule for touching an object
    // and for stepping onto a free goal cell
    let finals: Vec<Cell> = target
        .success_cells
        .iter()
        .flat_map(|g| state.neighbours(*g).collect::<Vec<_>>())
        .filter(|c| state.is_passable(*c) || *c == here)
        .collect();
    let cols = state.cols;
    let idx = |c: Cell| c.row * cols + c.col;
    if finals.contains(&here) {
        let goal = target.success_cells.iter().find(|g| g.manhattan(here) == 1)?;
        return Some(move_towards(state.heading, here, *goal));
    }
    let dist = bfs_distances(state, here);
    let best = finals.iter().filter(|c| dist[idx(**c)] != usize::MAX).min_by_key(|c| (dist[idx(**c)], **c))?;
    // walk back from the chosen final cell to the first step
    let from_goal = bfs_distances(state, *best);
    let next = state
        .neighbours(here)
        .filter(|n| state.is_passable(*n) && from_goal[idx(*n)] != usize::MAX)
        .min_by_key(|n| (from_goal[idx(*n)], *n))?;
    Some(move_towards(state.heading, here, next))
}

/// Per-task tallies for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub sessions: usize,
    /// task name -> (sessions, successes)
    pub tally: BTreeMap<String, (usize, usize)>,
    pub timeouts: usize,
    pub mean_steps: f64,
}

impl RunReport {
    pub fn successes(&self) -> usize {
        self.tally.values().map(|(_, s)| s).sum()
    }

    /// Overall success in percent.
    pub fn rate(&self) -> f64 {
        100.0 * self.successes() as f64 / self.sessions.max(1) as f64
    }

    pub fn task_rate(&self, task: TaskType) -> Option<f64> {
        self.tally.get(task.name()).filter(|(n, _)| *n > 0).map(|(n, s)| 100.0 * *s as f64 / *n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    /// Percent, mean over runs.
    pub mean: f64,
    pub std: f64,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: MapConfig,
    pub sessions_per_run: usize,
    pub action_selection: String,
    pub runs: Vec<RunReport>,
    pub tasks: Vec<TaskSummary>,
    pub overall: TaskSummary,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl EvalReport {
    fn from_runs(map: MapConfig, n: usize, action_selection: String, runs: Vec<RunReport>) -> Self {
        let mut tasks = Vec::new();
        for t in TaskType::ALL {
            let rates: Vec<f64> = runs.iter().filter_map(|r| r.task_rate(t)).collect();
            if rates.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&rates);
            tasks.push(TaskSummary {
                task: t.name().into(),
                mean,
                std,
                sessions: runs.iter().map(|r| r.tally.get(t.name()).map_or(0, |x| x.0)).sum(),
            });
        }
        let (mean, std) = mean_std(&runs.iter().map(RunReport::rate).collect::<Vec<_>>());
        let overall = TaskSummary {
            task: "all".into(),
            mean,
            std,
            sessions: runs.iter().map(|r| r.sessions).sum(),
        };
        Self {
            map,
            sessions_per_run: n,
            action_selection,
            runs,
            tasks,
            overall,
        }
    }

    /// Table-style text, rates to one decimal.
    pub fn table(&self) -> String {
        let m = &self.map;
        let mut s = format!(
            "map {}x{} objects {} obstacles {}, {} sessions x {} runs, {}\n",
            m.rows,
            m.cols,
            m.n_objects,
            m.n_obstacles,
            self.sessions_per_run,
            self.runs.len(),
            self.action_selection
        );
        for t in self.tasks.iter().chain(std::iter::once(&self.overall)) {
            s += &format!("{:<10} {:>5.1} ± {:.1}  (n={})\n", t.task, t.mean, t.std, t.sessions);
        }
        s
    }
}

/// Runs `n` sessions; the same seed yields the same sessions for every
/// policy, so models are compared on identical scenes.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    teacher: &Teacher,
    map: &MapConfig,
    tasks: &[TaskType],
    n: usize,
    seed: u64,
) -> Result<RunReport> {
    let mut scene_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
    act_rng.set_stream(1);
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let (mut timeouts, mut steps) = (0, 0usize);
    for _ in 0..n {
        let task = sample_task_from(tasks, &mut scene_rng);
        let mut session = teacher.new_session(map, task, &mut scene_rng)?;
        policy.begin(&session)?;
        let verdict = loop {
            let action = policy.act(&session, &mut act_rng)?;
            let event = session.state.step(action)?;
            steps += 1;
            let (_, v) = judge(&event, session.state.agent, &session.target);
            if v.is_terminal() {
                session.state.terminate();
                break v;
            }
        };
        let e = tally.entry(task.name().to_string()).or_default();
        e.0 += 1;
        e.1 += (verdict == Terminal::Success) as usize;
        timeouts += (verdict == Terminal::Timeout) as usize;
    }
    Ok(RunReport {
        model: policy.name(),
        sessions: n,
        tally,
        timeouts,
        mean_steps: steps as f64 / n.max(1) as f64,
    })
}

pub fn run_evaluation(
    policies: &mut [Box<dyn Policy + '_>],
    teacher: &Teacher,
    map: &MapConfig,
    tasks: &[TaskType],
    n: usize,
    seed: u64,
) -> Result<EvalReport> {
    if policies.is_empty() {
        return Err(Error::Checkpoint("no models to evaluate".into()));
    }
    map.validate()?;
    let runs = policies
        .iter_mut()
        .map(|p| evaluate_policy(p.as_mut(), teacher, map, tasks, n, seed))
        .collect::<Result<Vec<_>>>()?;
    let selection = runs.iter().map(|r| r.model.clone()).collect::<Vec<_>>().join(", ");
    Ok(EvalReport::from_runs(*map, n, selection, runs))
}

/// Evaluation on the larger held-out maps, without retraining.
pub fn run_generalization(
    policies: &mut [Box<dyn Policy + '_>],
    teacher: &Teacher,
    sizes: &[usize],
    tasks: &[TaskType],
    n: usize,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    sizes
        .iter()
        .map(|&s| {
            let map = generalization_config(s)
                .ok_or_else(|| Error::Config(format!("no generalization suite for size {s} (have 9, 10, 11)")))?;
            run_evaluation(policies, teacher, &map, tasks, n, seed)
        })
        .collect()
}

/// Success fraction of the uniform random policy.
pub fn random_baseline(teacher: &Teacher, map: &MapConfig, tasks: &[TaskType], n: usize, seed: u64) -> Result<f64> {
    let r = evaluate_policy(&mut UniformPolicy, teacher, map, tasks, n, seed)?;
    Ok(r.successes() as f64 / n.max(1) as f64)
}
