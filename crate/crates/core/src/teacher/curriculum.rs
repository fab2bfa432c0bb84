//! Level schedule gated on trailing per-task success rates.

use super::TaskType;
use crate::environment::MapConfig;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const WINDOW: usize = 200;
pub const MIN_PER_TASK: usize = 20;
pub const THRESHOLD: f64 = 0.7;

/// `(size, goals, obstacles)` per level, 1-based.
pub const LEVELS: [(usize, usize, usize); 6] = [(3, 2, 0), (4, 2, 3), (5, 2, 6), (6, 4, 9), (7, 4, 12), (8, 4, 16)];

/// Larger maps used only for evaluation.
pub const GENERALIZATION: [(usize, usize, usize); 3] = [(9, 6, 20), (10, 6, 24), (11, 8, 28)];

pub fn level_config(level: usize) -> MapConfig {
    let (size, goals, obstacles) = LEVELS[level.clamp(1, LEVELS.len()) - 1];
    MapConfig::square(size, goals, obstacles, level)
}

/// Config for one of the generalization sizes (9, 10, 11).
pub fn generalization_config(size: usize) -> Option<MapConfig> {
    GENERALIZATION
        .iter()
        .find(|(s, _, _)| *s == size)
        .map(|&(s, g, o)| MapConfig::square(s, g, o, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub level: usize,
    pub max_level: usize,
    pub window: VecDeque<(TaskType, bool)>,
    /// Task types that must clear the threshold; defaults to all five.
    pub tasks: Vec<TaskType>,
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new(1, LEVELS.len(), TaskType::ALL.to_vec())
    }
}

impl CurriculumState {
    pub fn new(level: usize, max_level: usize, tasks: Vec<TaskType>) -> Self {
        let max_level = max_level.clamp(1, LEVELS.len());
        Self {
            level: level.clamp(1, max_level),
            max_level,
            window: VecDeque::with_capacity(WINDOW),
            tasks,
        }
    }

    pub fn config(&self) -> MapConfig {
        level_config(self.level)
    }

    /// `(successes, sessions)` for `task` within the window.
    pub fn tally(&self, task: TaskType) -> (usize, usize) {
        self.window
            .iter()
            .filter(|(t, _)| *t == task)
            .fold((0, 0), |(s, n), (_, ok)| (s + *ok as usize, n + 1))
    }

    pub fn rate(&self, task: TaskType) -> Option<f64> {
        let (s, n) = self.tally(task);
        (n > 0).then(|| s as f64 / n as f64)
    }

    /// Records a session; returns `true` when the level advanced.
    pub fn update(&mut self, task: TaskType, success: bool) -> bool {
        if self.window.len() == WINDOW {
            self.window.pop_front();
        }
        self.window.push_back((task, success));
        if self.level >= self.max_level {
            return false;
        }
        // a full window is required, so one 200-session stream advances once
        let ready = self.window.len() == WINDOW
            && self.tasks.iter().all(|&t| {
                let (s, n) = self.tally(t);
                n >= MIN_PER_TASK && s as f64 / n as f64 > THRESHOLD
            });
        if ready {
            self.level += 1;
            self.window.clear();
        }
        ready
    }
}
