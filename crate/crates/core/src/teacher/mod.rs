//! Programmatic teacher: vocabulary and grammar, task sampling, scene
//! constraints, commands, rewards and the curriculum.

mod curriculum;
mod grammar;
mod tasks;
mod vocab;


pub use curriculum::{
    generalization_config, level_config, CurriculumState, GENERALIZATION, LEVELS, MIN_PER_TASK, THRESHOLD, WINDOW,
};
pub use grammar::{grammar_enumerate, Bindings, Grammar, Symbol, DESK_GRAMMAR, SLOTS};
pub use tasks::{
    generate_command, judge, parse_command, sample_task, sample_task_from, scene_spec, target_spec, Command,
    Direction, Referents, SceneSpec, SuccessMode, TargetSpec, TaskType, Terminal, OUTCOME_BONUS, TIME_PENALTY,
};
pub use vocab::{Vocabulary, WordCategory, DESK_VOCAB};

use crate::environment::{generate_map, place_entities, EnvironmentState, MapConfig};
use crate::error::{Error, Result};
use rand::Rng;

const MAP_RETRIES: usize = 100;

/// A freshly arranged session: scene, command and its ground truth.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Session {
    pub state: EnvironmentState,
    pub command: Command,
    pub target: TargetSpec,
}

/// Immutable language resources shared by all workers.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub vocab: Vocabulary,
    pub grammar: Grammar,
}

impl Teacher {
    pub fn new(vocab: Vocabulary, grammar: Grammar) -> Self {
        Self { vocab, grammar }
    }

    pub fn desk() -> Self {
        let vocab = Vocabulary::desk();
        let grammar = Grammar::desk(&vocab);
        Self { vocab, grammar }
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.n_classes()
    }

    /// Map generation, placement (regenerating the map when placement gives
    /// up), command sampling and target extraction for one session.
    pub fn new_session<R: Rng + ?Sized>(&self, cfg: &MapConfig, task: TaskType, rng: &mut R) -> Result<Session> {
        let spec = scene_spec(task, cfg, self.n_classes(), rng)?;
        for _ in 0..MAP_RETRIES {
            let map = generate_map(cfg, rng)?;
            let state = match place_entities(&map, &spec.placement, rng) {
                Ok(s) => s,
                Err(Error::RegenerateMap) => continue,
                Err(e) => return Err(e),
            };
            let command = generate_command(&state, &spec, &self.grammar, &self.vocab, rng)?;
            let target = target_spec(&state, &command)?;
            return Ok(Session { state, command, target });
        }
        Err(Error::Infeasible(format!(
            "could not arrange a {task} scene on {}x{}",
            cfg.rows, cfg.cols
        )))
    }
}
