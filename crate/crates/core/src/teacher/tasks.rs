//! Task sampling, scene constraints, commands, targets and rewards.

use super::{Grammar, Vocabulary};
use crate::environment::{
    middle_cell, Cell, EnvironmentState, Heading, MapConfig, PlacementSpec, Reach, Relation, StepEvent,
};
use crate::error::{Error, Result};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

pub const TIME_PENALTY: f64 = -0.01;
pub const OUTCOME_BONUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Nav,
    NavNr,
    NavBw,
    NavAvoid,
    NavDir,
}

impl TaskType {
    pub const ALL: [TaskType; 5] = [
        TaskType::Nav,
        TaskType::NavNr,
        TaskType::NavBw,
        TaskType::NavAvoid,
        TaskType::NavDir,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskType::Nav => "nav",
            TaskType::NavNr => "nav_nr",
            TaskType::NavBw => "nav_bw",
            TaskType::NavAvoid => "nav_avoid",
            TaskType::NavDir => "nav_dir",
        }
    }

    /// Grammar root holding this task's templates.
    pub fn root(self) -> &'static str {
        match self {
            TaskType::Nav => "NAV",
            TaskType::NavNr => "NAV_NR",
            TaskType::NavBw => "NAV_BW",
            TaskType::NavAvoid => "NAV_AVOID",
            TaskType::NavDir => "NAV_DIR",
        }
    }

    pub fn min_objects(self) -> usize {
        if self == TaskType::Nav {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task type `{s}`")))
    }
}

/// Allocentric relation words: front = north, behind = south, left = west,
/// right = east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Front,
    Behind,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Front, Direction::Behind, Direction::Left, Direction::Right];

    pub fn word(self) -> &'static str {
        match self {
            Direction::Front => "front",
            Direction::Behind => "behind",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.word() == w)
    }

    pub fn heading(self) -> Heading {
        match self {
            Direction::Front => Heading::N,
            Direction::Behind => Heading::S,
            Direction::Left => Heading::W,
            Direction::Right => Heading::E,
        }
    }
}

/// Entities a command talks about. `anchor` is the named object (the target
/// for `nav`, the avoided class for `nav_avoid`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Referents {
    pub anchor: usize,
    pub second: Option<usize>,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub task: TaskType,
    pub placement: PlacementSpec,
    pub referents: Referents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub task: TaskType,
    pub words: Vec<String>,
    pub tokens: Vec<usize>,
    pub referents: Referents,
}

impl Command {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMode {
    /// Bump into an object on a success cell.
    Contact,
    /// Stand on a success cell.
    Enter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub success_cells: BTreeSet<Cell>,
    pub failure_classes: BTreeSet<usize>,
    pub mode: SuccessMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    None,
    Success,
    Failure,
    Timeout,
}

impl Terminal {
    pub fn is_terminal(self) -> bool {
        self != Terminal::None
    }
}

pub fn sample_task<R: Rng + ?Sized>(rng: &mut R) -> TaskType {
    TaskType::ALL[rng.random_range(0..TaskType::ALL.len())]
}

/// Uniform over `allowed` (non-empty).
pub fn sample_task_from<R: Rng + ?Sized>(allowed: &[TaskType], rng: &mut R) -> TaskType {
    allowed[rng.random_range(0..allowed.len())]
}

/// Draws `cfg.n_objects` distinct classes and the geometric constraints
/// that make a command for `task` well-posed.
pub fn scene_spec<R: Rng + ?Sized>(task: TaskType, cfg: &MapConfig, n_classes: usize, rng: &mut R) -> Result<SceneSpec> {
    if cfg.n_objects < task.min_objects() || cfg.n_objects > n_classes {
        return Err(Error::Infeasible(format!(
            "{task} needs {}..={n_classes} objects, map has {}",
            task.min_objects(),
            cfg.n_objects
        )));
    }
    let mut pool: Vec<usize> = (0..n_classes).collect();
    pool.shuffle(rng);
    let classes: Vec<usize> = pool[..cfg.n_objects].to_vec();
    let (c0, c1) = (classes[0], classes.get(1).copied());
    let (relation, reach, referents) = match task {
        TaskType::Nav => (
            Relation::None,
            Reach::AnyOf(vec![c0]),
            Referents {
                anchor: c0,
                second: None,
                direction: None,
            },
        ),
        TaskType::NavNr => (
            Relation::Adjacent {
                anchor: c0,
                other: c1.expect("checked"),
                direction: None,
            },
            Reach::AnyOf(vec![c1.expect("checked")]),
            Referents {
                anchor: c0,
                second: None,
                direction: None,
            },
        ),
        TaskType::NavBw => (
            Relation::Between {
                a: c0,
                b: c1.expect("checked"),
            },
            Reach::Middle,
            Referents {
                anchor: c0,
                second: c1,
                direction: None,
            },
        ),
        TaskType::NavAvoid => (
            Relation::None,
            Reach::AnyOf(classes[1..].to_vec()),
            Referents {
                anchor: c0,
                second: None,
                direction: None,
            },
        ),
        TaskType::NavDir => {
            let dir = *Direction::ALL.choose(rng).expect("non-empty");
            (
                Relation::Adjacent {
                    anchor: c0,
                    other: c1.expect("checked"),
                    direction: Some(dir.heading()),
                },
                Reach::AnyOf(vec![c1.expect("checked")]),
                Referents {
                    anchor: c0,
                    second: None,
                    direction: Some(dir),
                },
            )
        }
    };
    Ok(SceneSpec {
        task,
        placement: PlacementSpec {
            classes,
            relation,
            reach,
        },
        referents,
    })
}

fn slot_bindings(r: &Referents, vocab: &Vocabulary) -> Result<super::grammar::Bindings> {
    let mut b = super::grammar::Bindings::new();
    b.insert("OBJ".into(), vocab.class_word(r.anchor)?.to_string());
    if let Some(s) = r.second {
        b.insert("OBJ2".into(), vocab.class_word(s)?.to_string());
    }
    if let Some(d) = r.direction {
        b.insert("DIR".into(), d.word().to_string());
    }
    Ok(b)
}

/// Samples a sentence for `spec` and checks its referents occur exactly
/// once on `s1`.
pub fn generate_command<R: Rng + ?Sized>(
    s1: &EnvironmentState,
    spec: &SceneSpec,
    grammar: &Grammar,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<Command> {
    let root = spec.task.root();
    if !grammar.has(root) {
        return Err(Error::Grammar(format!("no template for {}", spec.task)));
    }
    let r = spec.referents;
    for class in std::iter::once(r.anchor).chain(r.second) {
        let n = s1.objects().filter(|(_, o)| o.class == class).count();
        if n != 1 {
            return Err(Error::Scene(format!("referent class {class} appears {n} times")));
        }
    }
    let words = grammar.generate(root, &slot_bindings(&r, vocab)?, rng)?;
    let tokens = vocab.encode(&words)?;
    Ok(Command {
        task: spec.task,
        words,
        tokens,
        referents: r,
    })
}

/// Recovers every `(task, referents)` reading of a sentence.
pub fn parse_command(words: &[String], grammar: &Grammar, vocab: &Vocabulary) -> Result<Vec<(TaskType, Referents)>> {
    let mut out = Vec::new();
    for task in TaskType::ALL {
        if !grammar.has(task.root()) {
            continue;
        }
        for b in grammar.recognize(task.root(), words)? {
            let class = |slot: &str| b.get(slot).and_then(|w| vocab.class_of(w));
            let Some(anchor) = class("OBJ") else {
                continue;
            };
            out.push((
                task,
                Referents {
                    anchor,
                    second: class("OBJ2"),
                    direction: b.get("DIR").and_then(|w| Direction::from_word(w)),
                },
            ));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Ground-truth success cells and failure classes for a command on its
/// initial scene.
pub fn target_spec(s1: &EnvironmentState, command: &Command) -> Result<TargetSpec> {
    let r = command.referents;
    let find = |class: usize| {
        s1.object_cell(class)
            .ok_or_else(|| Error::Scene(format!("referent class {class} missing")))
    };
    let mut mode = SuccessMode::Contact;
    let success: BTreeSet<Cell> = match command.task {
        TaskType::Nav => BTreeSet::from([find(r.anchor)?]),
        TaskType::NavNr => {
            let a = find(r.anchor)?;
            s1.neighbours(a)
                .filter(|c| matches!(s1.tile(*c), crate::environment::Tile::Object(_)))
                .collect()
        }
        TaskType::NavBw => {
            mode = SuccessMode::Enter;
            let second = r.second.ok_or_else(|| Error::Scene("nav_bw needs two anchors".into()))?;
            let m = middle_cell(s1, r.anchor, second)
                .filter(|m| s1.is_passable(*m))
                .ok_or_else(|| Error::Scene("anchors are not one free cell apart".into()))?;
            BTreeSet::from([m])
        }
        TaskType::NavAvoid => s1.objects().filter(|(_, o)| o.class != r.anchor).map(|(c, _)| c).collect(),
        TaskType::NavDir => {
            let dir = r.direction.ok_or_else(|| Error::Scene("nav_dir needs a direction".into()))?;
            let a = find(r.anchor)?;
            a.step(dir.heading(), s1.rows, s1.cols)
                .filter(|c| matches!(s1.tile(*c), crate::environment::Tile::Object(_)))
                .into_iter()
                .collect()
        }
    };
    if success.is_empty() {
        return Err(Error::Scene(format!("{} command has no success cell", command.task)));
    }
    let failure_classes = s1
        .objects()
        .filter(|(c, _)| mode == SuccessMode::Enter || !success.contains(c))
        .map(|(_, o)| o.class)
        .collect();
    Ok(TargetSpec {
        success_cells: success,
        failure_classes,
        mode,
    })
}

/// Reward and verdict for one step; `agent` is the agent cell after the step.
pub fn judge(event: &StepEvent, agent: Cell, spec: &TargetSpec) -> (f64, Terminal) {
    let verdict = match (event, spec.mode) {
        (StepEvent::ReachedObject { cell, .. }, SuccessMode::Contact) if spec.success_cells.contains(cell) => {
            Terminal::Success
        }
        (StepEvent::ReachedObject { class, .. }, _) if spec.failure_classes.contains(class) => Terminal::Failure,
        (_, SuccessMode::Enter) if spec.success_cells.contains(&agent) => Terminal::Success,
        (StepEvent::Timeout, _) => Terminal::Timeout,
        _ => Terminal::None,
    };
    let reward = match verdict {
        Terminal::Success => TIME_PENALTY + OUTCOME_BONUS,
        Terminal::Failure => TIME_PENALTY - OUTCOME_BONUS,
        _ => TIME_PENALTY,
    };
    (reward, verdict)
}
