//! Scene arrangement under task constraints.

use super::maze::bfs_distances;
use super::{Cell, EnvironmentState, Heading, Object, Tile};
use crate::error::{Error, Result};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

const ATTEMPTS: usize = 200;

/// Geometric constraint between named classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    None,
    /// `other` sits on the 4-neighbour of `anchor` in `direction`
    /// (any direction when `None`).
    Adjacent {
        anchor: usize,
        other: usize,
        direction: Option<Heading>,
    },
    /// `a` and `b` are collinear with exactly one free cell between them.
    Between { a: usize, b: usize },
}

/// Which goal must be reachable from the agent's start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reach {
    /// Contact with any object of these classes.
    AnyOf(Vec<usize>),
    /// Entering the free cell between the two `Between` anchors.
    Middle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementSpec {
    /// Distinct classes, one object each.
    pub classes: Vec<usize>,
    pub relation: Relation,
    pub reach: Reach,
}

impl PlacementSpec {
    fn validate(&self) -> Result<()> {
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::Scene("object classes must be distinct".into()));
        }
        let named = |c: usize| self.classes.contains(&c);
        let ok = match &self.relation {
            Relation::None => true,
            Relation::Adjacent { anchor, other, .. } => named(*anchor) && named(*other) && anchor != other,
            Relation::Between { a, b } => named(*a) && named(*b) && a != b,
        };
        let reach_ok = match &self.reach {
            Reach::AnyOf(cs) => !cs.is_empty() && cs.iter().all(|c| named(*c)),
            Reach::Middle => matches!(self.relation, Relation::Between { .. }),
        };
        if !ok || !reach_ok {
            return Err(Error::Scene("relation or reach refers to unplaced classes".into()));
        }
        Ok(())
    }
}

/// Cell between two `Between` anchors, if they are placed as required.
pub fn middle_cell(state: &EnvironmentState, a: usize, b: usize) -> Option<Cell> {
    let (ca, cb) = (state.object_cell(a)?, state.object_cell(b)?);
    let collinear = (ca.row == cb.row && ca.col.abs_diff(cb.col) == 2) || (ca.col == cb.col && ca.row.abs_diff(cb.row) == 2);
    collinear.then(|| Cell::new((ca.row + cb.row) / 2, (ca.col + cb.col) / 2))
}

/// Whether the agent can bump into the object at `target` (or is already
/// beside it) walking only over passable cells.
pub fn contact_reachable(state: &EnvironmentState, target: Cell) -> bool {
    let dist = bfs_distances(state, state.agent);
    state
        .neighbours(target)
        .any(|n| dist[n.row * state.cols + n.col] != usize::MAX)
}

fn random_object<R: Rng + ?Sized>(class: usize, rng: &mut R) -> Object {
    Object {
        class,
        yaw: rng.random_range(0.0..360.0),
        scale: rng.random_range(0.5..=1.0),
    }
}

fn try_place<R: Rng + ?Sized>(base: &EnvironmentState, spec: &PlacementSpec, rng: &mut R) -> Option<EnvironmentState> {
    let mut s = base.clone();
    let free: Vec<Cell> = s.cells().filter(|c| s.is_passable(*c)).collect();
    let mut reserved: Vec<Cell> = Vec::new();
    let put = |s: &mut EnvironmentState, cell: Cell, class: usize, rng: &mut R| {
        s.set_tile(cell, Tile::Object(random_object(class, rng)));
    };
    match &spec.relation {
        Relation::None => {}
        Relation::Adjacent {
            anchor,
            other,
            direction,
        } => {
            let a = *free.choose(rng)?;
            let dir = match direction {
                Some(d) => *d,
                None => *Heading::ALL.choose(rng)?,
            };
            let o = a.step(dir, s.rows, s.cols).filter(|c| s.is_passable(*c))?;
            put(&mut s, a, *anchor, rng);
            put(&mut s, o, *other, rng);
        }
        Relation::Between { a, b } => {
            let m = *free.choose(rng)?;
            let (dr, dc) = if rng.random_bool(0.5) { (0, 1) } else { (1, 0) };
            let ca = m.offset(-dr, -dc, s.rows, s.cols).filter(|c| s.is_passable(*c))?;
            let cb = m.offset(dr, dc, s.rows, s.cols).filter(|c| s.is_passable(*c))?;
            put(&mut s, ca, *a, rng);
            put(&mut s, cb, *b, rng);
            reserved.push(m);
        }
    }
    for &class in &spec.classes {
        if s.object_cell(class).is_some() {
            continue;
        }
        let spots: Vec<Cell> = s
            .cells()
            .filter(|c| s.is_passable(*c) && !reserved.contains(c))
            .collect();
        let cell = *spots.choose(rng)?;
        put(&mut s, cell, class, rng);
    }
    let spots: Vec<Cell> = s
        .cells()
        .filter(|c| s.is_passable(*c) && !reserved.contains(c))
        .collect();
    s.agent = *spots.choose(rng)?;
    s.heading = *Heading::ALL.choose(rng)?;
    s.t = 0;
    s.terminated = false;

    let reachable = match &spec.reach {
        Reach::AnyOf(classes) => classes
            .iter()
            .filter_map(|c| s.object_cell(*c))
            .any(|cell| contact_reachable(&s, cell)),
        Reach::Middle => {
            let Relation::Between { a, b } = spec.relation else {
                return None;
            };
            let m = middle_cell(&s, a, b)?;
            bfs_distances(&s, s.agent)[m.row * s.cols + m.col] != usize::MAX
        }
    };
    reachable.then_some(s)
}

/// Places one object per class plus the agent on distinct free cells of a
/// freshly generated map. `Error::RegenerateMap` means the map cannot host
/// this placement within the retry budget.
pub fn place_entities<R: Rng + ?Sized>(state: &EnvironmentState, spec: &PlacementSpec, rng: &mut R) -> Result<EnvironmentState> {
    spec.validate()?;
    if state.count_objects() != 0 {
        return Err(Error::Scene("map already holds objects".into()));
    }
    let free = state.cells().filter(|c| state.is_passable(*c)).count();
    if free < spec.classes.len() + 1 {
        return Err(Error::RegenerateMap);
    }
    for _ in 0..ATTEMPTS {
        if let Some(s) = try_place(state, spec, rng) {
            return Ok(s);
        }
    }
    Err(Error::RegenerateMap)
}

