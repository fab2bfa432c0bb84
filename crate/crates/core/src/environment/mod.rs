//! Partially observable grid world: maze synthesis, entity placement,
//! heading-relative dynamics, occlusion and egocentric rendering.

mod maze;
mod placement;
mod render;
mod visibility;


pub use maze::{bfs_distances, free_cells_connected, generate_map};
pub use placement::{contact_reachable, middle_cell, place_entities, PlacementSpec, Reach, Relation};
pub use render::{render, sprite_for_class, Observation, FLOOR, IMAGE_SIZE, TILE};
pub use visibility::{visible_mask, window_cell, WINDOW};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Neighbour one step towards `h`, if it exists on a `rows x cols` grid.
    pub fn step(self, h: Heading, rows: usize, cols: usize) -> Option<Cell> {
        let (dr, dc) = h.delta();
        self.offset(dr, dc, rows, cols)
    }

    pub fn offset(self, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<Cell> {
        let r = self.row as isize + dr;
        let c = self.col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols).then(|| Cell::new(r as usize, c as usize))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// Compass heading; row 0 is the northern edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::N => (-1, 0),
            Heading::E => (0, 1),
            Heading::S => (1, 0),
            Heading::W => (0, -1),
        }
    }

    pub fn turn_left(self) -> Self {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn turn_right(self) -> Self {
        self.turn_left().turn_left().turn_left()
    }

    pub fn opposite(self) -> Self {
        self.turn_left().turn_left()
    }

    /// Clockwise degrees from north.
    pub fn degrees(self) -> f64 {
        match self {
            Heading::N => 0.0,
            Heading::E => 90.0,
            Heading::S => 180.0,
            Heading::W => 270.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    MoveBackward,
    MoveLeft,
    MoveRight,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::MoveLeft,
        Action::MoveRight,
        Action::TurnLeft,
        Action::TurnRight,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Translation direction for a move given the current heading.
    pub fn direction(self, heading: Heading) -> Option<Heading> {
        match self {
            Action::MoveForward => Some(heading),
            Action::MoveBackward => Some(heading.opposite()),
            Action::MoveLeft => Some(heading.turn_left()),
            Action::MoveRight => Some(heading.turn_right()),
            Action::TurnLeft | Action::TurnRight => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub class: usize,
    /// Degrees in `[0, 360)`.
    pub yaw: f64,
    /// In `[0.5, 1.0]`.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tile {
    Free,
    Obstacle,
    Object(Object),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_objects: usize,
    pub n_obstacles: usize,
    pub level: usize,
}

impl MapConfig {
    pub fn square(size: usize, n_objects: usize, n_obstacles: usize, level: usize) -> Self {
        Self {
            rows: size,
            cols: size,
            n_objects,
            n_obstacles,
            level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("map must have at least one cell".into()));
        }
        if self.n_objects + self.n_obstacles + 1 > self.rows * self.cols {
            return Err(Error::Config(format!(
                "{} objects + {} obstacles + agent exceed {}x{} cells",
                self.n_objects, self.n_obstacles, self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        3 * self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepEvent {
    None,
    ReachedObject { class: usize, cell: Cell },
    Blocked,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub rows: usize,
    pub cols: usize,
    tiles: Vec<Tile>,
    pub agent: Cell,
    pub heading: Heading,
    pub t: usize,
    pub horizon: usize,
    pub terminated: bool,
}

impl EnvironmentState {
    /// Empty map with the agent at the north-west corner facing north.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            tiles: vec![Tile::Free; rows * cols],
            agent: Cell::new(0, 0),
            heading: Heading::N,
            t: 0,
            horizon: 3 * rows * cols,
            terminated: false,
        }
    }

    pub fn tile(&self, c: Cell) -> Tile {
        self.tiles[c.row * self.cols + c.col]
    }

    pub fn set_tile(&mut self, c: Cell, t: Tile) {
        self.tiles[c.row * self.cols + c.col] = t;
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        matches!(self.tile(c), Tile::Obstacle)
    }

    /// Free of obstacles and objects.
    pub fn is_passable(&self, c: Cell) -> bool {
        matches!(self.tile(c), Tile::Free)
    }

    pub fn objects(&self) -> impl Iterator<Item = (Cell, Object)> + '_ {
        self.cells().filter_map(|c| match self.tile(c) {
            Tile::Object(o) => Some((c, o)),
            _ => None,
        })
    }

    pub fn object_cell(&self, class: usize) -> Option<Cell> {
        self.objects().find(|(_, o)| o.class == class).map(|(c, _)| c)
    }

    pub fn count_obstacles(&self) -> usize {
        self.tiles.iter().filter(|t| matches!(t, Tile::Obstacle)).count()
    }

    pub fn count_objects(&self) -> usize {
        self.tiles.iter().filter(|t| matches!(t, Tile::Object(_))).count()
    }

    pub fn neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        Heading::ALL.into_iter().filter_map(move |h| c.step(h, self.rows, self.cols))
    }

    /// Applies one action. Blocked moves and contacts leave the agent in place
    /// but still consume a step.
    pub fn step(&mut self, action: Action) -> Result<StepEvent> {
        if self.terminated || self.t >= self.horizon {
            return Err(Error::SessionTerminated);
        }
        let mut event = StepEvent::None;
        match action.direction(self.heading) {
            None => {
                self.heading = if action == Action::TurnLeft {
                    self.heading.turn_left()
                } else {
                    self.heading.turn_right()
                }
            }
            Some(dir) => match self.agent.step(dir, self.rows, self.cols) {
                None => event = StepEvent::Blocked,
                Some(next) => match self.tile(next) {
                    Tile::Free => self.agent = next,
                    Tile::Obstacle => event = StepEvent::Blocked,
                    Tile::Object(o) => {
                        event = StepEvent::ReachedObject {
                            class: o.class,
                            cell: next,
                        }
                    }
                },
            },
        }
        self.t += 1;
        if self.t == self.horizon && !matches!(event, StepEvent::ReachedObject { .. }) {
            event = StepEvent::Timeout;
            self.terminated = true;
        }
        Ok(event)
    }

    /// Ends the session early (teacher verdict).
    pub fn terminate(&mut self) {
        self.terminated = true;
    }

    /// SHA-256 over a canonical byte encoding of the full state.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.rows, self.cols, self.agent.row, self.agent.col, self.t, self.horizon] {
            h.update((v as u64).to_le_bytes());
        }
        h.update([self.heading as u8, self.terminated as u8]);
        for t in &self.tiles {
            match t {
                Tile::Free => h.update([0u8]),
                Tile::Obstacle => h.update([1u8]),
                Tile::Object(o) => {
                    h.update([2u8]);
                    h.update((o.class as u64).to_le_bytes());
                    h.update(o.yaw.to_bits().to_le_bytes());
                    h.update(o.scale.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Plain-text map: `#` obstacle, `.` free, class initial for objects,
    /// `^>v<` for the agent.
    pub fn ascii(&self, class_names: &[String]) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = Cell::new(r, c);
                let ch = if cell == self.agent {
                    match self.heading {
                        Heading::N => '^',
                        Heading::E => '>',
                        Heading::S => 'v',
                        Heading::W => '<',
                    }
                } else {
                    match self.tile(cell) {
                        Tile::Free => '.',
                        Tile::Obstacle => '#',
                        Tile::Object(o) => class_names
                            .get(o.class)
                            .and_then(|n| n.chars().next())
                            .unwrap_or('?'),
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}
