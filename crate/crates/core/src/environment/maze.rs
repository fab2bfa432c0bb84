//! Prim-style maze synthesis with exact obstacle counts.

use super::{Cell, EnvironmentState, MapConfig, Tile};
use crate::error::{Error, Result};
use rand::seq::IndexedRandom;
use rand::Rng;
use std::collections::VecDeque;

const MAZES: usize = 50;
const SUBSETS_PER_MAZE: usize = 40;

/// Cells that are neither lattice nodes nor spanning-tree corridors of a
/// randomized Prim tree over the even-coordinate lattice.
fn prim_walls<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Cell> {
    let nodes_r = rows.div_ceil(2);
    let nodes_c = cols.div_ceil(2);
    let mut open = vec![false; rows * cols];
    let mut in_tree = vec![false; nodes_r * nodes_c];
    let start = (rng.random_range(0..nodes_r), rng.random_range(0..nodes_c));
    in_tree[start.0 * nodes_c + start.1] = true;
    open[2 * start.0 * cols + 2 * start.1] = true;
    // frontier edges: (from node, to node)
    let mut frontier: Vec<((usize, usize), (usize, usize))> = Vec::new();
    let push_edges = |n: (usize, usize), frontier: &mut Vec<_>| {
        let (r, c) = n;
        if r > 0 {
            frontier.push((n, (r - 1, c)));
        }
        if r + 1 < nodes_r {
            frontier.push((n, (r + 1, c)));
        }
        if c > 0 {
            frontier.push((n, (r, c - 1)));
        }
        if c + 1 < nodes_c {
            frontier.push((n, (r, c + 1)));
        }
    };
    push_edges(start, &mut frontier);
    while !frontier.is_empty() {
        let i = rng.random_range(0..frontier.len());
        let (a, b) = frontier.swap_remove(i);
        if in_tree[b.0 * nodes_c + b.1] {
            continue;
        }
        in_tree[b.0 * nodes_c + b.1] = true;
        open[(a.0 + b.0) * cols + (a.1 + b.1)] = true; // corridor between them
        open[2 * b.0 * cols + 2 * b.1] = true;
        push_edges(b, &mut frontier);
    }
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Cell::new(r, c)))
        .filter(|c| !open[c.row * cols + c.col])
        .collect()
}

/// Generates a grid with exactly `cfg.n_obstacles` obstacles whose free cells
/// form one 4-connected component. The agent sits on some free cell facing
/// north; objects are not yet placed.
pub fn generate_map<R: Rng + ?Sized>(cfg: &MapConfig, rng: &mut R) -> Result<EnvironmentState> {
    cfg.validate()?;
    for _ in 0..MAZES {
        let walls = prim_walls(cfg.rows, cfg.cols, rng);
        if walls.len() < cfg.n_obstacles {
            continue;
        }
        for _ in 0..SUBSETS_PER_MAZE {
            let mut state = EnvironmentState::empty(cfg.rows, cfg.cols);
            state.horizon = cfg.horizon();
            for c in walls.choose_multiple(rng, cfg.n_obstacles) {
                state.set_tile(*c, Tile::Obstacle);
            }
            if free_cells_connected(&state) {
                let free: Vec<Cell> = state.cells().filter(|c| state.is_passable(*c)).collect();
                state.agent = *free.choose(rng).expect("validated config leaves free cells");
                return Ok(state);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no connected {}x{} layout with {} obstacles found",
        cfg.rows, cfg.cols, cfg.n_obstacles
    )))
}

/// BFS over passable cells (no obstacles, no objects). `usize::MAX` marks
/// unreachable cells.
pub fn bfs_distances(state: &EnvironmentState, from: Cell) -> Vec<usize> {
    let mut dist = vec![usize::MAX; state.rows * state.cols];
    let idx = |c: Cell| c.row * state.cols + c.col;
    dist[idx(from)] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        for n in state.neighbours(c) {
            if state.is_passable(n) && dist[idx(n)] == usize::MAX {
                dist[idx(n)] = dist[idx(c)] + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Whether all non-obstacle cells form one 4-connected component
/// (objects count as free here).
pub fn free_cells_connected(state: &EnvironmentState) -> bool {
    let free: Vec<Cell> = state.cells().filter(|c| !state.is_obstacle(*c)).collect();
    let Some(&start) = free.first() else {
        return true;
    };
    let mut seen = vec![false; state.rows * state.cols];
    seen[start.row * state.cols + start.col] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1;
    while let Some(c) = queue.pop_front() {
        for n in state.neighbours(c) {
            let i = n.row * state.cols + n.col;
            if !state.is_obstacle(n) && !seen[i] {
                seen[i] = true;
                reached += 1;
                queue.push_back(n);
            }
        }
    }
    reached == free.len()
}

