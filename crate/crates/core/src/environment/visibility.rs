//! Egocentric 5x5 window and line-of-sight occlusion.

use super::{Cell, EnvironmentState};

/// Window side; the agent sits at the bottom-centre cell.
pub const WINDOW: usize = 5;
const AGENT_ROW: usize = WINDOW - 1;
const AGENT_COL: usize = WINDOW / 2;

/// World cell shown at window position `(r, c)`, or `None` when off-grid.
pub fn window_cell(state: &EnvironmentState, r: usize, c: usize) -> Option<Cell> {
    let forward = (AGENT_ROW - r) as isize;
    let lateral = c as isize - AGENT_COL as isize;
    local_to_world(state, forward, lateral)
}

fn local_to_world(state: &EnvironmentState, forward: isize, lateral: isize) -> Option<Cell> {
    let (fr, fc) = state.heading.delta();
    let (rr, rc) = state.heading.turn_right().delta();
    state.agent.offset(
        forward * fr + lateral * rr,
        forward * fc + lateral * rc,
        state.rows,
        state.cols,
    )
}

/// Interior cells of the symmetric integer line from the origin to
/// `(forward, lateral)`. Exact half-way crossings yield both candidates.
fn line_cells(forward: isize, lateral: isize) -> Vec<Vec<(isize, isize)>> {
    let (fa, la) = (forward.abs(), lateral.abs());
    let major = fa.max(la);
    let mut out = Vec::new();
    for i in 1..major {
        let (minor_total, minor_sign, major_is_f) = if fa >= la {
            (la, lateral.signum(), true)
        } else {
            (fa, forward.signum(), false)
        };
        let q = minor_total * i;
        let (base, rem) = (q / major, q % major);
        let minors: Vec<isize> = if 2 * rem == major {
            vec![base, base + 1]
        } else if 2 * rem < major {
            vec![base]
        } else {
            vec![base + 1]
        };
        let major_v = i * if major_is_f { forward.signum() } else { lateral.signum() };
        out.push(
            minors
                .into_iter()
                .map(|m| {
                    let m = m * minor_sign;
                    if major_is_f {
                        (major_v, m)
                    } else {
                        (m, major_v)
                    }
                })
                .collect(),
        );
    }
    out
}

/// Row-major 5x5 mask: `true` where the cell is on the grid and no obstacle
/// blocks the line from the agent. A half-way crossing is blocked only if
/// both straddled cells are obstacles.
pub fn visible_mask(state: &EnvironmentState) -> [[bool; WINDOW]; WINDOW] {
    let mut mask = [[false; WINDOW]; WINDOW];
    for (r, row) in mask.iter_mut().enumerate() {
        for (c, vis) in row.iter_mut().enumerate() {
            if window_cell(state, r, c).is_none() {
                continue;
            }
            let forward = (AGENT_ROW - r) as isize;
            let lateral = c as isize - AGENT_COL as isize;
            let blocked = line_cells(forward, lateral).into_iter().any(|candidates| {
                candidates.iter().all(|&(f, l)| {
                    local_to_world(state, f, l).is_some_and(|cell| state.is_obstacle(cell))
                })
            });
            *vis = !blocked;
        }
    }
    mask
}
