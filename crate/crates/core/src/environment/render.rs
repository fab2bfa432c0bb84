//! Procedural sprites and the 80x80 egocentric view.

use super::visibility::{visible_mask, window_cell, WINDOW};
use super::{EnvironmentState, Tile};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};

pub const TILE: usize = 16;
pub const IMAGE_SIZE: usize = WINDOW * TILE;
pub const FLOOR: [u8; 3] = [214, 208, 196];
const BRICK: [u8; 3] = [128, 64, 40];
const MORTAR: [u8; 3] = [92, 92, 92];
const MARKER: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Row-major RGB, `IMAGE_SIZE x IMAGE_SIZE x 3`.
    pub image: Vec<u8>,
    pub mask: [[bool; WINDOW]; WINDOW],
}

impl Observation {
    /// Pixels scaled to `[0, 1]` in channel-major `[3, H, W]` order.
    pub fn planar_unit(&self) -> Vec<f64> {
        let n = IMAGE_SIZE * IMAGE_SIZE;
        let mut out = vec![0.0; 3 * n];
        for (p, px) in self.image.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[ch * n + p] = px[ch] as f64 / 255.0;
            }
        }
        out
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

/// Unrotated 16x16 design: a disc of the class hue with a patterned 12x12
/// core and a white notch at the top (breaks rotational symmetry).
fn design(class: usize, n_classes: usize) -> [[Option<[u8; 3]>; TILE]; TILE] {
    let hue = 360.0 * class as f64 / n_classes as f64;
    let base = hsv(hue, 0.85, 0.85);
    let alt = hsv(hue + 12.0, 0.45, 0.55);
    let bits = {
        let d = Sha256::digest((class as u64).to_le_bytes());
        u16::from_le_bytes([d[0], d[1]])
    };
    let mut out = [[None; TILE]; TILE];
    let centre = TILE as f64 / 2.0;
    for (y, row) in out.iter_mut().enumerate() {
        for (x, px) in row.iter_mut().enumerate() {
            let (dy, dx) = (y as f64 + 0.5 - centre, x as f64 + 0.5 - centre);
            if dx.hypot(dy) > centre {
                continue;
            }
            let mut colour = base;
            if (2..14).contains(&y) && (2..14).contains(&x) {
                let block = ((y - 2) / 3) * 4 + (x - 2) / 3;
                if bits >> block & 1 == 1 {
                    colour = alt;
                }
            }
            if y < 4 && (7..9).contains(&x) {
                colour = MARKER;
            }
            *px = Some(colour);
        }
    }
    out
}

/// Flattened RGBA tile for `class` rotated clockwise by `yaw` degrees and
/// scaled about the centre (nearest neighbour). Transparent pixels have
/// alpha 0.
pub fn sprite_for_class(class: usize, n_classes: usize, yaw: f64, scale: f64) -> Result<Vec<[u8; 4]>> {
    if class >= n_classes {
        return Err(Error::UnknownClass(class));
    }
    let d = design(class, n_classes);
    let (sin, cos) = yaw.to_radians().sin_cos();
    let centre = TILE as f64 / 2.0;
    let mut out = vec![[0u8; 4]; TILE * TILE];
    for y in 0..TILE {
        for x in 0..TILE {
            let (px, py) = (x as f64 + 0.5 - centre, y as f64 + 0.5 - centre);
            // inverse rotation then inverse scale
            let qx = (cos * px + sin * py) / scale;
            let qy = (-sin * px + cos * py) / scale;
            if qx.hypot(qy) > centre {
                continue;
            }
            let sx = (qx + centre).floor().clamp(0.0, TILE as f64 - 1.0) as usize;
            let sy = (qy + centre).floor().clamp(0.0, TILE as f64 - 1.0) as usize;
            if let Some([r, g, b]) = d[sy][sx] {
                out[y * TILE + x] = [r, g, b, 255];
            }
        }
    }
    Ok(out)
}

fn brick(y: usize, x: usize) -> [u8; 3] {
    let course = y / 4;
    let offset = if course % 2 == 0 { 0 } else { 4 };
    if y % 4 == 3 || (x + offset) % 8 == 7 {
        MORTAR
    } else {
        BRICK
    }
}

/// Renders the egocentric view; invisible and off-grid cells are black.
pub fn render(state: &EnvironmentState, n_classes: usize) -> Result<Observation> {
    let mask = visible_mask(state);
    let mut image = vec![0u8; IMAGE_SIZE * IMAGE_SIZE * 3];
    let heading = state.heading.degrees();
    for (r, mask_row) in mask.iter().enumerate() {
        for (c, &visible) in mask_row.iter().enumerate() {
            let Some(cell) = window_cell(state, r, c).filter(|_| visible) else {
                continue;
            };
            let sprite = match state.tile(cell) {
                Tile::Object(o) => Some(sprite_for_class(o.class, n_classes, o.yaw - heading, o.scale)?),
                _ => None,
            };
            for y in 0..TILE {
                for x in 0..TILE {
                    let px = match (state.tile(cell), &sprite) {
                        (Tile::Obstacle, _) => brick(y, x),
                        (_, Some(s)) if s[y * TILE + x][3] != 0 => {
                            let [r, g, b, _] = s[y * TILE + x];
                            [r, g, b]
                        }
                        _ => FLOOR,
                    };
                    let at = ((r * TILE + y) * IMAGE_SIZE + c * TILE + x) * 3;
                    image[at..at + 3].copy_from_slice(&px);
                }
            }
        }
    }
    Ok(Observation { image, mask })
}
