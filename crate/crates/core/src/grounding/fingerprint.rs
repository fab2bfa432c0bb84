//! Mean-subtracted, box-smoothed renderings of generated transforms.

use super::TransformStack;
use crate::error::{shape_err, Result};
use crate::image::write_ppm;
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

/// Per-step mean transform over a reference sample of commands.
#[derive(Debug, Clone)]
pub struct ReferenceMean {
    means: Vec<Tensor>,
    pub samples: usize,
}

impl ReferenceMean {
    pub fn from_stacks<'a>(stacks: impl IntoIterator<Item = &'a TransformStack>) -> Result<Self> {
        let mut sums: Option<Vec<Tensor>> = None;
        let mut count = 0usize;
        for s in stacks {
            let acc = sums.get_or_insert_with(|| {
                s.matrices().iter().map(|m| Tensor::zeros(m.shape())).collect()
            });
            if acc.len() != s.steps() || acc[0].shape() != s.matrices()[0].shape() {
                return Err(shape_err("ReferenceMean", "stacks differ in shape"));
            }
            for (a, m) in acc.iter_mut().zip(s.matrices()) {
                a.data_mut().iter_mut().zip(m.data()).for_each(|(x, y)| *x += y);
            }
            count += 1;
        }
        let Some(mut means) = sums else {
            return Err(shape_err("ReferenceMean", "needs at least one command"));
        };
        for m in &mut means {
            m.data_mut().iter_mut().for_each(|x| *x /= count as f64);
        }
        Ok(Self {
            means,
            samples: count,
        })
    }

    pub fn steps(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, step: usize) -> &Tensor {
        &self.means[step]
    }
}

/// `k x k` box filter with edge-clamped borders.
pub fn smooth_uniform(m: &Tensor, k: usize) -> Tensor {
    let (rows, cols) = m.dims2();
    let r = (k / 2) as isize;
    let norm = (k * k) as f64;
    let mut out = Tensor::zeros(&[rows, cols]);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for di in -r..=r {
                let ii = clamp(i as isize + di, rows);
                for dj in -r..=r {
                    s += m.at(ii, clamp(j as isize + dj, cols));
                }
            }
            out.data_mut()[i * cols + j] = s / norm;
        }
    }
    out
}

/// `smooth(T_j - mean_j)` for every step `j` of `stack`.
pub fn transform_fingerprint(stack: &TransformStack, reference: &ReferenceMean, kernel: usize) -> Result<Vec<Tensor>> {
    if stack.steps() != reference.steps() {
        return Err(shape_err(
            "fingerprint",
            format!("{} steps vs reference {}", stack.steps(), reference.steps()),
        ));
    }
    stack
        .matrices()
        .iter()
        .zip(&reference.means)
        .map(|(t, mean)| {
            if t.shape() != mean.shape() {
                return Err(shape_err(
                    "fingerprint",
                    format!("transform {:?} vs mean {:?}", t.shape(), mean.shape()),
                ));
            }
            let diff = Tensor::new(
                t.shape().to_vec(),
                t.data().iter().zip(mean.data()).map(|(a, b)| a - b).collect(),
            )?;
            Ok(smooth_uniform(&diff, kernel))
        })
        .collect()
}

pub fn write_csv(m: &Tensor, path: &Path) -> Result<()> {
    let (rows, cols) = m.dims2();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| m.at(i, j).to_string()).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Min-max normalised grayscale image, `scale` pixels per entry.
pub fn write_grayscale_ppm(m: &Tensor, path: &Path, scale: usize) -> Result<()> {
    let (rows, cols) = m.dims2();
    let scale = scale.max(1);
    let lo = m.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let level = |v: f64| -> u8 {
        if hi - lo <= 0.0 {
            128
        } else {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        }
    };
    let (w, h) = (cols * scale, rows * scale);
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let l = level(m.at(y / scale, x / scale));
            px.extend([l, l, l]);
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_ppm(&mut f, w, h, &px)?;
    Ok(())
}
