//! Singular value decomposition of the square part of a transform.
//!
//! Cyclic one-sided (Hestenes) Jacobi: column pairs of a working copy are
//! rotated until mutually orthogonal, accumulating the rotations in `V`.
//! Column norms are then the singular values and the normalised columns
//! form `U`.

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `[D, D]` row-major, one vector per column.
    pub u: Tensor,
    /// Singular values, non-negative and descending.
    pub singular_values: Vec<f64>,
    pub v: Tensor,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Tensor {
        let d = self.singular_values.len();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d)
                    .map(|k| self.u.at(i, k) * self.singular_values[k] * self.v.at(j, k))
                    .sum();
            }
        }
        Tensor::matrix(d, d, out).expect("square")
    }
}

/// Column-major scratch matrix so column operations are contiguous.
struct Columns {
    n: usize,
    data: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    fn pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let n = self.n;
        let (lo, hi) = self.data.split_at_mut(q * n);
        (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let (cp, cq) = self.pair_mut(p, q);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = c * a - s * b;
            *y = s * a + c * b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svd_decompose(m: &Tensor) -> Result<SvdResult> {
    let [rows, cols] = m.shape() else {
        return Err(shape_err("svd", format!("shape {:?}", m.shape())));
    };
    if rows != cols || *rows == 0 {
        return Err(shape_err("svd", format!("expected a square matrix, got {:?}", m.shape())));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let n = *rows;
    let mut a = Columns {
        n,
        data: (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| m.at(i, j)).collect(),
    };
    let mut v = Columns {
        n,
        data: (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect(),
    };

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(a.col(p), a.col(p));
                let beta = dot(a.col(q), a.col(q));
                let gamma = dot(a.col(p), a.col(q));
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                a.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(a.col(j), a.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma_max = norms[order[0]];

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sv = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for &j in &order {
        let s = norms[j];
        v_cols.push(v.col(j).to_vec());
        if s > 0.0 && s > sigma_max * 1e-13 {
            u_cols.push(a.col(j).iter().map(|x| x / s).collect());
            sv.push(s);
        } else {
            deficient.push(u_cols.len());
            u_cols.push(vec![0.0; n]);
            sv.push(if s > 0.0 { s } else { 0.0 });
        }
    }
    // Complete U with an orthonormal basis of the remaining space.
    for slot in deficient {
        let mut best = None;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            for _ in 0..2 {
                for (k, other) in u_cols.iter().enumerate() {
                    if k == slot || other.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, other);
                    cand.iter_mut().zip(other).for_each(|(c, o)| *c -= proj * o);
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                best = Some(cand.into_iter().map(|c| c / norm).collect::<Vec<_>>());
                break;
            }
        }
        u_cols[slot] = best.expect("an orthogonal complement exists");
        // keep A ~ U S V^T: the corresponding sigma is (numerically) zero
    }

    for (u, v) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let lead = u
            .iter()
            .copied()
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(0.0);
        if lead < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let to_rows = |cols: &[Vec<f64>]| {
        let data = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        Tensor::matrix(n, n, data).expect("square")
    };
    Ok(SvdResult {
        u: to_rows(&u_cols),
        singular_values: sv,
        v: to_rows(&v_cols),
    })
}
