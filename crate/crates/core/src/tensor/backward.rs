use super::graph::{Graph, NodeId, Op};
use super::kernels::{col2im, gemm};
use super::{GradBuffer, ParamId, Tensor};
use crate::error::{Error, Result};

/// Per-node gradients of a scalar loss.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Gradient for one parameter; zeros are implied when it is unreachable.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, n)| self.get(*n))
    }

    pub fn accumulate_into(&self, buf: &mut GradBuffer) {
        for (pid, node) in &self.params {
            if let Some(g) = self.get(*node) {
                buf.add(*pid, g);
            }
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], graph: &Graph, id: NodeId, g: Tensor) {
    if !graph.requires_grad(id) {
        return;
    }
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => {
            let shape = graph.shape(id).to_vec();
            *slot = Some(g.reshaped(&shape).expect("gradient size matches node"));
        }
    }
}

fn like(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("gradient size matches node")
}

impl Graph<'_> {
    /// Reverse sweep from a scalar `loss`; each node is visited once.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(shape, 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(NodeId(i), &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.param_node_ids(),
        })
    }

    fn propagate(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id.0];
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Affine { x, w, b } => {
                let (batch, n) = self.value(*x).dims2();
                let m = self.shape(*w)[0];
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; batch * n];
                    gemm(batch, m, n, gd, false, self.value(*w).data(), false, 0.0, &mut dx);
                    acc(grads, self, *x, like(self.shape(*x), dx));
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![0.0; m * n];
                    gemm(m, batch, n, gd, true, self.value(*x).data(), false, 0.0, &mut dw);
                    acc(grads, self, *w, like(&[m, n], dw));
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; m];
                    for row in gd.chunks(m) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    acc(grads, self, *b, like(&[m], db));
                }
            }
            Op::MatMul { a, b } => {
                let (m, k) = self.value(*a).dims2();
                let (_, n) = self.value(*b).dims2();
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, gd, false, self.value(*b).data(), true, 0.0, &mut da);
                    acc(grads, self, *a, like(&[m, k], da));
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a).data(), true, gd, false, 0.0, &mut db);
                    acc(grads, self, *b, like(&[k, n], db));
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                cols,
            } => {
                let ws = self.shape(*w);
                let (co, patch) = (ws[0], ws[1] * ws[2] * ws[3]);
                let npos = gd.len() / co;
                if self.requires_grad(*w) {
                    let mut dw = vec![0.0; co * patch];
                    gemm(co, npos, patch, gd, false, cols, true, 0.0, &mut dw);
                    acc(grads, self, *w, like(ws, dw));
                }
                if let Some(b) = b {
                    let db = gd.chunks(npos).map(|r| r.iter().sum()).collect();
                    acc(grads, self, *b, like(&[co], db));
                }
                if self.requires_grad(*x) {
                    let xs = self.shape(*x);
                    let mut dcols = vec![0.0; patch * npos];
                    gemm(patch, co, npos, self.value(*w).data(), true, gd, false, 0.0, &mut dcols);
                    let dx = col2im(&dcols, xs[0], xs[1], xs[2], ws[2], *stride);
                    acc(grads, self, *x, like(xs, dx));
                }
            }
            Op::Act { x, kind } => {
                let y = node.value.as_ref().expect("activation output");
                let dx = y
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(y, g)| g * kind.derivative_from_output(*y))
                    .collect();
                acc(grads, self, *x, like(y.shape(), dx));
            }
            Op::Softmax { x } => {
                let y = node.value.as_ref().expect("softmax output");
                let (_, n) = y.dims2();
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(n).zip(gd.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                }
                acc(grads, self, *x, like(y.shape(), dx));
            }
            Op::LogSoftmax { x } => {
                let y = node.value.as_ref().expect("log-softmax output");
                let (_, n) = y.dims2();
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(n).zip(gd.chunks(n)) {
                    let total: f64 = gr.iter().sum();
                    dx.extend(yr.iter().zip(gr).map(|(y, g)| g - y.exp() * total));
                }
                acc(grads, self, *x, like(y.shape(), dx));
            }
            Op::Add { a, b } => {
                acc(grads, self, *a, g.clone());
                acc(grads, self, *b, g.clone());
            }
            Op::Sub { a, b } => {
                acc(grads, self, *a, g.clone());
                acc(grads, self, *b, g.map(|v| -v));
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let da = gd.iter().zip(vb.data()).map(|(g, v)| g * v).collect();
                    acc(grads, self, *a, like(va.shape(), da));
                }
                if self.requires_grad(*b) {
                    let db = gd.iter().zip(va.data()).map(|(g, v)| g * v).collect();
                    acc(grads, self, *b, like(vb.shape(), db));
                }
            }
            Op::Scale { x, factor } => acc(grads, self, *x, g.map(|v| v * factor)),
            Op::AddScalar { x } | Op::Reshape { x } => acc(grads, self, *x, g.clone()),
            Op::Sum { x } => {
                let s = self.shape(*x).to_vec();
                acc(grads, self, *x, Tensor::filled(&s, gd[0]));
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    let part = gd[offset..offset + n].to_vec();
                    acc(grads, self, *p, like(self.shape(*p), part));
                    offset += n;
                }
            }
            Op::Slice { x, start } => {
                let s = self.shape(*x).to_vec();
                let mut dx = Tensor::zeros(&s);
                dx.data_mut()[*start..*start + gd.len()].copy_from_slice(gd);
                acc(grads, self, *x, dx);
            }
            Op::AppendOnesRow { x } => {
                let n = self.value(*x).len();
                acc(grads, self, *x, like(self.shape(*x), gd[..n].to_vec()));
            }
            Op::ScaleRows { x, s } => {
                let (vx, vs) = (self.value(*x), self.value(*s));
                let (_, n) = vx.dims2();
                if self.requires_grad(*x) {
                    let mut dx = gd.to_vec();
                    for (row, k) in dx.chunks_mut(n).zip(vs.data()) {
                        row.iter_mut().for_each(|v| *v *= k);
                    }
                    acc(grads, self, *x, like(vx.shape(), dx));
                }
                if self.requires_grad(*s) {
                    let ds = gd
                        .chunks(n)
                        .zip(vx.data().chunks(n))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    acc(grads, self, *s, like(vs.shape(), ds));
                }
            }
            Op::AddRowBias { x, b } => {
                acc(grads, self, *x, g.clone());
                let (_, n) = self.value(*x).dims2();
                let db = gd.chunks(n).map(|r| r.iter().sum()).collect();
                acc(grads, self, *b, like(self.shape(*b), db));
            }
            Op::EmbeddingSum { table, ids } => {
                if self.requires_grad(*table) {
                    let s = self.shape(*table).to_vec();
                    let width = s[1];
                    let mut dt = Tensor::zeros(&s);
                    for &i in ids {
                        dt.data_mut()[i * width..(i + 1) * width]
                            .iter_mut()
                            .zip(gd)
                            .for_each(|(d, v)| *d += v);
                    }
                    acc(grads, self, *table, dt);
                }
            }
            Op::Pick { x, index } => {
                let s = self.shape(*x).to_vec();
                let mut dx = Tensor::zeros(&s);
                dx.data_mut()[*index] = gd[0];
                acc(grads, self, *x, dx);
            }
        }
    }
}
