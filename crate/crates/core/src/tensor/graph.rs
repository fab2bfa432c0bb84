use super::kernels::{conv_out_size, gemm, im2col};
use super::{ParamId, ParameterSet, Tensor};
use crate::error::{shape_err, Error, Result};
use serde::{Deserialize, Serialize};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Param(ParamId),
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        cols: Vec<f64>,
    },
    Act {
        x: NodeId,
        kind: Activation,
    },
    Softmax {
        x: NodeId,
    },
    LogSoftmax {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        factor: f64,
    },
    AddScalar {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Reshape {
        x: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Slice {
        x: NodeId,
        start: usize,
    },
    AppendOnesRow {
        x: NodeId,
    },
    ScaleRows {
        x: NodeId,
        s: NodeId,
    },
    AddRowBias {
        x: NodeId,
        b: NodeId,
    },
    EmbeddingSum {
        table: NodeId,
        ids: Vec<usize>,
    },
    Pick {
        x: NodeId,
        index: usize,
    },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Option<Tensor>,
    pub(crate) requires_grad: bool,
}

/// Append-only tape of tensor operations.
///
/// Inputs always precede their consumers, so a reverse sweep over the node
/// list is a valid topological order for backpropagation.
pub struct Graph<'p> {
    params: Option<&'p ParameterSet>,
    pub(crate) nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParameterSet) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    /// A graph with no parameter store; only leaves can be fed in.
    pub fn detached() -> Graph<'static> {
        Graph {
            params: None,
            nodes: Vec::new(),
            param_nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> Option<&'p ParameterSet> {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (_, Some(v)) => v,
            (Op::Param(pid), None) => self
                .params
                .expect("parameter node without store")
                .value(*pid),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    pub(crate) fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        debug_assert!(
            !inputs.iter().all(|i| self.value(*i).is_finite()) || value.is_finite(),
            "non-finite output from finite inputs in {op:?}"
        );
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        let requires_grad = value.requires_grad();
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<NodeId> {
        let params = self
            .params
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        Ok(self.param(params.id(name)?))
    }

    pub(crate) fn param_node_ids(&self) -> Vec<(ParamId, NodeId)> {
        self.param_nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.map(|n| (ParamId(i), n)))
            .collect()
    }

    /// `out[i, j] = sum_k w[j, k] * x[i, k] + b[j]` for `x` of shape `[n]` or `[B, n]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, n, vector_in) = match xs.as_slice() {
            [n] => (1, *n, true),
            [b, n] => (*b, *n, false),
            _ => return Err(shape_err("affine", format!("input shape {xs:?}"))),
        };
        let [m, wn] = ws.as_slice() else {
            return Err(shape_err("affine", format!("weight shape {ws:?}")));
        };
        let m = *m;
        if *wn != n {
            return Err(shape_err(
                "affine",
                format!("input width {n} vs weight {ws:?}"),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(shape_err(
                    "affine",
                    format!("bias {:?} vs {m} outputs", self.shape(b)),
                ));
            }
        }
        let mut out = vec![0.0; batch * m];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(m) {
                row.copy_from_slice(bv);
            }
        }
        gemm(
            batch,
            n,
            m,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            &mut out,
        );
        let shape = if vector_in { vec![m] } else { vec![batch, m] };
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(Op::Affine { x, w, b }, Tensor::new(shape, out)?, &inputs))
    }

    /// Plain matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ([m, k], [k2, n]) = (sa.as_slice(), sb.as_slice()) else {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        };
        if k != k2 {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (*m, *k, *n);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        Ok(self.push(Op::MatMul { a, b }, Tensor::new(vec![m, n], out)?, &[a, b]))
    }

    /// Valid (unpadded) cross-correlation of `x: [c, h, w]` with
    /// `w: [c_out, c, k, k]` at the given stride.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let [c, h, wd] = xs.as_slice() else {
            return Err(shape_err("conv2d", format!("input shape {xs:?}")));
        };
        let [co, ci, kh, kw] = ws.as_slice() else {
            return Err(shape_err("conv2d", format!("filter shape {ws:?}")));
        };
        let (c, h, wd, co, k) = (*c, *h, *wd, *co, *kh);
        if *ci != c || *kh != *kw {
            return Err(shape_err("conv2d", format!("{xs:?} with filters {ws:?}")));
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "zero stride"));
        }
        if k > h || k > wd {
            return Err(shape_err(
                "conv2d",
                format!("kernel {k} larger than input {h}x{wd}"),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [co] {
                return Err(shape_err("conv2d", "bias length"));
            }
        }
        let ho = conv_out_size(h, k, stride);
        let wo = conv_out_size(wd, k, stride);
        let cols = im2col(self.value(x).data(), c, h, wd, k, stride);
        let npos = ho * wo;
        let mut out = vec![0.0; co * npos];
        if let Some(b) = b {
            for (row, bv) in out.chunks_mut(npos).zip(self.value(b).data()) {
                row.fill(*bv);
            }
        }
        gemm(
            co,
            c * k * k,
            npos,
            self.value(w).data(),
            false,
            &cols,
            false,
            1.0,
            &mut out,
        );
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        let value = Tensor::new(vec![co, ho, wo], out)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                cols,
            },
            value,
            &inputs,
        ))
    }

    pub fn activate(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let y = self.value(x).map(|v| kind.apply(v));
        self.push(Op::Act { x, kind }, y, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.activate(x, Activation::Tanh)
    }

    /// Row-wise softmax over the last axis with max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (_, n) = v.dims2();
        if n == 0 {
            return Err(shape_err("softmax_rows", "empty rows"));
        }
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for r in row.iter_mut() {
                *r = (*r - mx).exp();
                total += *r;
            }
            row.iter_mut().for_each(|r| *r /= total);
        }
        let y = Tensor::new(v.shape().to_vec(), out)?;
        Ok(self.push(Op::Softmax { x }, y, &[x]))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (_, n) = v.dims2();
        if n == 0 {
            return Err(shape_err("log_softmax_rows", "empty rows"));
        }
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|r| (r - mx).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|r| *r -= lse);
        }
        let y = Tensor::new(v.shape().to_vec(), out)?;
        Ok(self.push(Op::LogSoftmax { x }, y, &[x]))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).len() != self.value(b).len() {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same length")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let y = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add { a, b }, y, &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let y = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub { a, b }, y, &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let y = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul { a, b }, y, &[a, b]))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let y = self.value(x).map(|v| v * factor);
        self.push(Op::Scale { x, factor }, y, &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let y = self.value(x).map(|v| v + c);
        self.push(Op::AddScalar { x }, y, &[x])
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(total), &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let y = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape { x }, y, &[x]))
    }

    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len();
        self.reshape(x, &[n])
    }

    /// Concatenates the flattened contents of `parts` into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs"));
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|p| self.value(*p).data().iter().copied())
            .collect();
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            Tensor::vector(data),
            parts,
        ))
    }

    /// Contiguous range of the flattened input, returned as a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if start + len > v.len() {
            return Err(shape_err(
                "slice",
                format!("{start}..{} of {}", start + len, v.len()),
            ));
        }
        let y = Tensor::vector(v.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice { x, start }, y, &[x]))
    }

    /// `[D, N] -> [D + 1, N]` with a trailing row of ones.
    pub fn append_ones_row(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let [d, n] = v.shape() else {
            return Err(shape_err("append_ones_row", format!("{:?}", v.shape())));
        };
        let (d, n) = (*d, *n);
        let mut data = v.data().to_vec();
        data.extend(std::iter::repeat_n(1.0, n));
        let y = Tensor::new(vec![d + 1, n], data)?;
        Ok(self.push(Op::AppendOnesRow { x }, y, &[x]))
    }

    /// Multiplies row `d` of `x: [D, N]` by `s[d]`.
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (d, n) = self.value(x).dims2();
        if self.value(s).len() != d {
            return Err(shape_err(
                "scale_rows",
                format!("{} scales for {d} rows", self.value(s).len()),
            ));
        }
        let sv = self.value(s).data();
        let mut data = self.value(x).data().to_vec();
        for (row, k) in data.chunks_mut(n).zip(sv) {
            row.iter_mut().for_each(|v| *v *= k);
        }
        let y = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(Op::ScaleRows { x, s }, y, &[x, s]))
    }

    /// Adds `b[d]` to every entry of row `d` of `x: [D, N]`.
    pub fn add_row_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (d, n) = self.value(x).dims2();
        if self.value(b).len() != d {
            return Err(shape_err(
                "add_row_bias",
                format!("{} biases for {d} rows", self.value(b).len()),
            ));
        }
        let bv = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for (row, k) in data.chunks_mut(n).zip(bv) {
            row.iter_mut().for_each(|v| *v += k);
        }
        let y = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(Op::AddRowBias { x, b }, y, &[x, b]))
    }

    /// Sum of the rows of `table: [V, E]` selected by `ids` (repeats count),
    /// accumulated in sorted id order.
    pub fn embedding_sum(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        let [vocab, width] = t.shape() else {
            return Err(shape_err("embedding_sum", format!("{:?}", t.shape())));
        };
        let (vocab, width) = (*vocab, *width);
        let mut out = vec![0.0; width];
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        for &id in &ids {
            if id >= vocab {
                return Err(Error::OutOfVocabulary { token: id, vocab });
            }
            for (o, v) in out.iter_mut().zip(&t.data()[id * width..(id + 1) * width]) {
                *o += v;
            }
        }
        Ok(self.push(
            Op::EmbeddingSum { table, ids },
            Tensor::vector(out),
            &[table],
        ))
    }

    /// Scalar at a flat index.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(x);
        if index >= v.len() {
            return Err(shape_err("pick", format!("index {index} of {}", v.len())));
        }
        let y = Tensor::scalar(v.data()[index]);
        Ok(self.push(Op::Pick { x, index }, y, &[x]))
    }
}
