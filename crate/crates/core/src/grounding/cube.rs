use crate::error::{shape_err, Result};
use crate::tensor::{Activation, Graph, NodeId, Tensor};

/// `D x N` block of visual features: `D` channels over `N` spatial locations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    values: Tensor,
}

impl FeatureCube {
    pub fn new(channels: usize, locations: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || locations == 0 {
            return Err(shape_err("FeatureCube", "empty cube"));
        }
        Ok(Self {
            values: Tensor::matrix(channels, locations, data)?,
        })
    }

    pub fn from_tensor(values: Tensor) -> Result<Self> {
        let (d, n) = match values.shape() {
            [d, n] => (*d, *n),
            s => return Err(shape_err("FeatureCube", format!("shape {s:?}"))),
        };
        Self::new(d, n, values.into_data())
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn locations(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }
}

/// The `J` language-generated matrices `T_j = [T'_j | b_j]`, each `D x (D + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStack {
    matrices: Vec<Tensor>,
    pub activation: Activation,
}

impl TransformStack {
    pub fn new(matrices: Vec<Tensor>, activation: Activation) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(shape_err("TransformStack", "needs at least one step"));
        };
        let d = first.shape()[0];
        for m in &matrices {
            if m.shape() != [d, d + 1] {
                return Err(shape_err(
                    "TransformStack",
                    format!("expected [{d}, {}], got {:?}", d + 1, m.shape()),
                ));
            }
        }
        Ok(Self {
            matrices,
            activation,
        })
    }

    pub fn steps(&self) -> usize {
        self.matrices.len()
    }

    pub fn channels(&self) -> usize {
        self.matrices[0].shape()[0]
    }

    pub fn matrices(&self) -> &[Tensor] {
        &self.matrices
    }

    /// The square part `T'_j` of step `j`.
    pub fn linear_part(&self, j: usize) -> Tensor {
        let d = self.channels();
        let m = &self.matrices[j];
        let data = (0..d)
            .flat_map(|r| m.data()[r * (d + 1)..r * (d + 1) + d].to_vec())
            .collect();
        Tensor::matrix(d, d, data).expect("square block")
    }

    pub fn bias_part(&self, j: usize) -> Tensor {
        let d = self.channels();
        Tensor::vector((0..d).map(|r| self.matrices[j].at(r, d)).collect())
    }
}

/// Per-channel scale and shift `c_d <- g(lambda_d c_d + b_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmParams {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Per-channel weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateVector(Vec<f64>);

impl GateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(shape_err("GateVector", "entries must lie in [0, 1]"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One guided transformation `g(T [C; 1^T])` recorded on a graph.
pub fn gft_step_node(g: &mut Graph, cube: NodeId, t: NodeId, act: Activation) -> Result<NodeId> {
    let (d, _) = g.value(cube).dims2();
    if g.shape(t) != [d, d + 1] {
        return Err(shape_err(
            "gft_step",
            format!("transform {:?} for {d} channels", g.shape(t)),
        ));
    }
    let aug = g.append_ones_row(cube)?;
    let y = g.matmul(t, aug)?;
    Ok(g.activate(y, act))
}

pub fn gft_step(cube: &FeatureCube, t: &Tensor, act: Activation) -> Result<FeatureCube> {
    let mut g = Graph::detached();
    let c = g.constant(cube.values.clone());
    let t = g.constant(t.clone());
    let y = gft_step_node(&mut g, c, t, act)?;
    FeatureCube::from_tensor(g.value(y).clone())
}

/// Applies every step of `stack` in order; the result is `C^[J]`.
pub fn gft_apply(cube: &FeatureCube, stack: &TransformStack) -> Result<FeatureCube> {
    let mut g = Graph::detached();
    let mut c = g.constant(cube.values.clone());
    for t in stack.matrices() {
        let t = g.constant(t.clone());
        c = gft_step_node(&mut g, c, t, stack.activation)?;
    }
    FeatureCube::from_tensor(g.value(c).clone())
}

pub fn film_apply(cube: &FeatureCube, film: &FilmParams, act: Activation) -> Result<FeatureCube> {
    let d = cube.channels();
    if film.scale.len() != d || film.shift.len() != d {
        return Err(shape_err("film", "parameter length differs from channel count"));
    }
    let mut g = Graph::detached();
    let c = g.constant(cube.values.clone());
    let s = g.constant(Tensor::vector(film.scale.clone()));
    let b = g.constant(Tensor::vector(film.shift.clone()));
    let y = g.scale_rows(c, s)?;
    let y = g.add_row_bias(y, b)?;
    let y = g.activate(y, act);
    FeatureCube::from_tensor(g.value(y).clone())
}

pub fn gated_apply(cube: &FeatureCube, gate: &GateVector) -> Result<FeatureCube> {
    let mut g = Graph::detached();
    let c = g.constant(cube.values.clone());
    let s = g.constant(Tensor::vector(gate.values().to_vec()));
    let y = g.scale_rows(c, s)?;
    FeatureCube::from_tensor(g.value(y).clone())
}

/// The transform step computed as a `1 x 1` convolution with `D` filters over
/// the cube laid out as a `D x 1 x N` image.
pub fn one_by_one_conv(cube: &FeatureCube, t: &TransformStack, step: usize) -> Result<FeatureCube> {
    let d = cube.channels();
    let n = cube.locations();
    let mut g = Graph::detached();
    let img = g.constant(cube.values.clone().reshaped(&[d, 1, n])?);
    let filters = g.constant(t.linear_part(step).reshaped(&[d, d, 1, 1])?);
    let bias = g.constant(t.bias_part(step));
    let y = g.conv2d(img, filters, Some(bias), 1)?;
    let y = g.activate(y, t.activation);
    FeatureCube::from_tensor(g.value(y).clone().reshaped(&[d, n])?)
}
