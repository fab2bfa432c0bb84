//! Parameterised layers built on the tensor graph.

use crate::error::Result;
use crate::tensor::{Activation, Graph, NodeId, ParamId, ParameterSet};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(params: &mut ParameterSet, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let w = params.init_with_fan_in(&format!("{name}.w"), &[outputs, inputs], inputs)?;
        let b = params.init_with_fan_in(&format!("{name}.b"), &[outputs], inputs)?;
        Ok(Self {
            w,
            b,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.affine(x, w, Some(b))
    }

    /// Affine map followed by `act`.
    pub fn project(&self, g: &mut Graph, x: NodeId, act: Activation) -> Result<NodeId> {
        let y = self.forward(g, x)?;
        Ok(match act {
            Activation::Identity => y,
            a => g.activate(y, a),
        })
    }
}

/// Valid convolution with `filters` kernels of size `kernel x kernel`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let w = params.init_with_fan_in(
            &format!("{name}.w"),
            &[filters, in_channels, kernel, kernel],
            fan_in,
        )?;
        let b = params.init_with_fan_in(&format!("{name}.b"), &[filters], fan_in)?;
        Ok(Self {
            w,
            b,
            kernel,
            stride,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv2d(x, w, Some(b), self.stride)
    }
}

/// Gated recurrent unit:
///
/// ```text
/// r  = sigmoid(W_r x + U_r h + b_r)
/// z  = sigmoid(W_z x + U_z h + b_z)
/// h~ = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub w_r: Dense,
    pub w_z: Dense,
    pub w_h: Dense,
    pub u_r: ParamId,
    pub u_z: ParamId,
    pub u_h: ParamId,
}

impl Gru {
    pub fn new(params: &mut ParameterSet, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w_r = Dense::new(params, &format!("{name}.reset_in"), input, hidden)?;
        let w_z = Dense::new(params, &format!("{name}.update_in"), input, hidden)?;
        let w_h = Dense::new(params, &format!("{name}.cand_in"), input, hidden)?;
        let u_r = params.init_parameter(&format!("{name}.reset_rec.w"), &[hidden, hidden])?;
        let u_z = params.init_parameter(&format!("{name}.update_rec.w"), &[hidden, hidden])?;
        let u_h = params.init_parameter(&format!("{name}.cand_rec.w"), &[hidden, hidden])?;
        Ok(Self {
            input,
            hidden,
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
        })
    }

    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId) -> Result<NodeId> {
        let gate = |g: &mut Graph, w: &Dense, u: ParamId, rec_in: NodeId| -> Result<NodeId> {
            let a = w.forward(g, x)?;
            let u = g.param(u);
            let r = g.affine(rec_in, u, None)?;
            g.add(a, r)
        };
        let r_pre = gate(g, &self.w_r, self.u_r, h)?;
        let r = g.sigmoid(r_pre);
        let z_pre = gate(g, &self.w_z, self.u_z, h)?;
        let z = g.sigmoid(z_pre);
        let rh = g.mul(r, h)?;
        let c_pre = gate(g, &self.w_h, self.u_h, rh)?;
        let cand = g.tanh(c_pre);
        // h + z * (cand - h)
        let delta = g.sub(cand, h)?;
        let step = g.mul(z, delta)?;
        g.add(h, step)
    }
}
