use super::cube::{gft_step_node, FeatureCube, FilmParams, GateVector, TransformStack};
use super::SentenceEmbedding;
use crate::error::{shape_err, Error, Result};
use crate::nn::Dense;
use crate::tensor::{Activation, Graph, NodeId, ParamId, ParameterSet, Tensor};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which language-vision fusion the agent uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Gft1,
    Gft2,
    Gft3,
    Concat,
    Gated,
    Cgated,
    Film,
    Concept,
}

impl FusionKind {
    pub const ALL: [FusionKind; 8] = [
        FusionKind::Gft1,
        FusionKind::Gft2,
        FusionKind::Gft3,
        FusionKind::Concat,
        FusionKind::Gated,
        FusionKind::Cgated,
        FusionKind::Film,
        FusionKind::Concept,
    ];

    pub fn gft_steps(self) -> Option<usize> {
        match self {
            FusionKind::Gft1 => Some(1),
            FusionKind::Gft2 => Some(2),
            FusionKind::Gft3 => Some(3),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Gft1 => "gft1",
            FusionKind::Gft2 => "gft2",
            FusionKind::Gft3 => "gft3",
            FusionKind::Concat => "concat",
            FusionKind::Gated => "gated",
            FusionKind::Cgated => "cgated",
            FusionKind::Film => "film",
            FusionKind::Concept => "concept",
        }
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion `{s}`")))
    }
}

/// Layer widths shared by the fusion modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionWidths {
    /// Sentence embedding width (word embedding length).
    pub embedding: usize,
    /// Hidden layer of the language-side MLPs (128 at full scale).
    pub hidden: usize,
    /// Compact embedding width of Concat and CGated (512 at full scale).
    pub projection: usize,
}

#[derive(Debug, Clone)]
enum Layers {
    Gft { hidden: Dense, steps: Vec<Dense> },
    Film { hidden: Dense, out: Dense },
    Gated { hidden: Dense, out: Dense },
    Cgated { visual: Dense, gate: Dense },
    Concat { visual: Dense, language: Dense },
    Concept { filter: ParamId, bias: ParamId },
}

/// A fusion module bound to parameters registered in a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct FusionModule {
    kind: FusionKind,
    channels: usize,
    locations: usize,
    sentence_width: usize,
    pub activation: Activation,
    layers: Layers,
}

impl FusionModule {
    pub fn new(
        params: &mut ParameterSet,
        prefix: &str,
        kind: FusionKind,
        channels: usize,
        locations: usize,
        widths: FusionWidths,
    ) -> Result<Self> {
        let d = channels;
        let flat = d * locations;
        let e = widths.embedding;
        let name = |s: &str| format!("{prefix}.{s}");
        let (layers, sentence_width) = match kind {
            FusionKind::Gft1 | FusionKind::Gft2 | FusionKind::Gft3 => {
                let j = kind.gft_steps().unwrap_or(1);
                let hidden = Dense::new(params, &name("gen_hidden"), e, widths.hidden)?;
                let steps = (0..j)
                    .map(|s| Dense::new(params, &name(&format!("gen_t{}", s + 1)), widths.hidden, d * (d + 1)))
                    .collect::<Result<Vec<_>>>()?;
                (Layers::Gft { hidden, steps }, e)
            }
            FusionKind::Film => (
                Layers::Film {
                    hidden: Dense::new(params, &name("film_hidden"), e, widths.hidden)?,
                    out: Dense::new(params, &name("film_out"), widths.hidden, 2 * d)?,
                },
                e,
            ),
            FusionKind::Gated => (
                Layers::Gated {
                    hidden: Dense::new(params, &name("gate_hidden"), e, widths.hidden)?,
                    out: Dense::new(params, &name("gate_out"), widths.hidden, d)?,
                },
                e,
            ),
            FusionKind::Cgated => (
                Layers::Cgated {
                    visual: Dense::new(params, &name("visual_proj"), flat, widths.projection)?,
                    gate: Dense::new(params, &name("gate_proj"), e, widths.projection)?,
                },
                e,
            ),
            FusionKind::Concat => (
                Layers::Concat {
                    visual: Dense::new(params, &name("visual_proj"), flat, widths.projection)?,
                    language: Dense::new(params, &name("language_proj"), e, widths.projection)?,
                },
                e,
            ),
            FusionKind::Concept => (
                Layers::Concept {
                    filter: params.init_with_fan_in(&name("env_filter.w"), &[1, d], d)?,
                    bias: params.init_with_fan_in(&name("env_filter.b"), &[1], d)?,
                },
                d,
            ),
        };
        Ok(Self {
            kind,
            channels,
            locations,
            sentence_width,
            activation: Activation::Relu,
            layers,
        })
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    /// Required sentence embedding width; Concept uses the channel count.
    pub fn sentence_width(&self) -> usize {
        self.sentence_width
    }

    pub fn output_len(&self) -> usize {
        let flat = self.channels * self.locations;
        match &self.layers {
            Layers::Gft { .. } | Layers::Film { .. } | Layers::Gated { .. } => flat,
            Layers::Cgated { visual, .. } => visual.outputs,
            Layers::Concat { visual, language } => visual.outputs + language.outputs,
            Layers::Concept { .. } => 2 * self.locations,
        }
    }

    fn check_inputs(&self, g: &Graph, cube: NodeId, sentence: NodeId) -> Result<()> {
        if g.shape(cube) != [self.channels, self.locations] {
            return Err(shape_err(
                "fusion",
                format!(
                    "cube {:?}, expected [{}, {}]",
                    g.shape(cube),
                    self.channels,
                    self.locations
                ),
            ));
        }
        if g.value(sentence).len() != self.sentence_width {
            return Err(shape_err(
                "fusion",
                format!(
                    "sentence width {} != {}",
                    g.value(sentence).len(),
                    self.sentence_width
                ),
            ));
        }
        Ok(())
    }

    /// Generated transforms `T_1..T_J`, each reshaped to `[D, D + 1]`.
    pub fn transforms_node(&self, g: &mut Graph, sentence: NodeId) -> Result<Vec<NodeId>> {
        let Layers::Gft { hidden, steps } = &self.layers else {
            return Err(Error::Config(format!("{} has no transforms", self.kind)));
        };
        let d = self.channels;
        let h = hidden.project(g, sentence, Activation::Relu)?;
        steps
            .iter()
            .map(|layer| {
                let t = layer.forward(g, h)?;
                g.reshape(t, &[d, d + 1])
            })
            .collect()
    }

    /// Fused output in its natural shape (`[D, N]`, `[2, N]` or a vector).
    pub fn forward_unflattened(&self, g: &mut Graph, cube: NodeId, sentence: NodeId) -> Result<NodeId> {
        self.check_inputs(g, cube, sentence)?;
        let n = self.locations;
        match &self.layers {
            Layers::Gft { .. } => {
                let mut c = cube;
                for t in self.transforms_node(g, sentence)? {
                    c = gft_step_node(g, c, t, self.activation)?;
                }
                Ok(c)
            }
            Layers::Film { hidden, out } => {
                let h = hidden.project(g, sentence, Activation::Relu)?;
                let p = out.forward(g, h)?;
                let d = self.channels;
                let scale = g.slice(p, 0, d)?;
                let shift = g.slice(p, d, d)?;
                let y = g.scale_rows(cube, scale)?;
                let y = g.add_row_bias(y, shift)?;
                Ok(g.activate(y, self.activation))
            }
            Layers::Gated { hidden, out } => {
                let h = hidden.project(g, sentence, Activation::Relu)?;
                let gate = out.project(g, h, Activation::Sigmoid)?;
                g.scale_rows(cube, gate)
            }
            Layers::Cgated { visual, gate } => {
                let flat = g.flatten(cube)?;
                let v = visual.project(g, flat, Activation::Relu)?;
                let gv = gate.project(g, sentence, Activation::Sigmoid)?;
                g.mul(v, gv)
            }
            Layers::Concat { visual, language } => {
                let flat = g.flatten(cube)?;
                let v = visual.project(g, flat, Activation::Relu)?;
                let l = language.project(g, sentence, Activation::Relu)?;
                g.concat(&[v, l])
            }
            Layers::Concept { filter, bias } => {
                let d = self.channels;
                let lrow = g.reshape(sentence, &[1, d])?;
                let att = g.matmul(lrow, cube)?;
                let att = g.relu(att);
                let w = g.param(*filter);
                let b = g.param(*bias);
                let env = g.matmul(w, cube)?;
                let env = g.add_row_bias(env, b)?;
                let env = g.relu(env);
                let both = g.concat(&[att, env])?;
                g.reshape(both, &[2, n])
            }
        }
    }

    /// Fused output flattened to one vector, as fed to the recurrent stage.
    pub fn forward(&self, g: &mut Graph, cube: NodeId, sentence: NodeId) -> Result<NodeId> {
        let y = self.forward_unflattened(g, cube, sentence)?;
        g.flatten(y)
    }

    /// Evaluates the transform generator on a fixed sentence.
    pub fn transforms(&self, params: &ParameterSet, sentence: &SentenceEmbedding) -> Result<TransformStack> {
        let mut g = Graph::new(params);
        let l = g.constant(sentence.values.clone());
        let ts = self.transforms_node(&mut g, l)?;
        TransformStack::new(ts.into_iter().map(|t| g.value(t).clone()).collect(), self.activation)
    }

    pub fn film_params(&self, params: &ParameterSet, sentence: &SentenceEmbedding) -> Result<FilmParams> {
        let Layers::Film { hidden, out } = &self.layers else {
            return Err(Error::Config(format!("{} is not film", self.kind)));
        };
        let mut g = Graph::new(params);
        let l = g.constant(sentence.values.clone());
        let h = hidden.project(&mut g, l, Activation::Relu)?;
        let p = out.forward(&mut g, h)?;
        let v = g.value(p).data();
        let d = self.channels;
        Ok(FilmParams {
            scale: v[..d].to_vec(),
            shift: v[d..].to_vec(),
        })
    }

    pub fn gate(&self, params: &ParameterSet, sentence: &SentenceEmbedding) -> Result<GateVector> {
        let mut g = Graph::new(params);
        let l = g.constant(sentence.values.clone());
        let gate = match &self.layers {
            Layers::Gated { hidden, out } => {
                let h = hidden.project(&mut g, l, Activation::Relu)?;
                out.project(&mut g, h, Activation::Sigmoid)?
            }
            Layers::Cgated { gate, .. } => gate.project(&mut g, l, Activation::Sigmoid)?,
            _ => return Err(Error::Config(format!("{} has no gate", self.kind))),
        };
        GateVector::new(g.value(gate).data().to_vec())
    }

    /// Pure evaluation of the fusion on concrete inputs.
    pub fn fuse(&self, params: &ParameterSet, cube: &FeatureCube, sentence: &SentenceEmbedding) -> Result<Tensor> {
        let mut g = Graph::new(params);
        let c = g.constant(cube.values().clone());
        let l = g.constant(sentence.values.clone());
        let y = self.forward_unflattened(&mut g, c, l)?;
        Ok(g.value(y).clone())
    }

    /// Parameter ids owned by this module (for tests and analysis).
    pub fn param_ids(&self) -> Vec<ParamId> {
        let dense = |d: &Dense| [d.w, d.b];
        match &self.layers {
            Layers::Gft { hidden, steps } => {
                let mut v = dense(hidden).to_vec();
                steps.iter().for_each(|s| v.extend(dense(s)));
                v
            }
            Layers::Film { hidden, out } | Layers::Gated { hidden, out } => {
                [dense(hidden), dense(out)].concat()
            }
            Layers::Cgated { visual, gate } => [dense(visual), dense(gate)].concat(),
            Layers::Concat { visual, language } => [dense(visual), dense(language)].concat(),
            Layers::Concept { filter, bias } => vec![*filter, *bias],
        }
    }
}
