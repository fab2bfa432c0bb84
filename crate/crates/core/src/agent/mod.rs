//! Perception and control network: CNN, grounding module, three GRUs and
//! the policy/value heads.


use crate::environment::{Action, Observation, IMAGE_SIZE};
use crate::error::{shape_err, Error, Result};
use crate::grounding::{FusionKind, FusionModule, FusionWidths};
use crate::nn::{Conv, Dense, Gru};
use crate::tensor::{Graph, NodeId, ParamId, ParameterSet, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Previous-action id used at session start.
pub const START_ACTION: usize = Action::COUNT;

/// `(kernel, stride, filters)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub fusion: FusionKind,
    pub conv: Vec<ConvSpec>,
    pub image_size: usize,
    /// Word embedding width (replaced by the channel count for Concept).
    pub embedding: usize,
    /// Hidden layer of the language-side generators.
    pub generator_hidden: usize,
    /// Compact embedding width for Concat/CGated.
    pub projection: usize,
    pub action_embedding: usize,
    pub action_hidden: usize,
    pub memory: usize,
    pub latent: usize,
    /// Heads' hidden layer.
    pub head_hidden: usize,
}

impl AgentConfig {
    /// Full-size network.
    pub fn full(fusion: FusionKind) -> Self {
        Self {
            fusion,
            conv: vec![
                ConvSpec { kernel: 8, stride: 4, filters: 32 },
                ConvSpec { kernel: 4, stride: 2, filters: 64 },
                ConvSpec { kernel: 3, stride: 1, filters: 64 },
            ],
            image_size: IMAGE_SIZE,
            embedding: 128,
            generator_hidden: 128,
            projection: 512,
            action_embedding: 128,
            action_hidden: 128,
            memory: 512,
            latent: 512,
            head_hidden: 512,
        }
    }

    /// CPU-sized profile.
    pub fn desk(fusion: FusionKind) -> Self {
        Self {
            fusion,
            conv: vec![
                ConvSpec { kernel: 8, stride: 4, filters: 16 },
                ConvSpec { kernel: 4, stride: 2, filters: 16 },
                ConvSpec { kernel: 3, stride: 1, filters: 16 },
            ],
            image_size: IMAGE_SIZE,
            embedding: 32,
            generator_hidden: 32,
            projection: 64,
            action_embedding: 16,
            action_hidden: 16,
            memory: 64,
            latent: 64,
            head_hidden: 64,
        }
    }

    /// Gradient-check sized network.
    pub fn tiny(fusion: FusionKind) -> Self {
        Self {
            fusion,
            conv: vec![
                ConvSpec { kernel: 8, stride: 4, filters: 3 },
                ConvSpec { kernel: 4, stride: 2, filters: 4 },
                ConvSpec { kernel: 3, stride: 1, filters: 4 },
            ],
            image_size: IMAGE_SIZE,
            embedding: 5,
            generator_hidden: 6,
            projection: 7,
            action_embedding: 3,
            action_hidden: 4,
            memory: 8,
            latent: 8,
            head_hidden: 6,
        }
    }

    pub fn channels(&self) -> usize {
        self.conv.last().map_or(3, |c| c.filters)
    }

    /// Spatial side after the conv stack.
    pub fn feature_side(&self) -> Result<usize> {
        let mut side = self.image_size;
        for c in &self.conv {
            if c.kernel > side || c.stride == 0 {
                return Err(Error::Config(format!("conv layer {c:?} does not fit a {side}x{side} input")));
            }
            side = (side - c.kernel) / c.stride + 1;
        }
        Ok(side)
    }

    pub fn sentence_width(&self) -> usize {
        if self.fusion == FusionKind::Concept {
            self.channels()
        } else {
            self.embedding
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.image_size,
            self.embedding,
            self.generator_hidden,
            self.projection,
            self.action_embedding,
            self.action_hidden,
            self.memory,
            self.latent,
            self.head_hidden,
        ];
        if widths.contains(&0) || self.conv.is_empty() || self.conv.iter().any(|c| c.filters == 0) {
            return Err(Error::Config("agent widths must be positive".into()));
        }
        self.feature_side().map(|_| ())
    }
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub h_m: Vec<f64>,
    pub h_a: Vec<f64>,
    pub f: Vec<f64>,
    pub prev_action: usize,
}

pub fn reset_history(cfg: &AgentConfig) -> History {
    History {
        h_m: vec![0.0; cfg.memory],
        h_a: vec![0.0; cfg.action_hidden],
        f: vec![0.0; cfg.latent],
        prev_action: START_ACTION,
    }
}

/// Graph handles for a [`History`].
#[derive(Debug, Clone, Copy)]
pub struct HistoryNodes {
    pub h_m: NodeId,
    pub h_a: NodeId,
    pub f: NodeId,
    pub prev_action: usize,
}

impl HistoryNodes {
    /// Constant (gradient-free) copy of `h`.
    pub fn constant(g: &mut Graph, h: &History) -> Self {
        Self {
            h_m: g.constant(Tensor::vector(h.h_m.clone())),
            h_a: g.constant(Tensor::vector(h.h_a.clone())),
            f: g.constant(Tensor::vector(h.f.clone())),
            prev_action: h.prev_action,
        }
    }

    pub fn to_history(&self, g: &Graph) -> History {
        History {
            h_m: g.value(self.h_m).data().to_vec(),
            h_a: g.value(self.h_a).data().to_vec(),
            f: g.value(self.f).data().to_vec(),
            prev_action: self.prev_action,
        }
    }

    /// Same state after taking `action`.
    pub fn with_action(mut self, action: usize) -> Self {
        self.prev_action = action;
        self
    }
}

/// Nodes produced by one forward step.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub log_probs: NodeId,
    pub probs: NodeId,
    pub value: NodeId,
    /// Recurrent state after the step; `prev_action` still refers to the
    /// action consumed by this step until [`HistoryNodes::with_action`].
    pub next: HistoryNodes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub value: f64,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    vocab_size: usize,
    words: ParamId,
    convs: Vec<Conv>,
    fusion: FusionModule,
    pre_m: Dense,
    gru_m: Gru,
    actions: ParamId,
    gru_a: Gru,
    pre_f: Dense,
    gru_f: Gru,
    policy_hidden: Dense,
    policy_out: Dense,
    value_hidden: Dense,
    value_out: Dense,
}

impl Agent {
    /// Registers every layer in `params`; nothing else is created.
    pub fn new(params: &mut ParameterSet, cfg: &AgentConfig, vocab_size: usize) -> Result<Self> {
        cfg.validate()?;
        let side = cfg.feature_side()?;
        let d = cfg.channels();
        let words = params.init_embedding("words", &[vocab_size, cfg.sentence_width()])?;
        let mut convs = Vec::with_capacity(cfg.conv.len());
        let mut cin = 3;
        for (i, c) in cfg.conv.iter().enumerate() {
            convs.push(Conv::new(params, &format!("conv{}", i + 1), cin, c.filters, c.kernel, c.stride)?);
            cin = c.filters;
        }
        let fusion = FusionModule::new(
            params,
            "fusion",
            cfg.fusion,
            d,
            side * side,
            FusionWidths {
                embedding: cfg.sentence_width(),
                hidden: cfg.generator_hidden,
                projection: cfg.projection,
            },
        )?;
        let pre_m = Dense::new(params, "pre_m", fusion.output_len(), cfg.memory)?;
        let gru_m = Gru::new(params, "gru_m", cfg.memory, cfg.memory)?;
        let actions = params.init_embedding("action_embed", &[Action::COUNT + 1, cfg.action_embedding])?;
        let gru_a = Gru::new(params, "gru_a", cfg.action_embedding, cfg.action_hidden)?;
        let pre_f = Dense::new(params, "pre_f", cfg.memory + cfg.action_hidden, cfg.latent)?;
        let gru_f = Gru::new(params, "gru_f", cfg.latent, cfg.latent)?;
        Ok(Self {
            cfg: cfg.clone(),
            vocab_size,
            words,
            convs,
            fusion,
            pre_m,
            gru_m,
            actions,
            gru_a,
            pre_f,
            gru_f,
            policy_hidden: Dense::new(params, "policy_hidden", cfg.latent, cfg.head_hidden)?,
            policy_out: Dense::new(params, "policy_out", cfg.head_hidden, Action::COUNT)?,
            value_hidden: Dense::new(params, "value_hidden", cfg.latent, cfg.head_hidden)?,
            value_out: Dense::new(params, "value_out", cfg.head_hidden, 1)?,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn fusion(&self) -> &FusionModule {
        &self.fusion
    }

    pub fn word_table(&self) -> ParamId {
        self.words
    }

    pub fn image_node(&self, g: &mut Graph, obs: &Observation) -> Result<NodeId> {
        let s = self.cfg.image_size;
        if obs.image.len() != s * s * 3 {
            return Err(shape_err("agent input", format!("{} bytes for a {s}x{s} image", obs.image.len())));
        }
        Ok(g.constant(Tensor::new(vec![3, s, s], obs.planar_unit())?))
    }

    pub fn sentence(&self, g: &mut Graph, tokens: &[usize]) -> Result<NodeId> {
        let table = g.param(self.words);
        g.embedding_sum(table, tokens)
    }

    /// Feature cube `[D, N]` from a `[3, H, W]` image.
    pub fn cube(&self, g: &mut Graph, image: NodeId) -> Result<NodeId> {
        let mut x = image;
        for conv in &self.convs {
            let y = conv.forward(g, x)?;
            x = g.relu(y);
        }
        let s = g.shape(x).to_vec();
        g.reshape(x, &[s[0], s[1] * s[2]])
    }

    /// Grounded, flattened feature vector.
    pub fn perceive(&self, g: &mut Graph, image: NodeId, tokens: &[usize]) -> Result<NodeId> {
        let c = self.cube(g, image)?;
        let l = self.sentence(g, tokens)?;
        self.fusion.forward(g, c, l)
    }

    /// Recurrence and heads. `f` reads the action memory from the previous
    /// step; the action memory itself absorbs the previous action.
    pub fn recur(&self, g: &mut Graph, m: NodeId, prev: &HistoryNodes) -> Result<StepNodes> {
        let m_in = self.pre_m.project(g, m, crate::tensor::Activation::Relu)?;
        let h_m = self.gru_m.step(g, m_in, prev.h_m)?;

        let table = g.param(self.actions);
        let a_emb = g.embedding_sum(table, &[prev.prev_action])?;
        let h_a = self.gru_a.step(g, a_emb, prev.h_a)?;

        let joint = g.concat(&[h_m, prev.h_a])?;
        let f_in = self.pre_f.project(g, joint, crate::tensor::Activation::Relu)?;
        let f = self.gru_f.step(g, f_in, prev.f)?;

        let ph = self.policy_hidden.project(g, f, crate::tensor::Activation::Relu)?;
        let logits = self.policy_out.forward(g, ph)?;
        let logits = g.reshape(logits, &[1, Action::COUNT])?;
        let log_probs = g.log_softmax_rows(logits)?;
        let probs = g.softmax_rows(logits)?;
        let vh = self.value_hidden.project(g, f, crate::tensor::Activation::Relu)?;
        let v = self.value_out.forward(g, vh)?;
        let value = g.reshape(v, &[])?;
        Ok(StepNodes {
            log_probs,
            probs,
            value,
            next: HistoryNodes {
                h_m,
                h_a,
                f,
                prev_action: prev.prev_action,
            },
        })
    }

    pub fn forward(&self, g: &mut Graph, obs: &Observation, tokens: &[usize], prev: &HistoryNodes) -> Result<StepNodes> {
        let image = self.image_node(g, obs)?;
        let m = self.perceive(g, image, tokens)?;
        self.recur(g, m, prev)
    }

    /// Gradient-free step: samples (or argmaxes) an action.
    pub fn act<R: Rng + ?Sized>(
        &self,
        params: &ParameterSet,
        obs: &Observation,
        tokens: &[usize],
        prev: &History,
        greedy: bool,
        rng: &mut R,
    ) -> Result<(usize, PolicyOutput, History)> {
        let mut g = Graph::new(params);
        let h = HistoryNodes::constant(&mut g, prev);
        let out = self.forward(&mut g, obs, tokens, &h)?;
        let probs = g.value(out.probs).data().to_vec();
        let action = if greedy { argmax(&probs) } else { sample_categorical(&probs, rng) };
        let policy = PolicyOutput {
            probs,
            value: g.value(out.value).item(),
            f: g.value(out.next.f).data().to_vec(),
        };
        Ok((action, policy, out.next.with_action(action).to_history(&g)))
    }
}

/// Lowest index among the maxima.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a normalised distribution.
pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
