use crate::a2c::TrainerConfig;
use crate::agent::AgentConfig;
use crate::error::{Error, Result};
use crate::grounding::FusionKind;
use crate::teacher::{Grammar, Teacher, Vocabulary, DESK_GRAMMAR};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where relative output directories are rooted.
pub const OUTPUT_ENV: &str = "GFTNAV_OUT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_agent() -> AgentConfig {
    AgentConfig::desk(FusionKind::Gft1)
}
fn default_eval_sessions() -> usize {
    1000
}
fn default_checkpoint_every() -> u64 {
    5000
}
fn default_output() -> PathBuf {
    PathBuf::from("default")
}

/// A complete, reproducible experiment description. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_agent")]
    pub agent: AgentConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    /// `word category` lines; the bundled list when absent.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default)]
    pub grammar: Option<PathBuf>,
    #[serde(default = "default_eval_sessions")]
    pub eval_sessions: usize,
    /// Minibatches per pass; a checkpoint is written after each pass.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    /// Relative paths are resolved under [`output_root`].
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// D=16, 32-wide embeddings, 64-wide recurrences, 8 workers, batch 32,
    /// levels 1-2.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            agent: default_agent(),
            trainer: TrainerConfig {
                n_agents: 8,
                n_batch: 32,
                max_level: 2,
                learning_rate: 3e-4,
                rms_epsilon: 1e-5,
                entropy_weight: 0.01,
                minibatches: 50_000,
                ..TrainerConfig::default()
            },
            vocabulary: None,
            grammar: None,
            eval_sessions: default_eval_sessions(),
            checkpoint_every: default_checkpoint_every(),
            output_dir: default_output(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.trainer.validate()?;
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        for p in [&self.vocabulary, &self.grammar].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        if self.grammar.is_some() && self.vocabulary.is_none() {
            // grammar slots are filled from the vocabulary, so both travel together
            return Err(Error::Config("a custom grammar needs a custom vocabulary".into()));
        }
        Ok(())
    }

    pub fn teacher(&self) -> Result<Teacher> {
        let Some(vpath) = &self.vocabulary else {
            return Ok(Teacher::desk());
        };
        let vocab = Vocabulary::parse(&std::fs::read_to_string(vpath)?)?;
        let grammar = match &self.grammar {
            Some(g) => Grammar::with_vocabulary(&std::fs::read_to_string(g)?, &vocab)?,
            None => Grammar::with_vocabulary(DESK_GRAMMAR, &vocab)?,
        };
        Ok(Teacher::new(vocab, grammar))
    }

    pub fn output_path(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            output_root().join(&self.output_dir)
        }
    }
}
