//! Training runs on disk: metrics stream plus periodic checkpoints.

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::ExperimentConfig;
use crate::a2c::{MetricRecord, Trainer};
use crate::error::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub batches: u64,
    pub env_steps: u64,
    pub checkpoints: Vec<PathBuf>,
    pub last: Option<MetricRecord>,
}

fn checkpoint_name(batch: u64) -> String {
    format!("ckpt_{batch:09}.xgft")
}

/// Trains until `cfg.trainer.minibatches` (or `until`) minibatches exist,
/// writing `metrics.jsonl` and a checkpoint after every pass into `out`.
/// With `resume`, training continues from that checkpoint and metrics are
/// appended.
pub fn run_training(
    cfg: &ExperimentConfig,
    out: &Path,
    until: Option<u64>,
    resume: Option<&Path>,
    mut on_metric: impl FnMut(&MetricRecord),
) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let teacher = cfg.teacher()?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if ck.state.config != cfg.trainer || ck.state.agent != cfg.agent || ck.state.seed != cfg.seed {
                return Err(Error::Checkpoint(format!("{} was written by a different experiment config", p.display())));
            }
            ck.into_trainer(teacher)?
        }
        None => Trainer::with_teacher(cfg.trainer.clone(), &cfg.agent, cfg.seed, teacher)?,
    };
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    let metrics_path = out.join("metrics.jsonl");
    let file = if resume.is_some() {
        std::fs::OpenOptions::new().create(true).append(true).open(&metrics_path)?
    } else {
        std::fs::File::create(&metrics_path)?
    };
    let mut metrics = std::io::BufWriter::new(file);
    let target = until.unwrap_or(cfg.trainer.minibatches);
    let mut summary = TrainSummary {
        batches: trainer.batches,
        env_steps: trainer.env_steps,
        checkpoints: Vec::new(),
        last: None,
    };
    while trainer.batches < target {
        let m = trainer.step()?;
        serde_json::to_writer(&mut metrics, &m)?;
        writeln!(metrics)?;
        on_metric(&m);
        if trainer.batches % cfg.checkpoint_every == 0 || trainer.batches == target {
            metrics.flush()?;
            let path = out.join(checkpoint_name(trainer.batches));
            save_checkpoint(&trainer, &path)?;
            summary.checkpoints.push(path);
        }
        summary.last = Some(m);
    }
    metrics.flush()?;
    summary.batches = trainer.batches;
    summary.env_steps = trainer.env_steps;
    Ok(summary)
}
