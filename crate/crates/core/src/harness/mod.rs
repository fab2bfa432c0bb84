//! Experiment orchestration: configs, checkpoints, training runs,
//! evaluation suites, transform analysis and episode replays.

mod analyze;
mod checkpoint;
mod config;
mod eval;
mod replay;
mod run;

#[cfg(test)]
mod tests;

pub use analyze::{analyze_transforms, export_fingerprints, parse_pairs, reference_commands, PairFingerprints, FINGERPRINT_KERNEL};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{output_root, ExperimentConfig, OUTPUT_ENV};
pub use eval::{
    evaluate_policy, oracle_action, random_baseline, run_evaluation, run_generalization, AgentPolicy, EvalReport,
    OraclePolicy, Policy, RunReport, TaskSummary, TurnPolicy, UniformPolicy,
};
pub use replay::{read_trace, record_episode, replay_episode, write_trace, Replay, Trace, TraceHeader, TraceStep};
pub use run::{run_training, TrainSummary};
