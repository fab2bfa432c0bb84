use clap::{Parser, Subcommand};
use gftnav_core::harness::{
    analyze_transforms, export_fingerprints, load_checkpoint, parse_pairs, read_trace, record_episode, reference_commands,
    replay_episode, run_evaluation, run_generalization, run_training, write_trace, AgentPolicy, Checkpoint, EvalReport,
    ExperimentConfig, OraclePolicy, Policy, UniformPolicy,
};
use gftnav_core::teacher::{grammar_enumerate, level_config, Grammar, Teacher, Vocabulary, DESK_VOCAB};
use gftnav_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Language-directed gridworld navigation: training, evaluation and analysis.
#[derive(Parser)]
#[command(name = "gftnav", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from an experiment config; metrics and checkpoints go to the output directory.
    Train {
        config: PathBuf,
        /// Stop after this many minibatches instead of the configured total.
        #[arg(long)]
        minibatches: Option<u64>,
        /// Continue from a checkpoint written by the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Progress line every N minibatches (0 = silent).
        #[arg(long, default_value_t = 100)]
        log_every: u64,
    },
    /// Greedy evaluation of checkpoints on fresh sessions, curriculum off.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoints: String,
        #[arg(long)]
        sessions: Option<usize>,
        /// Map level to evaluate on (default: the config's final level).
        #[arg(long)]
        level: Option<usize>,
        /// Sample actions instead of taking the argmax.
        #[arg(long)]
        sampled: bool,
        /// Also report the uniform-random and shortest-path reference policies.
        #[arg(long)]
        baselines: bool,
    },
    /// Evaluate on the larger held-out maps without retraining.
    Generalize {
        config: PathBuf,
        #[arg(long)]
        checkpoints: String,
        #[arg(long, value_delimiter = ',', default_value = "9,10,11")]
        sizes: Vec<usize>,
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Export transform fingerprints (CSV + PPM) for command pairs.
    Analyze {
        config: PathBuf,
        /// Lines of `sentence | sentence`.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 1000)]
        refs: usize,
        /// Model to analyse (default: the newest checkpoint in the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record one session as a JSON-lines trace.
    Record {
        config: PathBuf,
        /// Agent checkpoint; without it the shortest-path oracle drives.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value = "nav")]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate a trace, verify its state hashes and dump PPM frames.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sentence counts and length ranges of a grammar.
    GrammarStats {
        grammar: PathBuf,
        /// Vocabulary that fills the OBJ/OBJ2/DIR slots (default: bundled).
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn checkpoints(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Config(format!("bad glob `{pattern}`: {e}")))?;
    let mut found: Vec<PathBuf> = paths.filter_map(|p| p.ok()).collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Checkpoint(format!("no checkpoints match `{pattern}`")));
    }
    Ok(found)
}

fn load_all(paths: &[PathBuf], cfg: &ExperimentConfig) -> Result<Vec<(String, Checkpoint)>> {
    paths
        .iter()
        .map(|p| {
            let ck = load_checkpoint(p)?;
            if ck.state.agent != cfg.agent {
                return Err(Error::Checkpoint(format!("{}: agent shape differs from the config", p.display())));
            }
            Ok((p.display().to_string(), ck))
        })
        .collect()
}

fn policies<'a>(
    models: &'a [(String, Checkpoint)],
    agent: &'a gftnav_core::agent::Agent,
    teacher: &Teacher,
    sampled: bool,
) -> Vec<Box<dyn Policy + 'a>> {
    models
        .iter()
        .map(|(name, ck)| {
            let mut p = AgentPolicy::new(name.clone(), agent, &ck.params, teacher.n_classes());
            p.greedy = !sampled;
            Box::new(p) as Box<dyn Policy>
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn print_report(r: &EvalReport) {
    print!("{}", r.table());
    for run in &r.runs {
        println!("  {:<40} {:>5.1}%  timeouts {}", run.model, run.rate(), run.timeouts);
    }
}

/// Agent skeleton matching `cfg`, used to interpret checkpoint parameters.
fn skeleton(cfg: &ExperimentConfig, teacher: &Teacher) -> Result<gftnav_core::agent::Agent> {
    let mut scratch = gftnav_core::tensor::ParameterSet::new(0);
    gftnav_core::agent::Agent::new(&mut scratch, &cfg.agent, teacher.vocab.len())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            minibatches,
            resume,
            log_every,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = cfg.output_path();
            let s = run_training(&cfg, &out, minibatches, resume.as_deref(), |m| {
                if log_every > 0 && m.batch % log_every == 0 {
                    let rate = m.success_rate.map_or("-".into(), |r| format!("{:.3}", r));
                    eprintln!(
                        "batch {:>8} steps {:>10} loss {:>8.4} entropy {:.3} success {} levels {:?}",
                        m.batch, m.env_steps, m.loss, m.entropy, rate, m.levels
                    );
                }
            })?;
            println!(
                "trained to minibatch {} ({} env steps); {} checkpoints in {}",
                s.batches,
                s.env_steps,
                s.checkpoints.len(),
                out.display()
            );
        }
        Cmd::Eval {
            config,
            checkpoints: pattern,
            sessions,
            level,
            sampled,
            baselines,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let teacher = cfg.teacher()?;
            let models = load_all(&checkpoints(&pattern)?, &cfg)?;
            let agent = skeleton(&cfg, &teacher)?;
            let mut ps = policies(&models, &agent, &teacher, sampled);
            let map = level_config(level.unwrap_or(cfg.trainer.max_level));
            let n = sessions.unwrap_or(cfg.eval_sessions);
            let report = run_evaluation(&mut ps, &teacher, &map, &cfg.trainer.tasks, n, cfg.seed)?;
            print_report(&report);
            write_json(&cfg.output_path().join("eval.json"), &report)?;
            if baselines {
                let mut refs: Vec<Box<dyn Policy>> = vec![Box::new(UniformPolicy), Box::new(OraclePolicy)];
                let b = run_evaluation(&mut refs, &teacher, &map, &cfg.trainer.tasks, n, cfg.seed)?;
                println!("reference policies:");
                for run in &b.runs {
                    println!("  {:<40} {:>5.1}%", run.model, run.rate());
                }
            }
        }
        Cmd::Generalize {
            config,
            checkpoints: pattern,
            sizes,
            sessions,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let teacher = cfg.teacher()?;
            let models = load_all(&checkpoints(&pattern)?, &cfg)?;
            let agent = skeleton(&cfg, &teacher)?;
            let mut ps = policies(&models, &agent, &teacher, false);
            let n = sessions.unwrap_or(cfg.eval_sessions);
            let reports = run_generalization(&mut ps, &teacher, &sizes, &cfg.trainer.tasks, n, cfg.seed)?;
            for r in &reports {
                print_report(r);
            }
            write_json(&cfg.output_path().join("generalization.json"), &reports)?;
        }
        Cmd::Analyze {
            config,
            pairs,
            refs,
            checkpoint,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let teacher = cfg.teacher()?;
            let path = match checkpoint {
                Some(p) => p,
                None => checkpoints(&cfg.output_path().join("ckpt_*.xgft").to_string_lossy())?
                    .pop()
                    .expect("non-empty"),
            };
            let models = load_all(std::slice::from_ref(&path), &cfg)?;
            let agent = skeleton(&cfg, &teacher)?;
            let text = std::fs::read_to_string(&pairs)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", pairs.display())))?;
            let pairs = parse_pairs(&text)?;
            let references = reference_commands(&teacher, refs, cfg.seed)?;
            let results = analyze_transforms(&agent, &models[0].1.params, &teacher, &pairs, &references)?;
            let dir = out.unwrap_or_else(|| cfg.output_path().join("fingerprints"));
            export_fingerprints(&dir, &results)?;
            println!("{} pairs from {} -> {}", results.len(), path.display(), dir.display());
        }
        Cmd::Record {
            config,
            checkpoint,
            level,
            task,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let teacher = cfg.teacher()?;
            let task = task.parse()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let session = teacher.new_session(&level_config(level), task, &mut rng)?;
            let agent = skeleton(&cfg, &teacher)?;
            let models = match &checkpoint {
                Some(p) => load_all(std::slice::from_ref(p), &cfg)?,
                None => Vec::new(),
            };
            let mut policy: Box<dyn Policy> = match models.first() {
                Some((name, ck)) => Box::new(AgentPolicy::new(name.clone(), &agent, &ck.params, teacher.n_classes())),
                None => Box::new(OraclePolicy),
            };
            let trace = record_episode(policy.as_mut(), &teacher, session, &mut rng)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            write_trace(&trace, &mut f)?;
            println!(
                "{} steps, command: {}, reward {:.2}",
                trace.steps.len(),
                trace.header.session.command.text(),
                trace.steps.iter().map(|s| s.reward).sum::<f64>()
            );
        }
        Cmd::Replay { trace, out } => {
            let file = std::fs::File::open(&trace)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", trace.display())))?;
            let t = read_trace(std::io::BufReader::new(file))?;
            let r = replay_episode(&t)?;
            let dir = out.unwrap_or_else(|| trace.with_extension("frames"));
            r.write(&dir)?;
            println!("{}", r.grids.last().map(String::as_str).unwrap_or(""));
            println!("{} frames verified, total reward {:.2} -> {}", r.frames.len(), r.total_reward, dir.display());
        }
        Cmd::GrammarStats { grammar, vocab } => {
            let vtext = match vocab {
                Some(p) => std::fs::read_to_string(p)?,
                None => DESK_VOCAB.to_string(),
            };
            let vocab = Vocabulary::parse(&vtext)?;
            let g = Grammar::with_vocabulary(&std::fs::read_to_string(&grammar)?, &vocab)?;
            for root in g.roots() {
                let (lo, hi) = g.length_range(root)?;
                println!(
                    "{root:<10} derivations {:>10}  sentences {:>10}  lengths {lo}..={hi}",
                    g.count_derivations(root)?,
                    g.sentences(root)?.len()
                );
            }
            println!("distinct sentences over all roots: {}", grammar_enumerate(&g)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
