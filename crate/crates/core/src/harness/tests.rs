use super::*;
use crate::a2c::{Trainer, TrainerConfig};
use crate::agent::AgentConfig;
use crate::environment::{free_cells_connected, render};
use crate::grounding::FusionKind;
use crate::teacher::{level_config, TaskType, Teacher, Terminal};
use crate::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        agent: AgentConfig::tiny(FusionKind::Gft2),
        trainer: TrainerConfig {
            n_agents: 2,
            n_batch: 6,
            minibatches: 6,
            learning_rate: 1e-3,
            ..TrainerConfig::default()
        },
        checkpoint_every: 3,
        ..ExperimentConfig::desk(seed)
    }
}

#[test]
fn config_rejects_unknown_keys_and_round_trips() {
    let cfg = ExperimentConfig::desk(4);
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(cfg, back);
    let bad = r#"{"seed": 1, "eval_sesions": 10}"#;
    assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Json(_))));
    let minimal = ExperimentConfig::from_json(r#"{"seed": 9}"#).unwrap();
    assert_eq!(minimal.checkpoint_every, 5000);
    assert_eq!(minimal.agent.channels(), 16);
}

#[test]
fn config_rejects_missing_files() {
    let cfg = ExperimentConfig {
        vocabulary: Some("/nonexistent/words.vocab".into()),
        ..ExperimentConfig::desk(0)
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn config_loads_custom_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("w.vocab");
    std::fs::write(&v, crate::teacher::DESK_VOCAB).unwrap();
    let cfg = ExperimentConfig {
        vocabulary: Some(v),
        ..ExperimentConfig::desk(0)
    };
    cfg.validate().unwrap();
    assert_eq!(cfg.teacher().unwrap().vocab.len(), Teacher::desk().vocab.len());
}

#[test]
fn absolute_output_dirs_are_kept() {
    let cfg = ExperimentConfig {
        output_dir: "/tmp/x".into(),
        ..ExperimentConfig::desk(0)
    };
    assert_eq!(cfg.output_path(), std::path::PathBuf::from("/tmp/x"));
}

fn trained(seed: u64, batches: usize) -> Trainer {
    let cfg = toy_config(seed);
    let mut t = Trainer::new(cfg.trainer, &cfg.agent, seed).unwrap();
    for _ in 0..batches {
        t.step().unwrap();
    }
    t
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let t = trained(1, 2);
    let bytes = encode_checkpoint(&t).unwrap();
    let back = decode_checkpoint(&bytes).unwrap().into_trainer(Teacher::desk()).unwrap();
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    assert_eq!(back.params.checksum(), t.params.checksum());
}

#[test]
fn checkpoint_records_are_f32_copies() {
    let t = trained(2, 1);
    let ck = decode_checkpoint(&encode_checkpoint(&t).unwrap()).unwrap();
    for (stored, v) in ck.stored_f32.iter().zip(t.params.values()) {
        assert_eq!(stored.shape(), v.shape());
        for (a, b) in stored.data().iter().zip(v.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
    assert_eq!(ck.params.names(), t.params.names());
}

#[test]
fn checkpoint_header_layout() {
    let t = trained(3, 0);
    let bytes = encode_checkpoint(&t).unwrap();
    assert_eq!(&bytes[..4], b"XGFT");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, t.params.len());
    let first = &t.params.names()[0];
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize, first.len());
    assert_eq!(&bytes[16..16 + first.len()], first.as_bytes());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let t = trained(4, 1);
    let good = encode_checkpoint(&t).unwrap();
    let mut bad = good.clone();
    bad[0] = b'Y';
    let err = decode_checkpoint(&bad).unwrap_err();
    assert!(matches!(&err, Error::Checkpoint(m) if m.contains("magic")), "{err}");
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
    assert!(matches!(decode_checkpoint(&good[..good.len() - 10]), Err(Error::Checkpoint(_))));
    assert!(matches!(decode_checkpoint(&good[..2]), Err(Error::Checkpoint(_))));
    assert!(matches!(load_checkpoint(std::path::Path::new("/nonexistent/x.xgft")), Err(Error::Checkpoint(_))));
}

#[test]
fn training_runs_are_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(5);
    let a = run_training(&cfg, &dir.path().join("a"), None, None, |_| {}).unwrap();
    let b = run_training(&cfg, &dir.path().join("b"), None, None, |_| {}).unwrap();
    assert_eq!(a.batches, 6);
    assert_eq!(a.checkpoints.len(), 2);
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(read(&dir.path().join("a/metrics.jsonl")), read(&dir.path().join("b/metrics.jsonl")));
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(read(x), read(y));
    }
    // stop after the first pass, then resume from its checkpoint
    let c = dir.path().join("c");
    let first = run_training(&cfg, &c, Some(3), None, |_| {}).unwrap();
    run_training(&cfg, &c, None, Some(&first.checkpoints[0]), |_| {}).unwrap();
    assert_eq!(read(&c.join("metrics.jsonl")), read(&dir.path().join("a/metrics.jsonl")));
    assert_eq!(read(&c.join("ckpt_000000006.xgft")), read(&a.checkpoints[1]));
}

#[test]
fn resume_rejects_foreign_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(6);
    let s = run_training(&cfg, dir.path(), Some(3), None, |_| {}).unwrap();
    let other = toy_config(7);
    assert!(matches!(
        run_training(&other, dir.path(), None, Some(&s.checkpoints[0]), |_| {}),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn oracle_policy_always_succeeds() {
    let teacher = Teacher::desk();
    for level in [1, 4, 6] {
        let r = evaluate_policy(&mut OraclePolicy, &teacher, &level_config(level), &TaskType::ALL, 60, level as u64).unwrap();
        assert_eq!(r.successes(), 60, "level {level}: {r:?}");
        assert_eq!(r.rate(), 100.0);
    }
}

#[test]
fn turning_never_succeeds() {
    let teacher = Teacher::desk();
    let r = evaluate_policy(&mut TurnPolicy, &teacher, &level_config(1), &[TaskType::Nav], 20, 0).unwrap();
    assert_eq!(r.successes(), 0);
    assert_eq!(r.timeouts, 20);
    assert_eq!(r.mean_steps, 27.0);
}

#[test]
fn report_counts_match_the_request() {
    let teacher = Teacher::desk();
    let mut policies: Vec<Box<dyn Policy>> = vec![Box::new(UniformPolicy), Box::new(OraclePolicy)];
    let rep = run_evaluation(&mut policies, &teacher, &level_config(2), &TaskType::ALL, 37, 1).unwrap();
    assert_eq!(rep.runs.len(), 2);
    for r in &rep.runs {
        assert_eq!(r.sessions, 37);
        assert_eq!(r.tally.values().map(|x| x.0).sum::<usize>(), 37);
    }
    // same seed, same scenes: per-task session counts agree across models
    assert_eq!(
        rep.runs[0].tally.values().map(|x| x.0).collect::<Vec<_>>(),
        rep.runs[1].tally.values().map(|x| x.0).collect::<Vec<_>>()
    );
    assert_eq!(rep.overall.sessions, 74);
    for t in rep.tasks.iter().chain([&rep.overall]) {
        assert!((0.0..=100.0).contains(&t.mean));
    }
    let o = &rep.runs[1];
    assert_eq!(o.rate(), 100.0);
    let u = rep.runs[0].rate();
    assert_abs_diff(rep.overall.mean, (u + 100.0) / 2.0);
    assert_abs_diff(rep.overall.std, (100.0 - u) / 2.0);
    let text = rep.table();
    assert_eq!(text.lines().count(), rep.tasks.len() + 2, "{text}");
    assert!(text.contains(&format!("{:.1} ±", rep.overall.mean)));
    assert!(run_evaluation(&mut [], &teacher, &level_config(1), &TaskType::ALL, 1, 0).is_err());
}

fn assert_abs_diff(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn generalization_suites_use_the_listed_maps() {
    let teacher = Teacher::desk();
    let t = trained(8, 0);
    let before = t.params.checksum();
    let mut policies: Vec<Box<dyn Policy + '_>> =
        vec![Box::new(AgentPolicy::new("m", &t.agent, &t.params, teacher.n_classes()))];
    let reps = run_generalization(&mut policies, &teacher, &[9, 11], &[TaskType::Nav], 2, 0).unwrap();
    assert_eq!((reps[0].map.rows, reps[0].map.n_objects, reps[0].map.n_obstacles), (9, 6, 20));
    assert_eq!((reps[1].map.rows, reps[1].map.n_objects, reps[1].map.n_obstacles), (11, 8, 28));
    assert_eq!(t.params.checksum(), before);
    assert!(run_generalization(&mut policies, &teacher, &[12], &[TaskType::Nav], 2, 0).is_err());
}

#[test]
fn generalization_maps_are_connected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for size in [9, 10, 11] {
        let cfg = crate::teacher::generalization_config(size).unwrap();
        for _ in 0..30 {
            let m = crate::environment::generate_map(&cfg, &mut rng).unwrap();
            assert!(free_cells_connected(&m));
            assert_eq!(m.count_obstacles(), cfg.n_obstacles);
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let teacher = Teacher::desk();
    let t = trained(9, 1);
    let run = || {
        let mut p = AgentPolicy::new("m", &t.agent, &t.params, teacher.n_classes());
        evaluate_policy(&mut p, &teacher, &level_config(1), &TaskType::ALL, 5, 3).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn random_baseline_is_a_fraction() {
    let teacher = Teacher::desk();
    let b = random_baseline(&teacher, &level_config(1), &[TaskType::Nav], 200, 0).unwrap();
    assert!((0.2..0.8).contains(&b), "{b}");
}

fn gft_agent() -> Trainer {
    let cfg = TrainerConfig {
        n_agents: 1,
        n_batch: 1,
        ..TrainerConfig::default()
    };
    Trainer::new(cfg, &AgentConfig::tiny(FusionKind::Gft2), 12).unwrap()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn fingerprints_of_identical_and_permuted_commands_agree() {
    let t = gft_agent();
    let teacher = &t.teacher;
    let refs = reference_commands(teacher, 20, 0).unwrap();
    let pairs = vec![
        (words("go to the apple"), words("go to the apple")),
        (words("go to the apple"), words("the apple to go")),
        (words("go to the apple"), words("go to the tiger")),
    ];
    let out = analyze_transforms(&t.agent, &t.params, teacher, &pairs, &refs).unwrap();
    let d = t.agent.config().channels();
    for p in &out {
        assert_eq!(p.fa.len(), 2);
        for m in p.fa.iter().chain(&p.fb) {
            assert_eq!(m.shape(), &[d, d + 1]);
        }
    }
    assert_eq!(out[0].fa, out[0].fb);
    assert_eq!(out[1].fa, out[1].fb);
    assert_ne!(out[2].fa, out[2].fb);
}

#[test]
fn single_reference_fingerprint_is_zero_and_mean_vanishes() {
    let t = gft_agent();
    let teacher = &t.teacher;
    let cmd = words("please go to the cat");
    let ids = teacher.vocab.encode(&cmd).unwrap();
    let out = analyze_transforms(&t.agent, &t.params, teacher, &[(cmd.clone(), cmd)], &[ids]).unwrap();
    assert!(out[0].fa.iter().all(|m| m.data().iter().all(|v| *v == 0.0)));

    let refs = reference_commands(teacher, 15, 1).unwrap();
    let as_words: Vec<(Vec<String>, Vec<String>)> = refs
        .iter()
        .map(|r| {
            let w: Vec<String> = r.iter().map(|i| teacher.vocab.word(*i).to_string()).collect();
            (w.clone(), w)
        })
        .collect();
    let fps = analyze_transforms(&t.agent, &t.params, teacher, &as_words, &refs).unwrap();
    let (rows, cols) = fps[0].fa[0].dims2();
    for j in 0..2 {
        for k in 0..rows * cols {
            let mean: f64 = fps.iter().map(|p| p.fa[j].data()[k]).sum::<f64>() / fps.len() as f64;
            assert!(mean.abs() <= 1e-10);
        }
    }
}

#[test]
fn non_gft_models_are_rejected() {
    let cfg = TrainerConfig {
        n_agents: 1,
        n_batch: 1,
        ..TrainerConfig::default()
    };
    let t = Trainer::new(cfg, &AgentConfig::tiny(FusionKind::Film), 0).unwrap();
    let p = vec![(words("go to the cat"), words("go to the dog"))];
    assert!(matches!(analyze_transforms(&t.agent, &t.params, &t.teacher, &p, &[vec![0]]), Err(Error::Config(_))));
}

#[test]
fn fingerprints_export_csv_and_ppm() {
    let t = gft_agent();
    let refs = reference_commands(&t.teacher, 5, 2).unwrap();
    let pairs = parse_pairs("# demo\ngo to the cat | go to the dog\n\n").unwrap();
    assert_eq!(pairs.len(), 1);
    assert!(parse_pairs("no separator").is_err());
    let out = analyze_transforms(&t.agent, &t.params, &t.teacher, &pairs, &refs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_fingerprints(dir.path(), &out).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("pair0_a_t1.csv")).unwrap();
    let d = t.agent.config().channels();
    assert_eq!(csv.lines().count(), d);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), d + 1);
    let mut f = std::fs::File::open(dir.path().join("pair0_b_t2.ppm")).unwrap();
    let (w, h, _) = crate::image::read_ppm(&mut f).unwrap();
    assert_eq!((w, h), ((d + 1) * 4, d * 4));
}

fn recorded(seed: u64) -> (Trace, Teacher) {
    let teacher = Teacher::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let session = teacher.new_session(&level_config(3), TaskType::NavNr, &mut rng).unwrap();
    let trace = record_episode(&mut UniformPolicy, &teacher, session, &mut rng).unwrap();
    (trace, teacher)
}

#[test]
fn replay_reproduces_hashes_and_frames() {
    let (trace, _) = recorded(1);
    let mut buf = Vec::new();
    write_trace(&trace, &mut buf).unwrap();
    let back = read_trace(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(back, trace);
    let r = replay_episode(&back).unwrap();
    assert_eq!(r.frames.len(), trace.steps.len() + 1);
    assert_eq!(r.grids.len(), trace.steps.len() + 1);
    let total: f64 = trace.steps.iter().map(|s| s.reward).sum();
    assert_eq!(r.total_reward, total);

    // live re-simulation renders the same bytes
    let mut live = trace.header.session.state.clone();
    assert_eq!(r.frames[0], render(&live, trace.header.n_classes).unwrap());
    for (i, s) in trace.steps.iter().enumerate() {
        live.step(s.action).unwrap();
        assert_eq!(r.frames[i + 1], render(&live, trace.header.n_classes).unwrap());
    }
}

#[test]
fn replay_detects_drift() {
    let (mut trace, _) = recorded(2);
    let k = trace.steps.len() / 2;
    trace.steps[k].hash = "00".repeat(32);
    match replay_episode(&trace) {
        Err(Error::ReplayMismatch { step, .. }) => assert_eq!(step, k + 1),
        other => panic!("expected mismatch, got {other:?}"),
    }
    let (mut trace, _) = recorded(3);
    trace.header.initial_hash = "ff".into();
    assert!(matches!(replay_episode(&trace), Err(Error::ReplayMismatch { step: 0, .. })));
}

#[test]
fn replay_writes_frame_files() {
    let (trace, _) = recorded(4);
    let dir = tempfile::tempdir().unwrap();
    replay_episode(&trace).unwrap().write(dir.path()).unwrap();
    let n = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm"))
        .count();
    assert_eq!(n, trace.steps.len() + 1);
    assert!(dir.path().join("grids.txt").is_file());
}

#[test]
fn recorded_episodes_end_in_a_verdict() {
    let teacher = Teacher::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let session = teacher.new_session(&level_config(1), TaskType::Nav, &mut rng).unwrap();
    let trace = record_episode(&mut OraclePolicy, &teacher, session, &mut rng).unwrap();
    let last = trace.steps.last().unwrap();
    assert!((last.reward - 0.99).abs() < 1e-12);
    let _ = Terminal::Success;
}
