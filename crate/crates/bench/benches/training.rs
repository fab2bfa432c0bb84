use criterion::{criterion_group, criterion_main, Criterion};
use gftnav_core::a2c::{Trainer, TrainerConfig};
use gftnav_core::agent::{reset_history, Agent, AgentConfig, HistoryNodes};
use gftnav_core::environment::render;
use gftnav_core::grounding::FusionKind;
use gftnav_core::teacher::{level_config, TaskType, Teacher};
use gftnav_core::tensor::{Graph, ParameterSet};

fn agent_step(c: &mut Criterion) {
    let teacher = Teacher::desk();
    let mut r = gftnav_bench::rng(0);
    let s = teacher.new_session(&level_config(2), TaskType::Nav, &mut r).unwrap();
    let obs = render(&s.state, teacher.n_classes()).unwrap();
    for fusion in [FusionKind::Gft1, FusionKind::Film, FusionKind::Concat] {
        let mut params = ParameterSet::new(0);
        let cfg = AgentConfig::desk(fusion);
        let agent = Agent::new(&mut params, &cfg, teacher.vocab.len()).unwrap();
        let h = reset_history(&cfg);
        c.bench_function(&format!("desk forward {}", fusion.name()), |b| {
            b.iter(|| {
                let mut g = Graph::new(&params);
                let hn = HistoryNodes::constant(&mut g, &h);
                agent.forward(&mut g, &obs, &s.command.tokens, &hn).unwrap().value
            })
        });
        c.bench_function(&format!("desk forward+backward {}", fusion.name()), |b| {
            b.iter(|| {
                let mut g = Graph::new(&params);
                let hn = HistoryNodes::constant(&mut g, &h);
                let out = agent.forward(&mut g, &obs, &s.command.tokens, &hn).unwrap();
                g.backward(out.value).unwrap()
            })
        });
    }
}

fn minibatch(c: &mut Criterion) {
    let cfg = TrainerConfig {
        n_agents: 8,
        n_batch: 32,
        learning_rate: 1e-4,
        tasks: vec![TaskType::Nav],
        curriculum: false,
        ..TrainerConfig::default()
    };
    let mut t = Trainer::new(cfg, &AgentConfig::desk(FusionKind::Gft1), 0).unwrap();
    let mut group = c.benchmark_group("a2c");
    group.sample_size(20);
    group.bench_function("desk minibatch 8x4", |b| b.iter(|| t.step().unwrap()));
    group.finish();
}

criterion_group!(benches, agent_step, minibatch);
criterion_main!(benches);
