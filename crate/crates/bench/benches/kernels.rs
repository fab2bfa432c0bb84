use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gftnav_bench::{random_cube, random_matrix, rng};
use gftnav_core::environment::{generate_map, render};
use gftnav_core::grounding::{gft_step, svd_decompose};
use gftnav_core::teacher::{level_config, TaskType, Teacher};
use gftnav_core::tensor::Activation;

fn gft(c: &mut Criterion) {
    let mut r = rng(0);
    for d in [16, 64] {
        let cube = random_cube(d, 36, &mut r);
        let t = random_matrix(d, d + 1, &mut r);
        c.bench_function(&format!("gft_step d={d} n=36"), |b| {
            b.iter(|| gft_step(black_box(&cube), black_box(&t), Activation::Relu).unwrap())
        });
    }
}

fn svd(c: &mut Criterion) {
    let m = random_matrix(64, 64, &mut rng(1));
    c.bench_function("svd 64x64", |b| b.iter(|| svd_decompose(black_box(&m)).unwrap()));
}

fn environment(c: &mut Criterion) {
    let mut r = rng(2);
    let cfg = level_config(6);
    c.bench_function("generate_map 8x8", |b| b.iter(|| generate_map(black_box(&cfg), &mut r).unwrap()));
    let teacher = Teacher::desk();
    let s = teacher.new_session(&cfg, TaskType::NavBw, &mut r).unwrap();
    c.bench_function("render 80x80", |b| b.iter(|| render(black_box(&s.state), teacher.n_classes()).unwrap()));
    c.bench_function("new_session level 6", |b| {
        b.iter(|| teacher.new_session(&cfg, TaskType::NavAvoid, &mut r).unwrap())
    });
}

criterion_group!(benches, gft, svd, environment);
criterion_main!(benches);
