use super::*;
use crate::tensor::{grad_check, Activation, Graph, ParamId, ParameterSet, Tensor};
use crate::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rand_cube(rng: &mut ChaCha8Rng, d: usize, n: usize) -> FeatureCube {
    FeatureCube::new(d, n, rand_vec(rng, d * n)).unwrap()
}

fn rand_transform(rng: &mut ChaCha8Rng, d: usize) -> Tensor {
    Tensor::matrix(d, d + 1, rand_vec(rng, d * (d + 1))).unwrap()
}

/// Explicit double loop over rows and locations.
fn loop_gft(c: &FeatureCube, t: &Tensor, act: Activation) -> Vec<f64> {
    let (d, n) = (c.channels(), c.locations());
    let mut out = vec![0.0; d * n];
    for i in 0..d {
        for col in 0..n {
            let mut s = t.at(i, d);
            for k in 0..d {
                s += t.at(i, k) * c.values().at(k, col);
            }
            out[i * n + col] = act.apply(s);
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn widths(e: usize) -> FusionWidths {
    FusionWidths {
        embedding: e,
        hidden: 6,
        projection: 5,
    }
}

fn set(params: &mut ParameterSet, id: ParamId, v: f64) {
    params.value_mut(id).data_mut().fill(v);
}

fn sentence(values: Vec<f64>) -> SentenceEmbedding {
    SentenceEmbedding {
        values: Tensor::vector(values),
        tokens: vec![],
    }
}

#[test]
fn bow_examples() {
    let table = Tensor::matrix(4, 3, (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
    let empty = encode_bow(&[], &table).unwrap();
    assert_eq!(empty.values.data(), &[0.0; 3]);
    let a = encode_bow(&[0, 2, 3], &table).unwrap();
    let b = encode_bow(&[3, 0, 2], &table).unwrap();
    assert_eq!(a.values, b.values);
    let one = encode_bow(&[1], &table).unwrap();
    let two = encode_bow(&[1, 1], &table).unwrap();
    for (x, y) in one.values.data().iter().zip(two.values.data()) {
        assert_eq!(2.0 * x, *y);
    }
    assert!(matches!(
        encode_bow(&[0, 7], &table),
        Err(Error::OutOfVocabulary { token: 7, vocab: 4 })
    ));
}

#[test]
fn gft_generator_shapes_zeros_and_determinism() {
    let mut params = ParameterSet::new(3);
    let full = FusionWidths {
        embedding: 128,
        hidden: 128,
        projection: 512,
    };
    let module = FusionModule::new(&mut params, "fuse", FusionKind::Gft2, 64, 36, full).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = sentence(rand_vec(&mut rng, 128));
    let stack = module.transforms(&params, &l).unwrap();
    assert_eq!(stack.steps(), 2);
    for m in stack.matrices() {
        assert_eq!(m.shape(), &[64, 65]);
        assert_eq!(m.len(), 4160);
    }
    assert_eq!(stack, module.transforms(&params, &l).unwrap());

    // shared first layer: one hidden layer, two output layers
    let names = params.names().join(" ");
    assert_eq!(names.matches("gen_hidden.w").count(), 1);
    assert!(names.contains("gen_t1.w") && names.contains("gen_t2.w"));

    for id in module.param_ids() {
        if params.name(id).ends_with(".b") {
            set(&mut params, id, 0.0);
        }
    }
    let zero = module.transforms(&params, &sentence(vec![0.0; 128])).unwrap();
    assert!(zero.matrices().iter().all(|m| m.data().iter().all(|v| *v == 0.0)));
}

#[test]
fn gft_step_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 4;
    let c = FeatureCube::new(d, 5, rand_vec(&mut rng, 20).iter().map(|v| v.abs()).collect()).unwrap();
    let mut ident = Tensor::zeros(&[d, d + 1]);
    for i in 0..d {
        ident.data_mut()[i * (d + 1) + i] = 1.0;
    }
    assert_eq!(gft_step(&c, &ident, Activation::Relu).unwrap(), c);

    let mut bias_only = Tensor::zeros(&[d, d + 1]);
    let b = [0.5, -1.0, 2.0, 0.0];
    for i in 0..d {
        bias_only.data_mut()[i * (d + 1) + d] = b[i];
    }
    let out = gft_step(&c, &bias_only, Activation::Relu).unwrap();
    for col in 0..5 {
        for i in 0..d {
            assert_eq!(out.values().at(i, col), b[i].max(0.0));
        }
    }

    let c3 = rand_cube(&mut rng, 3, 2);
    let t3 = rand_transform(&mut rng, 3);
    for act in [Activation::Relu, Activation::Tanh, Activation::Identity] {
        let out = gft_step(&c3, &t3, act).unwrap();
        assert!(max_diff(out.values().data(), &loop_gft(&c3, &t3, act)) < 1e-12);
    }
    assert!(matches!(
        gft_step(&c3, &rand_transform(&mut rng, 4), Activation::Relu),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn gft_apply_composes_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = rand_cube(&mut rng, 5, 7);
    let t1 = rand_transform(&mut rng, 5);
    let t2 = rand_transform(&mut rng, 5);
    let one = TransformStack::new(vec![t1.clone()], Activation::Relu).unwrap();
    assert_eq!(gft_apply(&c, &one).unwrap(), gft_step(&c, &t1, Activation::Relu).unwrap());

    let stack = TransformStack::new(vec![t1.clone(), t2.clone()], Activation::Relu).unwrap();
    let first = loop_gft(&c, &t1, Activation::Relu);
    let mid = FeatureCube::new(5, 7, first).unwrap();
    let expect = loop_gft(&mid, &t2, Activation::Relu);
    assert!(max_diff(gft_apply(&c, &stack).unwrap().values().data(), &expect) < 1e-12);

    let pos = FeatureCube::new(5, 7, c.values().data().iter().map(|v| v.abs()).collect()).unwrap();
    let mut ident = Tensor::zeros(&[5, 6]);
    for i in 0..5 {
        ident.data_mut()[i * 6 + i] = 1.0;
    }
    let id2 = TransformStack::new(vec![ident.clone(), ident], Activation::Relu).unwrap();
    assert_eq!(gft_apply(&pos, &id2).unwrap(), pos);
    assert!(TransformStack::new(vec![], Activation::Relu).is_err());
    assert!(TransformStack::new(vec![Tensor::zeros(&[3, 3])], Activation::Relu).is_err());
}

#[test]
fn film_examples_and_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 4;
    let pos = FeatureCube::new(d, 3, rand_vec(&mut rng, 12).iter().map(|v| v.abs()).collect()).unwrap();
    let unit = FilmParams {
        scale: vec![1.0; d],
        shift: vec![0.0; d],
    };
    assert_eq!(film_apply(&pos, &unit, Activation::Relu).unwrap(), pos);
    let kill = FilmParams {
        scale: vec![0.0; d],
        shift: vec![-1.0; d],
    };
    let z = film_apply(&pos, &kill, Activation::Relu).unwrap();
    assert!(z.values().data().iter().all(|v| *v == 0.0));

    let c = rand_cube(&mut rng, d, 6);
    let film = FilmParams {
        scale: rand_vec(&mut rng, d),
        shift: rand_vec(&mut rng, d),
    };
    let mut t = Tensor::zeros(&[d, d + 1]);
    for i in 0..d {
        t.data_mut()[i * (d + 1) + i] = film.scale[i];
        t.data_mut()[i * (d + 1) + d] = film.shift[i];
    }
    let a = film_apply(&c, &film, Activation::Relu).unwrap();
    let b = gft_step(&c, &t, Activation::Relu).unwrap();
    assert!(a.values().max_abs_diff(b.values()) < 1e-12);
}

#[test]
fn film_module_generates_two_d_parameters() {
    let mut params = ParameterSet::new(4);
    let m = FusionModule::new(&mut params, "f", FusionKind::Film, 3, 4, widths(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let l = sentence(rand_vec(&mut rng, 5));
    let fp = m.film_params(&params, &l).unwrap();
    assert_eq!((fp.scale.len(), fp.shift.len()), (3, 3));
    let c = rand_cube(&mut rng, 3, 4);
    let fused = m.fuse(&params, &c, &l).unwrap();
    let direct = film_apply(&c, &fp, Activation::Relu).unwrap();
    assert!(fused.max_abs_diff(direct.values()) < 1e-12);
}

#[test]
fn gated_examples() {
    let mut params = ParameterSet::new(5);
    let m = FusionModule::new(&mut params, "g", FusionKind::Gated, 3, 4, widths(5)).unwrap();
    let ids = m.param_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = rand_cube(&mut rng, 3, 4);
    let l = sentence(rand_vec(&mut rng, 5));

    let gate = m.gate(&params, &l).unwrap();
    let expect: Vec<f64> = (0..3)
        .flat_map(|d| (0..4).map(move |n| (d, n)))
        .map(|(d, n)| gate.values()[d] * c.values().at(d, n))
        .collect();
    assert!(max_diff(m.fuse(&params, &c, &l).unwrap().data(), &expect) < 1e-12);
    assert_eq!(gated_apply(&c, &gate).unwrap().values().data(), m.fuse(&params, &c, &l).unwrap().data());

    set(&mut params, ids[2], 0.0);
    set(&mut params, ids[3], 0.0);
    let half = m.fuse(&params, &c, &l).unwrap();
    let expect: Vec<f64> = c.values().data().iter().map(|v| v / 2.0).collect();
    assert!(max_diff(half.data(), &expect) < 1e-15);

    set(&mut params, ids[3], 60.0);
    assert_eq!(m.fuse(&params, &c, &l).unwrap(), *c.values());
    assert!(GateVector::new(vec![0.2, 1.2]).is_err());
}

#[test]
fn cgated_examples() {
    let mut params = ParameterSet::new(6);
    let m = FusionModule::new(&mut params, "c", FusionKind::Cgated, 3, 4, widths(5)).unwrap();
    let ids = m.param_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = rand_cube(&mut rng, 3, 4);
    let l = sentence(rand_vec(&mut rng, 5));
    // visual projection oracle: relu(W vec(C) + b)
    let (vw, vb) = (params.value(ids[0]).clone(), params.value(ids[1]).clone());
    let visual: Vec<f64> = (0..5)
        .map(|j| {
            let s: f64 = (0..12).map(|k| vw.at(j, k) * c.values().data()[k]).sum::<f64>() + vb.data()[j];
            s.max(0.0)
        })
        .collect();
    let gate = m.gate(&params, &l).unwrap();
    let expect: Vec<f64> = visual.iter().zip(gate.values()).map(|(v, g)| v * g).collect();
    assert!(max_diff(m.fuse(&params, &c, &l).unwrap().data(), &expect) < 1e-12);

    set(&mut params, ids[2], 0.0);
    set(&mut params, ids[3], 60.0);
    assert!(max_diff(m.fuse(&params, &c, &l).unwrap().data(), &visual) < 1e-15);
    set(&mut params, ids[3], -800.0);
    assert!(m.fuse(&params, &c, &l).unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn concat_examples() {
    let mut params = ParameterSet::new(7);
    let full = FusionWidths {
        embedding: 16,
        hidden: 8,
        projection: 512,
    };
    let m = FusionModule::new(&mut params, "cat", FusionKind::Concat, 4, 9, full).unwrap();
    assert_eq!(m.output_len(), 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = rand_cube(&mut rng, 4, 9);
    let l = sentence(rand_vec(&mut rng, 16));
    let a = m.fuse(&params, &c, &l).unwrap();
    assert_eq!(a.len(), 1024);
    let l2 = sentence(rand_vec(&mut rng, 16));
    let b = m.fuse(&params, &c, &l2).unwrap();
    assert_eq!(a.data()[..512], b.data()[..512]);
    assert_ne!(a.data()[512..], b.data()[512..]);

    for id in m.param_ids() {
        if params.name(id).ends_with(".b") {
            set(&mut params, id, 0.0);
        }
    }
    let zero_c = FeatureCube::new(4, 9, vec![0.0; 36]).unwrap();
    let z = m.fuse(&params, &zero_c, &sentence(vec![0.0; 16])).unwrap();
    assert!(z.data().iter().all(|v| *v == 0.0));
}

#[test]
fn concept_examples() {
    let mut params = ParameterSet::new(8);
    let d = 4;
    let m = FusionModule::new(&mut params, "k", FusionKind::Concept, d, 6, widths(99)).unwrap();
    assert_eq!(m.sentence_width(), d);
    let ids = m.param_ids();

    // one-hot columns read off the filter entries
    let mut one_hot = vec![0.0; d * 6];
    for col in 0..d {
        one_hot[col * 6 + col] = 1.0;
    }
    let c = FeatureCube::new(d, 6, one_hot).unwrap();
    let l = sentence(vec![0.3, -0.2, 1.5, 0.0]);
    let out = m.fuse(&params, &c, &l).unwrap();
    assert_eq!(out.shape(), &[2, 6]);
    for col in 0..d {
        assert_eq!(out.at(0, col), l.values.data()[col].max(0.0));
    }

    // sentence orthogonal to every column
    let c = FeatureCube::new(d, 6, (0..24).map(|i| if i < 12 { 1.0 } else { 0.0 }).collect()).unwrap();
    let ortho = sentence(vec![0.0, 0.0, 0.7, -2.0]);
    let out = m.fuse(&params, &c, &ortho).unwrap();
    assert!((0..6).all(|col| out.at(0, col) == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = rand_cube(&mut rng, d, 6);
    let l = sentence(rand_vec(&mut rng, d));
    let out = m.fuse(&params, &c, &l).unwrap();
    let (w, b) = (params.value(ids[0]).clone(), params.value(ids[1]).item());
    for col in 0..6 {
        let att: f64 = (0..d).map(|k| l.values.data()[k] * c.values().at(k, col)).sum();
        let env: f64 = (0..d).map(|k| w.data()[k] * c.values().at(k, col)).sum::<f64>() + b;
        assert!((out.at(0, col) - att.max(0.0)).abs() < 1e-12);
        assert!((out.at(1, col) - env.max(0.0)).abs() < 1e-12);
    }
    assert!(matches!(
        m.fuse(&params, &c, &sentence(vec![0.0; 5])),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn fusions_are_order_invariant_in_tokens() {
    let mut params = ParameterSet::new(9);
    let table = params.init_embedding("words", &[10, 6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = rand_cube(&mut rng, 6, 4);
    for kind in FusionKind::ALL {
        let m = FusionModule::new(&mut params, kind.name(), kind, 6, 4, widths(6)).unwrap();
        let a = encode_bow(&[1, 4, 7, 4, 2], params.value(table)).unwrap();
        let b = encode_bow(&[4, 2, 4, 7, 1], params.value(table)).unwrap();
        assert_eq!(m.fuse(&params, &c, &a).unwrap(), m.fuse(&params, &c, &b).unwrap());
    }
}

#[test]
fn all_fusions_pass_gradient_checks() {
    for kind in FusionKind::ALL {
        let mut params = ParameterSet::new(10);
        let (d, n) = (4, 9);
        let cube = params.init_uniform("cube", &[d, n], 1.0).unwrap();
        let e = if kind == FusionKind::Concept { d } else { 5 };
        let sent = params.init_uniform("sentence", &[e], 1.0).unwrap();
        let m = FusionModule::new(&mut params, "fuse", kind, d, n, widths(e)).unwrap();
        let report = grad_check(&mut params, 100, 1e-5, 3, |g| {
            let c = g.param(cube);
            let l = g.param(sent);
            let y = m.forward(g, c, l)?;
            let y = g.tanh(y);
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{kind}: {report:?}");
    }
}

#[test]
fn gft_equals_one_by_one_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let d = rng.random_range(1..9);
        let n = rng.random_range(1..20);
        let c = rand_cube(&mut rng, d, n);
        let stack = TransformStack::new(vec![rand_transform(&mut rng, d)], Activation::Relu).unwrap();
        let a = gft_step(&c, &stack.matrices()[0], Activation::Relu).unwrap();
        let b = one_by_one_conv(&c, &stack, 0).unwrap();
        assert!(a.values().max_abs_diff(b.values()) < 1e-12);
    }
}

fn check_svd(m: &Tensor, r: &SvdResult) {
    let d = r.singular_values.len();
    let fro = m.frobenius();
    assert!(r.reconstruct().max_abs_diff(m) <= 1e-10 * fro.max(1.0));
    let ortho = |q: &Tensor| {
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let s: f64 = (0..d).map(|k| q.at(k, i) * q.at(k, j)).sum();
                worst = worst.max((s - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    };
    assert!(ortho(&r.u) < 1e-10);
    assert!(ortho(&r.v) < 1e-10);
    assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
    assert!(r.singular_values.iter().all(|s| *s >= 0.0));
}

#[test]
fn svd_examples() {
    let mut eye = Tensor::zeros(&[5, 5]);
    for i in 0..5 {
        eye.data_mut()[i * 6] = 1.0;
    }
    let r = svd_decompose(&eye).unwrap();
    assert!(r.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-15));

    let m = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0]]).unwrap();
    let r = svd_decompose(&m).unwrap();
    assert_eq!(r.singular_values, vec![3.0, 2.0]);
    check_svd(&m, &r);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let big = Tensor::matrix(64, 64, rand_vec(&mut rng, 4096)).unwrap();
    let r = svd_decompose(&big).unwrap();
    check_svd(&big, &r);
    assert!(r.reconstruct().frobenius() > 0.0);

    let mut bad = Tensor::zeros(&[2, 2]);
    bad.data_mut()[1] = f64::NAN;
    assert!(matches!(svd_decompose(&bad), Err(Error::NonFinite(_))));
}

#[test]
fn svd_rank_deficient_and_sign_convention() {
    // rank one
    let m = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let r = svd_decompose(&m).unwrap();
    check_svd(&m, &r);
    assert!(r.singular_values[1] < 1e-12);
    let zero = Tensor::zeros(&[4, 4]);
    check_svd(&zero, &svd_decompose(&zero).unwrap());
    // largest-magnitude entry of each U column is non-negative
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = Tensor::matrix(6, 6, rand_vec(&mut rng, 36)).unwrap();
    let r = svd_decompose(&a).unwrap();
    for k in 0..6 {
        let lead = (0..6).map(|i| r.u.at(i, k)).max_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap();
        assert!(lead >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn svd_invariants_hold(seed in any::<u64>(), size in prop::sample::select(vec![2usize, 3, 8, 16])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Tensor::matrix(size, size, rand_vec(&mut rng, size * size)).unwrap();
        check_svd(&m, &svd_decompose(&m).unwrap());
    }
}

#[test]
fn fingerprint_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let stacks: Vec<TransformStack> = (0..6)
        .map(|_| {
            TransformStack::new(vec![rand_transform(&mut rng, 8), rand_transform(&mut rng, 8)], Activation::Relu)
                .unwrap()
        })
        .collect();
    let single = ReferenceMean::from_stacks(&stacks[..1]).unwrap();
    for fp in transform_fingerprint(&stacks[0], &single, 7).unwrap() {
        assert!(fp.data().iter().all(|v| *v == 0.0));
    }

    let constant = Tensor::filled(&[9, 10], 2.5);
    assert!(smooth_uniform(&constant, 7).data().iter().all(|v| (v - 2.5).abs() < 1e-15));

    let reference = ReferenceMean::from_stacks(&stacks).unwrap();
    let mut sums = [Tensor::zeros(&[8, 9]), Tensor::zeros(&[8, 9])];
    for s in &stacks {
        for (acc, fp) in sums.iter_mut().zip(transform_fingerprint(s, &reference, 7).unwrap()) {
            acc.data_mut().iter_mut().zip(fp.data()).for_each(|(a, b)| *a += b);
        }
    }
    for acc in &sums {
        assert!(acc.data().iter().all(|v| (v / 6.0).abs() <= 1e-10));
    }

    let other = TransformStack::new(vec![rand_transform(&mut rng, 5), rand_transform(&mut rng, 5)], Activation::Relu)
        .unwrap();
    assert!(transform_fingerprint(&other, &reference, 7).is_err());
}

#[test]
fn smoothing_clamps_edges() {
    // impulse in the corner: clamped borders replicate it into the padding
    let mut m = Tensor::zeros(&[8, 8]);
    m.data_mut()[0] = 49.0;
    let s = smooth_uniform(&m, 7);
    // window around (0,0) covers rows/cols -3..3 -> clamped to 0 four times each way
    assert!((s.at(0, 0) - 16.0).abs() < 1e-12);
    assert!((s.at(3, 3) - 1.0).abs() < 1e-12);
    assert_eq!(s.at(4, 4), 0.0);
}

#[test]
fn gated_matches_graph_scale_rows() {
    let mut g = Graph::detached();
    let c = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let s = g.constant(Tensor::vector(vec![0.5, 0.25]));
    let y = g.scale_rows(c, s).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 1.0, 0.75, 1.0]);
}
