use super::*;
use crate::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (rows, n) = x.dims2();
    let m = w.shape()[0];
    let mut out = vec![0.0; rows * m];
    for i in 0..rows {
        for j in 0..m {
            let mut s = b.data()[j];
            for k in 0..n {
                s += w.at(j, k) * x.at(i, k);
            }
            out[i * m + j] = s;
        }
    }
    out
}

fn naive_conv(x: &Tensor, w: &Tensor, stride: usize) -> Tensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h - k) / stride + 1;
    let wo = (wd - k) / stride + 1;
    let mut out = Tensor::zeros(&[co, ho, wo]);
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = 0.0;
                for ch in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let xv = x.data()[(ch * h + oy * stride + ky) * wd + ox * stride + kx];
                            let wv = w.data()[((o * c + ch) * k + ky) * k + kx];
                            s += xv * wv;
                        }
                    }
                }
                out.data_mut()[(o * ho + oy) * wo + ox] = s;
            }
        }
    }
    out
}

#[test]
fn affine_identity_and_substitution() {
    let mut g = Graph::detached();
    let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap());
    let w = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let b = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let y = g.affine(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());

    let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let w = g.constant(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
    let b = g.constant(Tensor::vector(vec![5.0]));
    let y = g.affine(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[16.0]);
}

#[test]
fn affine_rejects_mismatch() {
    let mut g = Graph::detached();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let w = g.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.affine(x, w, None), Err(Error::Shape { .. })));
}

#[test]
fn affine_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(rows, n, m) in &[(3, 4, 3), (1, 16, 16), (16, 7, 5)] {
        let x = random_tensor(&mut rng, &[rows, n]);
        let w = random_tensor(&mut rng, &[m, n]);
        let b = random_tensor(&mut rng, &[m]);
        let expect = naive_affine(&x, &w, &b);
        let mut g = Graph::detached();
        let (xn, wn, bn) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.affine(xn, wn, Some(bn)).unwrap();
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_unit_filter_sums_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, &[3, 4, 5]);
    let mut g = Graph::detached();
    let xn = g.constant(x.clone());
    let w = g.constant(Tensor::filled(&[1, 3, 1, 1], 1.0));
    let y = g.conv2d(xn, w, None, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 5]);
    for p in 0..20 {
        let s: f64 = (0..3).map(|c| x.data()[c * 20 + p]).sum();
        assert!((g.value(y).data()[p] - s).abs() < 1e-12);
    }
}

#[test]
fn conv_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = [
        (1, 5, 5, 1, 3, 1),
        (2, 9, 9, 3, 3, 2),
        (3, 16, 16, 4, 4, 2),
        (2, 16, 12, 2, 5, 3),
    ];
    for (c, h, w, co, k, s) in cases {
        let x = random_tensor(&mut rng, &[c, h, w]);
        let f = random_tensor(&mut rng, &[co, c, k, k]);
        let expect = naive_conv(&x, &f, s);
        let mut g = Graph::detached();
        let (xn, fnode) = (g.constant(x), g.constant(f));
        let y = g.conv2d(xn, fnode, None, s).unwrap();
        assert_eq!(g.shape(y), expect.shape());
        assert!(g.value(y).max_abs_diff(&expect) < 1e-12);
    }
}

#[test]
fn conv_rejects_oversized_kernel() {
    let mut g = Graph::detached();
    let x = g.constant(Tensor::zeros(&[1, 2, 2]));
    let w = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
    assert!(g.conv2d(x, w, None, 1).is_err());
}

#[test]
fn activation_values() {
    let mut g = Graph::detached();
    let x = g.constant(Tensor::vector(vec![-1.0, 2.0, 0.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 2.0, 0.0]);
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data()[2], 0.5);
}

#[test]
fn tanh_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    for _ in 0..50 {
        let v: f64 = rng.random_range(-3.0..3.0);
        let mut g = Graph::detached();
        let x = g.leaf(Tensor::vector(vec![v]).with_requires_grad(true));
        let y = g.tanh(x);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        let analytic = grads.get(x).unwrap().item();
        let numeric = ((v + h).tanh() - (v - h).tanh()) / (2.0 * h);
        assert!((analytic - numeric).abs() / numeric.abs().max(1e-12) < 1e-6);
    }
}

#[test]
fn softmax_examples() {
    let mut g = Graph::detached();
    let x = g.constant(Tensor::vector(vec![2.0; 4]));
    let y = g.softmax_rows(x).unwrap();
    assert!(g.value(y).data().iter().all(|v| (v - 0.25).abs() < 1e-15));
    let x = g.constant(Tensor::vector(vec![0.0, 3f64.ln()]));
    let y = g.softmax_rows(x).unwrap();
    assert!((g.value(y).data()[0] - 0.25).abs() < 1e-12);
    assert!((g.value(y).data()[1] - 0.75).abs() < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_normalize_and_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..9,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[rows, cols]).map(|v| v * 10.0);
        let shifted = x.map(|v| v + shift);
        let mut g = Graph::detached();
        let (a, b) = (g.constant(x), g.constant(shifted));
        let ya = g.softmax_rows(a).unwrap();
        let yb = g.softmax_rows(b).unwrap();
        for row in g.value(ya).data().chunks(cols) {
            prop_assert!(row.iter().all(|v| *v > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(g.value(ya).max_abs_diff(g.value(yb)) < 1e-12);
    }

    #[test]
    fn affine_agrees_with_loops(rows in 1usize..17, n in 1usize..17, m in 1usize..17, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[rows, n]);
        let w = random_tensor(&mut rng, &[m, n]);
        let b = random_tensor(&mut rng, &[m]);
        let expect = naive_affine(&x, &w, &b);
        let mut g = Graph::detached();
        let (xn, wn, bn) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.affine(xn, wn, Some(bn)).unwrap();
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            prop_assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_simple_losses() {
    let mut params = ParameterSet::new(0);
    let id = params.init_parameter("x", &[5]).unwrap();
    let _unused = params.init_parameter("y", &[3]).unwrap();
    let mut g = Graph::new(&params);
    let x = g.param(id);
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|v| *v == 1.0));

    let mut g = Graph::new(&params);
    let x = g.param(id);
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    let half = g.scale(s, 0.5);
    let grads = g.backward(half).unwrap();
    let mut buf = params.grad_buffer();
    grads.accumulate_into(&mut buf);
    assert_eq!(buf.get(id).data(), params.value(id).data());
    assert!(buf.get(ParamId(1)).data().iter().all(|v| *v == 0.0));
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::detached();
    let x = g.leaf(Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
    assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn grad_check_linear_and_sigmoid() {
    let mut params = ParameterSet::new(1);
    let w = params.init_parameter("w", &[4, 3]).unwrap();
    let report = grad_check(&mut params, 30, 1e-5, 0, |g| {
        let wn = g.param(w);
        let s = g.sum(wn);
        Ok(g.scale(s, 3.0))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-9);

    let mut params = ParameterSet::new(1);
    let w = params.insert("w", Tensor::vector(vec![0.0])).unwrap();
    let mut g = Graph::new(&params);
    let wn = g.param(w);
    let s = g.sigmoid(wn);
    let loss = g.sum(s);
    let analytic = g.backward(loss).unwrap().param(w).unwrap().item();
    assert!((analytic - 0.25).abs() < 1e-15);
    let report = grad_check(&mut params, 5, 1e-5, 0, |g| {
        let wn = g.param(w);
        let s = g.sigmoid(wn);
        Ok(g.sum(s))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-9);
}

/// Every differentiable op against central differences.
#[test]
fn all_ops_pass_gradient_checks() {
    let mut params = ParameterSet::new(11);
    let x = params.init_uniform("x", &[2, 6, 6], 1.0).unwrap();
    let f = params.init_parameter("f", &[3, 2, 3, 3]).unwrap();
    let fb = params.init_uniform("fb", &[3], 0.5).unwrap();
    let w = params.init_parameter("w", &[4, 12]).unwrap();
    let b = params.init_parameter("b", &[4]).unwrap();
    let t = params.init_parameter("t", &[3, 4]).unwrap();
    let s = params.init_parameter("s", &[3]).unwrap();
    let e = params.init_embedding("e", &[5, 4]).unwrap();
    let report = grad_check(&mut params, 100, 1e-5, 9, |g| {
        let x = g.param(x);
        let f = g.param(f);
        let fb = g.param(fb);
        let c = g.conv2d(x, f, Some(fb), 2)?; // [3, 2, 2]
        let c = g.tanh(c);
        let cm = g.reshape(c, &[3, 4])?;
        let aug = g.append_ones_row(cm)?; // [4, 4]
        let t = g.param(t);
        let tm = g.matmul(t, aug)?; // [3, 4]
        let sg = g.sigmoid(tm);
        let s = g.param(s);
        let sc = g.scale_rows(sg, s)?;
        let sc = g.add_row_bias(sc, s)?;
        let flat = g.flatten(sc)?;
        let e = g.param(e);
        let emb = g.embedding_sum(e, &[1, 3, 1])?;
        let cat = g.concat(&[flat, emb])?; // 16
        let part = g.slice(cat, 2, 12)?;
        let w = g.param(w);
        let b = g.param(b);
        let y = g.affine(part, w, Some(b))?;
        let sm = g.softmax_rows(y)?;
        let ls = g.log_softmax_rows(y)?;
        let prod = g.mul(sm, ls)?;
        let ent = g.sum(prod);
        let om = g.one_minus(sm);
        let diff = g.sub(om, sm)?;
        let sq = g.mul(diff, diff)?;
        let tot = g.sum(sq);
        let pk = g.pick(ls, 2)?;
        let l = g.add(ent, tot)?;
        g.add(l, pk)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn replaying_a_graph_is_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(&mut rng, &[3, 10, 10]);
    let f = random_tensor(&mut rng, &[4, 3, 3, 3]);
    let run = || {
        let mut g = Graph::detached();
        let (xn, fnode) = (g.constant(x.clone()), g.constant(f.clone()));
        let y = g.conv2d(xn, fnode, None, 2).unwrap();
        let y = g.relu(y);
        let y = g.flatten(y).unwrap();
        let y = g.softmax_rows(y).unwrap();
        g.value(y).clone()
    };
    let a = run();
    let b = run();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}
