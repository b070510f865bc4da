use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Error;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares tape gradients with central differences for every input.
fn grad_check<F>(inputs: Vec<Tensor<f64>>, build: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let h = 1e-5;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("gradient present");
        for j in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.clone();
            minus[k].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            assert!(rel <= 1e-4, "input {k}[{j}]: analytic {a} numeric {numeric}");
        }
    }
}

/// Random projection so every output element contributes to the loss.
fn project(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..tape.value(x).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.weighted_sum(x, &w).unwrap()
}

#[test]
fn conv_impulse_kernel_truncates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&[2, 100], &mut rng);
    let mut k = vec![0.0; 2 * 64];
    k[0] = 1.0;
    k[64] = 1.0;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let kv = tape.leaf(Tensor::new(&[2, 64], k).unwrap(), false);
    let y = tape.depthwise_conv_time(xv, kv).unwrap();
    assert_eq!(tape.shape(y), &[2, 37]);
    for n in 0..2 {
        assert_eq!(&tape.value(y).data()[n * 37..][..37], &x.data()[n * 100..][..37]);
    }
}

#[test]
fn conv_constant_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = rand_tensor(&[1, 64], &mut rng);
    let ksum: f64 = k.data().iter().sum();
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::full(&[1, 80], 2.5), false);
    let kv = tape.leaf(k, false);
    let y = tape.depthwise_conv_time(xv, kv).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 2.5 * ksum).abs() < 1e-12);
    }
}

#[test]
fn conv_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[2, 70], &mut rng);
    let k = rand_tensor(&[2, 64], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let kv = tape.leaf(k.clone(), false);
    let y = tape.depthwise_conv_time(xv, kv).unwrap();
    for n in 0..2 {
        for t in 0..7 {
            let mut s = 0.0;
            for j in 0..64 {
                s += x.data()[n * 70 + t + j] * k.data()[n * 64 + j];
            }
            assert!((tape.value(y).data()[n * 7 + t] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_rejects_short_input() {
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(Tensor::zeros(&[2, 10]), false);
    let kv = tape.leaf(Tensor::zeros(&[2, 64]), false);
    assert!(matches!(tape.depthwise_conv_time(xv, kv), Err(Error::Shape(_))));
}

#[test]
fn pool_monotone_and_window_one() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[1, 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), false);
    let y = tape.max_pool_time(x, 3).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 4.0, 5.0, 6.0]);
    let z = tape.max_pool_time(x, 1).unwrap();
    assert_eq!(tape.value(z).data(), tape.value(x).data());
    assert!(matches!(tape.max_pool_time(x, 7), Err(Error::Shape(_))));
}

#[test]
fn pool_matches_sliding_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&[1, 40], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let y = tape.max_pool_time(xv, 32).unwrap();
    for t in 0..9 {
        let m = x.data()[t..t + 32].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(tape.value(y).data()[t], m);
    }
}

#[test]
fn pool_ties_route_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[1, 4], vec![1.0, 5.0, 5.0, 0.0]).unwrap(), true);
    let y = tape.max_pool_time(x, 3).unwrap();
    let loss = tape.sum(y);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap(), &[0.0, 2.0, 0.0, 0.0]);
}

fn bn_run(x: &Tensor<f64>, mode: Mode, mean: &mut [f64], var: &mut [f64]) -> Vec<f64> {
    let c = x.shape()[1];
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let g = tape.leaf(Tensor::full(&[c], 1.0), false);
    let b = tape.leaf(Tensor::zeros(&[c]), false);
    let y = tape.batch_norm(xv, g, b, mean, var, mode).unwrap();
    tape.value(y).data().to_vec()
}

#[test]
fn bn_train_standardizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&[8, 4], &mut rng);
    let (mut m, mut v) = (vec![0.0; 4], vec![1.0; 4]);
    let y = bn_run(&x, Mode::Train, &mut m, &mut v);
    for c in 0..4 {
        let col: Vec<f64> = (0..8).map(|b| x.data()[b * 4 + c]).collect();
        let mu = col.iter().sum::<f64>() / 8.0;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 8.0;
        let ycol: Vec<f64> = (0..8).map(|b| y[b * 4 + c]).collect();
        for b in 0..8 {
            let oracle = (col[b] - mu) / (var + 1e-3).sqrt();
            assert!((ycol[b] - oracle).abs() < 1e-10);
        }
        let ym = ycol.iter().sum::<f64>() / 8.0;
        let yv = ycol.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / 8.0;
        assert!(ym.abs() < 1e-6);
        // epsilon shrinks the variance slightly below one
        assert!((yv - var / (var + 1e-3)).abs() < 1e-6);
        assert!((m[c] - 0.01 * mu).abs() < 1e-12);
        assert!((v[c] - (0.99 + 0.01 * var)).abs() < 1e-12);
    }
}

#[test]
fn bn_eval_uses_running_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&[1, 3], &mut rng);
    let (mut m, mut v) = (vec![0.0; 3], vec![1.0; 3]);
    let y = bn_run(&x, Mode::Eval, &mut m, &mut v);
    for (a, b) in y.iter().zip(x.data()) {
        assert!((a - b / (1.0f64 + 1e-3).sqrt()).abs() < 1e-12);
    }
    assert_eq!(m, vec![0.0; 3]);
}

#[test]
fn bn_rejects_single_sample_batch() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[1, 3]), false);
    let g = tape.leaf(Tensor::zeros(&[3]), false);
    let b = tape.leaf(Tensor::zeros(&[3]), false);
    let (mut m, mut v) = (vec![0.0; 3], vec![1.0; 3]);
    let r = tape.batch_norm(x, g, b, &mut m, &mut v, Mode::Train);
    assert!(matches!(r, Err(Error::Statistics(_))));
}

#[test]
fn dense_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&[3, 4], &mut rng);
    let w = rand_tensor(&[4, 5], &mut rng);
    let bias = rand_tensor(&[5], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let wv = tape.leaf(w.clone(), false);
    let bv = tape.leaf(bias.clone(), false);
    let h = tape.matmul(xv, wv).unwrap();
    let y = tape.add_bias(h, bv).unwrap();
    for i in 0..3 {
        for j in 0..5 {
            let s: f64 = (0..4).map(|k| x.data()[i * 4 + k] * w.data()[k * 5 + j]).sum();
            assert!((tape.value(y).data()[i * 5 + j] - s - bias.data()[j]).abs() < 1e-12);
        }
    }
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 5] = 1.0;
    }
    let iv = tape.leaf(Tensor::new(&[4, 4], eye).unwrap(), false);
    let z = tape.matmul(xv, iv).unwrap();
    assert_eq!(tape.value(z).data(), x.data());
    let zero = tape.leaf(Tensor::zeros(&[3, 4]), false);
    let h0 = tape.matmul(zero, wv).unwrap();
    let y0 = tape.add_bias(h0, bv).unwrap();
    for row in tape.value(y0).data().chunks(5) {
        assert_eq!(row, bias.data());
    }
    assert!(matches!(tape.matmul(wv, wv), Err(Error::Shape(_))));
}

fn ce(logits: Vec<f64>, classes: usize, labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::new(&[labels.len(), classes], logits).unwrap(), false);
    let loss = tape.softmax_cross_entropy(l, labels).unwrap();
    tape.value(loss).data()[0]
}

#[test]
fn cross_entropy_examples() {
    assert!(ce(vec![1000.0, 0.0, 0.0], 3, &[0]).abs() < 1e-12);
    assert!((ce(vec![0.3; 5], 5, &[2]) - 5f64.ln()).abs() < 1e-12);
    // softmax([ln 3, 0]) = [0.75, 0.25]
    assert!((ce(vec![3f64.ln(), 0.0], 2, &[0]) - 0.287682).abs() < 1e-6);
    let mut tape = Tape::<f64>::new();
    let l = tape.leaf(Tensor::zeros(&[1, 2]), false);
    assert!(matches!(tape.softmax_cross_entropy(l, &[2]), Err(Error::InvalidParameter(_))));
    let l1 = tape.leaf(Tensor::zeros(&[1, 1]), false);
    assert!(tape.softmax_cross_entropy(l1, &[0]).is_err());
}

#[test]
fn cross_entropy_gradient_is_residual_over_batch() {
    let logits = vec![0.5, -1.0, 2.0, 0.0, 0.1, 0.2];
    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::new(&[2, 3], logits.clone()).unwrap(), true);
    let loss = tape.softmax_cross_entropy(l, &[2, 0]).unwrap();
    let g = tape.backward(loss).unwrap();
    let p: Vec<f64> = tape::softmax_rows(&logits, 3);
    let y: [f64; 6] = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    for i in 0..6 {
        assert!((g.get(l).unwrap()[i] - (p[i] - y[i]) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_is_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let logits: Vec<f64> = (0..12).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = tape::softmax_rows(&logits, 4);
        for row in p.chunks(4) {
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn dropout_identity_cases_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[10], 1.0), false);
    assert_eq!(tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap(), x);
    assert!(matches!(tape.dropout(x, 1.0, Mode::Train, &mut rng), Err(Error::InvalidParameter(_))));
    assert!(tape.dropout(x, -0.1, Mode::Train, &mut rng).is_err());
}

#[test]
fn dropout_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[100_000], 1.0), false);
    let y = tape.dropout(x, 0.2, Mode::Train, &mut rng).unwrap();
    let out = tape.value(y).data();
    let survivors = out.iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
    assert!((survivors - 0.8).abs() <= 0.01);
    let mean = out.iter().sum::<f64>() / 1e5;
    assert!((mean - 1.0).abs() <= 0.01);
}

#[test]
fn backward_examples() {
    let x0 = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone(), true);
    let s = tape.sum(x);
    assert_eq!(tape.backward(s).unwrap().get(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(x0, true);
    let sq = tape.square(x);
    let s = tape.sum(sq);
    assert_eq!(tape.backward(s).unwrap().get(x).unwrap(), &[2.0, -4.0, 1.0]);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2]), true);
    assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
}

#[test]
fn gradients_skip_constants() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[2], 1.0), false);
    let w = tape.leaf(Tensor::full(&[2], 3.0), true);
    let y = tape.add_bias(x, w).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    assert!(g.get(x).is_none());
    assert_eq!(g.get(w).unwrap(), &[1.0, 1.0]);
}

#[test]
fn grad_conv_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&[2, 3, 12], &mut rng);
    let k = rand_tensor(&[3, 4], &mut rng);
    grad_check(vec![x, k], |t, v| {
        let c = t.depthwise_conv_time(v[0], v[1]).unwrap();
        let p = t.max_pool_time(c, 3).unwrap();
        project(t, p, 1)
    });
}

#[test]
fn grad_batch_norm_train_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = rand_tensor(&[4, 3, 5], &mut rng);
    let g = rand_tensor(&[3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    for mode in [Mode::Train, Mode::Eval] {
        grad_check(vec![x.clone(), g.clone(), b.clone()], |t, v| {
            let (mut m, mut s) = (vec![0.1; 3], vec![0.7; 3]);
            let y = t.batch_norm(v[0], v[1], v[2], &mut m, &mut s, mode).unwrap();
            project(t, y, 2)
        });
    }
}

#[test]
fn grad_dense_relu_dropout_ce() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_tensor(&[4, 5], &mut rng);
    let w = rand_tensor(&[5, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    grad_check(vec![x, w, b], |t, v| {
        let h = t.matmul(v[0], v[1]).unwrap();
        let h = t.add_bias(h, v[2]).unwrap();
        let h = t.relu(h);
        let mut drng = ChaCha8Rng::seed_from_u64(99);
        let h = t.dropout(h, 0.3, Mode::Train, &mut drng).unwrap();
        t.softmax_cross_entropy(h, &[0, 2, 1, 1]).unwrap()
    });
}

#[test]
fn grad_node_mix_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = rand_tensor(&[2, 3, 4], &mut rng);
    let ops: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
    grad_check(vec![x], move |t, v| {
        let y = t.node_mix(v[0], &ops).unwrap();
        let y = t.reshape(y, &[2, 12]).unwrap();
        let y = t.square(y);
        project(t, y, 3)
    });
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut store = ParamStore::<f32>::new();
        let d = Dense::new(&mut store, "d", 6, 4, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(glorot_uniform(&[5, 6], 6, 6, &mut rng), false);
        let h = d.forward(&mut tape, &bound, x).unwrap();
        let h = tape.dropout(h, 0.2, Mode::Train, &mut rng).unwrap();
        let loss = tape.softmax_cross_entropy(h, &[0, 1, 2, 3, 0]).unwrap();
        tape.value(loss).data()[0].to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn glorot_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let t: Tensor<f64> = glorot_uniform(&[100, 50], 100, 50, &mut rng);
    let limit = (6.0f64 / 150.0).sqrt();
    assert!(t.data().iter().all(|v| v.abs() <= limit));
    let mean = t.data().iter().sum::<f64>() / t.len() as f64;
    assert!(mean.abs() < 0.01);
}

fn adam_fixture(g: f64) -> (ParamStore<f64>, Vec<Var>, Gradients<f64>) {
    let mut store = ParamStore::new();
    store.add("w", Tensor::new(&[2], vec![0.5, -1.0]).unwrap(), true);
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = tape.weighted_sum(bound[0], &[g, g]).unwrap();
    let grads = tape.backward(loss).unwrap();
    (store, bound, grads)
}

#[test]
fn adam_zero_gradient_leaves_weights() {
    let (mut store, bound, grads) = adam_fixture(0.0);
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut store, &bound, &grads).unwrap();
    assert_eq!(store.entries()[0].tensor.data(), &[0.5, -1.0]);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let (mut store, bound, grads) = adam_fixture(0.37);
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut store, &bound, &grads).unwrap();
    let w = store.entries()[0].tensor.data();
    let expected = 1e-3 * 0.37 / (0.37 + 1e-8);
    assert!((0.5 - w[0] - expected).abs() < 1e-15);
    assert!((-1.0 - w[1] - expected).abs() < 1e-15);
}

#[test]
fn adam_two_steps_match_reference() {
    let g = -0.8;
    let (mut store, bound, grads) = adam_fixture(g);
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut store, &bound, &grads).unwrap();
    adam.step(&mut store, &bound, &grads).unwrap();
    let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
    for t in 1..=2 {
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        w -= 1e-3 * mh / (vh.sqrt() + 1e-8);
    }
    assert!((store.entries()[0].tensor.data()[0] - w).abs() < 1e-12);
    assert_eq!(adam.steps(), 2);
}

#[test]
fn adam_aborts_on_non_finite_gradient() {
    let (mut store, bound, grads) = adam_fixture(f64::NAN);
    let before = store.clone();
    let mut adam = Adam::new(AdamConfig::default());
    let r = adam.step(&mut store, &bound, &grads);
    assert!(matches!(r, Err(Error::TrainingAborted(_))));
    assert_eq!(store, before);
}

#[test]
fn param_store_load_checks_shapes() {
    let mut a = ParamStore::<f32>::new();
    a.add("x", Tensor::zeros(&[2]), true);
    let mut b = ParamStore::<f32>::new();
    b.add("x", Tensor::full(&[2], 4.0), true);
    a.load_from(b.entries()).unwrap();
    assert_eq!(a, b);
    let mut c = ParamStore::<f32>::new();
    c.add("x", Tensor::zeros(&[3]), true);
    assert!(a.load_from(c.entries()).is_err());
}
