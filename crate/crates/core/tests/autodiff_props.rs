use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;
use subtype_core::autodiff::{grad_check, DEFAULT_GRAD_CHECK_EPSILON};
use subtype_core::rng::seeded;
use subtype_core::{Graph, NodeId, ParamStore, Tensor};

fn normal_tensor(rows: usize, cols: usize, rng: &mut subtype_core::rng::Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

#[test]
fn two_layer_mlp_passes_grad_check() {
    let mut rng = seeded(21);
    let mut store = ParamStore::new();
    let w1 = store.add("w1", Tensor::glorot(5, 7, &mut rng));
    let b1 = store.add("b1", Tensor::vector((0..7).map(|i| 0.1 * i as f64 - 0.3).collect()));
    let w2 = store.add("w2", Tensor::glorot(7, 3, &mut rng));
    let b2 = store.add("b2", Tensor::vector(vec![0.05, -0.02, 0.1]));
    let mut g = Graph::new();
    let x = g.input("x");
    let t = g.input("t");
    let h = g.linear(x, w1, b1);
    let h = g.sigmoid(h);
    let y = g.linear(h, w2, b2);
    let loss = g.mse(y, t);
    let inputs = HashMap::from([
        ("x".to_string(), normal_tensor(8, 5, &mut rng)),
        ("t".to_string(), normal_tensor(8, 3, &mut rng)),
    ]);
    let err = grad_check(&mut g, &mut store, &inputs, loss, DEFAULT_GRAD_CHECK_EPSILON).unwrap();
    assert!(err < 1e-4, "{err}");
}

/// Elementwise op under test, applied to a hidden activation.
#[derive(Debug, Clone, Copy)]
enum Op {
    Relu,
    Sigmoid,
    AddSelf,
    MulSelf,
    ExpLog,
}

fn build(op: Op, seed: u64) -> (Graph, ParamStore, HashMap<String, Tensor>, NodeId, NodeId) {
    let mut rng = seeded(seed);
    let mut store = ParamStore::new();
    let w1 = store.add("w1", Tensor::glorot(4, 6, &mut rng));
    let b1 = store.add("b1", normal_tensor(1, 6, &mut rng).map(|v| 0.1 * v).reshape1());
    let w2 = store.add("w2", Tensor::glorot(6, 2, &mut rng));
    let b2 = store.add("b2", Tensor::vector(vec![0.0, 0.0]));
    let mut g = Graph::new();
    let x = g.input("x");
    let t = g.input("t");
    let h = g.linear(x, w1, b1);
    let h = match op {
        Op::Relu => g.relu(h),
        Op::Sigmoid => g.sigmoid(h),
        Op::AddSelf => {
            let s = g.sigmoid(h);
            g.add(h, s)
        }
        Op::MulSelf => {
            let s = g.sigmoid(h);
            g.mul(h, s)
        }
        Op::ExpLog => {
            let e = g.exp(h);
            let e = g.add_scalar(e, 1.0);
            g.log(e)
        }
    };
    let y = g.linear(h, w2, b2);
    let loss = g.mse(y, t);
    let inputs = HashMap::from([
        ("x".to_string(), normal_tensor(5, 4, &mut rng)),
        ("t".to_string(), normal_tensor(5, 2, &mut rng)),
    ]);
    (g, store, inputs, loss, y)
}

trait Reshape1 {
    fn reshape1(self) -> Tensor;
}

impl Reshape1 for Tensor {
    fn reshape1(self) -> Tensor {
        Tensor::vector(self.data().to_vec())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn elementwise_ops_pass_grad_check(seed in 0u64..10_000, which in 0usize..5) {
        let op = [Op::Relu, Op::Sigmoid, Op::AddSelf, Op::MulSelf, Op::ExpLog][which];
        let (mut g, mut store, inputs, loss, _) = build(op, seed);
        let err = grad_check(&mut g, &mut store, &inputs, loss, DEFAULT_GRAD_CHECK_EPSILON).unwrap();
        prop_assert!(err < 1e-4, "{:?}: {}", op, err);
    }

    #[test]
    fn kl_term_passes_grad_check(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let wm = store.add("wm", Tensor::glorot(3, 4, &mut rng));
        let bm = store.add("bm", Tensor::vector(vec![0.0; 4]));
        let wl = store.add("wl", Tensor::glorot(3, 4, &mut rng));
        let bl = store.add("bl", Tensor::vector(vec![0.0; 4]));
        let mut g = Graph::new();
        let x = g.input("x");
        let mu = g.linear(x, wm, bm);
        let lv = g.linear(x, wl, bl);
        let kl = g.gaussian_kl(mu, lv, 4);
        let inputs = HashMap::from([("x".to_string(), normal_tensor(6, 3, &mut rng))]);
        let err = grad_check(&mut g, &mut store, &inputs, kl, DEFAULT_GRAD_CHECK_EPSILON).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn backward_is_linear_in_the_loss(seed in 0u64..10_000) {
        let (mut g, store, inputs, loss_a, out) = build(Op::Sigmoid, seed);
        let sq = g.mul(out, out);
        let loss_b = g.mean(sq);
        let both = g.add(loss_a, loss_b);
        g.evaluate(&store, &inputs).unwrap();
        let ga = g.backward(loss_a, &store).unwrap();
        let gb = g.backward(loss_b, &store).unwrap();
        let gs = g.backward(both, &store).unwrap();
        for id in store.ids() {
            for ((a, b), s) in ga.param(id).data().iter().zip(gb.param(id).data()).zip(gs.param(id).data()) {
                prop_assert!((a + b - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_is_bit_deterministic(seed in 0u64..10_000) {
        let (mut g, store, inputs, loss, _) = build(Op::ExpLog, seed);
        g.evaluate(&store, &inputs).unwrap();
        let a = g.value(loss).unwrap().item().to_bits();
        let (mut g2, store2, inputs2, loss2, _) = build(Op::ExpLog, seed);
        g2.evaluate(&store2, &inputs2).unwrap();
        prop_assert_eq!(a, g2.value(loss2).unwrap().item().to_bits());
    }
}

#[test]
fn unreachable_param_gets_zero_gradient() {
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::new(vec![1, 1], vec![3.0]).unwrap());
    let unused = store.add("unused", Tensor::new(vec![1, 1], vec![5.0]).unwrap());
    let mut g = Graph::new();
    let p = g.param(used);
    let sq = g.mul(p, p);
    let loss = g.sum(sq);
    g.evaluate(&store, &HashMap::new()).unwrap();
    let grads = g.backward(loss, &store).unwrap();
    assert_eq!(grads.param(used).data(), &[6.0]);
    assert_eq!(grads.param(unused).data(), &[0.0]);
}
