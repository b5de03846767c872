use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tintegrate_core::nn::{
    deeponet_forward, Activation, DeepOnet, DeepOnetSpec, FourierFeatureSpec, Mlp, MlpSpec, Normalization,
};
use tintegrate_core::tensor::{grad_check, Graph, ParamStore, Tensor};

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[rows, cols], |_| r.gen_range(-1.0..1.0))
}

fn sensors(m: usize) -> Tensor {
    Tensor::matrix(m, 1, (0..m).map(|i| i as f64 / m as f64).collect()).unwrap()
}

fn small_spec(m: usize, p: usize) -> DeepOnetSpec {
    DeepOnetSpec {
        branch: MlpSpec::new(vec![m, 6, p], Activation::Tanh),
        trunk: MlpSpec::new(vec![3, 5, p], Activation::Sine),
        fourier: FourierFeatureSpec::new(1, vec![1.0]),
    }
}

fn set(store: &mut ParamStore, name: &str, value: f64) {
    let id = store.id(name).unwrap();
    store.get_mut(id).value.data_mut().fill(value);
}

#[test]
fn forward_matches_double_loop_oracle() {
    let (m, p, b, n) = (7, 4, 2, 5);
    let spec = small_spec(m, p);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(m), 3, &mut store, "don").unwrap();
    let states = random_tensor(b, m, 1);
    let queries = random_tensor(n, 1, 2);

    let out = net.eval(&store, &states, &queries).unwrap();

    let branch = Mlp::attach(&spec.branch, &store, "don.branch").unwrap();
    let trunk = Mlp::attach(&spec.trunk, &store, "don.trunk").unwrap();
    let br = branch.eval(&store, &states).unwrap();
    let enc = tintegrate_core::nn::fourier_encode(&queries, &spec.fourier).unwrap();
    let tr = trunk.eval(&store, &enc).unwrap();
    for i in 0..b {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..p {
                acc += br.row(i)[k] * tr.row(j)[k];
            }
            assert!((out.row(i)[j] - acc).abs() < 1e-14, "({i},{j}): {} vs {acc}", out.row(i)[j]);
        }
    }
}

#[test]
fn rank_one_constant_field() {
    let spec = small_spec(4, 1);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(4), 0, &mut store, "don").unwrap();
    set(&mut store, "don.branch.layer1.weight", 0.0);
    set(&mut store, "don.branch.layer1.bias", 2.0);
    set(&mut store, "don.trunk.layer1.weight", 0.0);
    set(&mut store, "don.trunk.layer1.bias", 3.0);
    let out = net.eval(&store, &random_tensor(3, 4, 9), &random_tensor(6, 1, 10)).unwrap();
    assert!(out.data().iter().all(|&v| v == 6.0));
}

#[test]
fn zero_branch_gives_zero_field() {
    let spec = small_spec(4, 3);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(4), 0, &mut store, "don").unwrap();
    set(&mut store, "don.branch.layer1.weight", 0.0);
    let out = net.eval(&store, &random_tensor(3, 4, 1), &random_tensor(8, 1, 2)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn sensor_count_mismatch_is_a_shape_error() {
    let spec = small_spec(4, 3);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(4), 0, &mut store, "don").unwrap();
    let err = net.eval(&store, &random_tensor(2, 5, 0), &random_tensor(3, 1, 0)).unwrap_err();
    assert!(err.to_string().contains("shape"), "{err}");
    assert!(DeepOnet::init(&spec, sensors(5), 0, &mut ParamStore::new(), "x").is_err());
}

#[test]
fn output_is_linear_in_branch_output() {
    let spec = small_spec(5, 3);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(5), 4, &mut store, "don").unwrap();
    let (s, q) = (random_tensor(2, 5, 3), random_tensor(4, 1, 4));
    let base = net.eval(&store, &s, &q).unwrap();
    // scaling the last branch layer scales the branch output
    for name in ["don.branch.layer1.weight", "don.branch.layer1.bias"] {
        let id = store.id(name).unwrap();
        let scaled = store.get(id).value.map(|v| -2.5 * v);
        store.get_mut(id).value = scaled;
    }
    let out = net.eval(&store, &s, &q).unwrap();
    for (a, b) in out.data().iter().zip(base.data()) {
        assert!((a + 2.5 * b).abs() < 1e-14);
    }
}

#[test]
fn latent_permutation_invariance() {
    let p = 4;
    let spec = small_spec(5, p);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(5), 8, &mut store, "don").unwrap();
    let (s, q) = (random_tensor(3, 5, 5), random_tensor(4, 1, 6));
    let base = net.eval(&store, &s, &q).unwrap();
    let perm = [2usize, 0, 3, 1];
    for head in ["don.branch.layer1", "don.trunk.layer1"] {
        let wid = store.id(&format!("{head}.weight")).unwrap();
        let w = store.get(wid).value.clone();
        let rows = w.rows();
        let mut pw = w.clone();
        for r in 0..rows {
            for (k, &src) in perm.iter().enumerate() {
                pw.data_mut()[r * p + k] = w.data()[r * p + src];
            }
        }
        store.get_mut(wid).value = pw;
        let bid = store.id(&format!("{head}.bias")).unwrap();
        let b = store.get(bid).value.clone();
        store.get_mut(bid).value = Tensor::from_vec(perm.iter().map(|&src| b.data()[src]).collect());
    }
    let out = net.eval(&store, &s, &q).unwrap();
    for (a, b) in out.data().iter().zip(base.data()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn normalization_wraps_the_inner_product() {
    let spec = small_spec(4, 2);
    let mut store = ParamStore::new();
    let mut net = DeepOnet::init(&spec, sensors(4), 1, &mut store, "don").unwrap();
    let (s, q) = (random_tensor(2, 4, 1), random_tensor(3, 1, 2));
    let shifted = s.map(|v| 3.0 * v + 0.5);
    let base = net.eval(&store, &s, &q).unwrap();
    net.norm = Normalization {
        input_shift: 0.5,
        input_scale: 3.0,
        output_scale: 2.0,
        output_shift: -1.0,
    };
    let out = net.eval(&store, &shifted, &q).unwrap();
    for (a, b) in out.data().iter().zip(base.data()) {
        assert!((a - (2.0 * b - 1.0)).abs() < 1e-13);
    }
}

#[test]
fn precomputed_trunk_matches_bound_trunk() {
    let spec = small_spec(6, 3);
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(6), 2, &mut store, "don").unwrap();
    let (s, q) = (random_tensor(4, 6, 3), random_tensor(7, 1, 4));
    let direct = net.eval(&store, &s, &q).unwrap();
    let trunk = net.trunk_eval(&store, &q).unwrap();
    let mut g = Graph::new();
    let bound = net.bind_with_trunk(&mut g, &store, &trunk).unwrap();
    let sv = g.constant(s);
    let out = bound.apply(&mut g, sv).unwrap();
    assert_eq!(g.value(out), &direct);
}

#[test]
fn deeponet_gradients_pass_finite_difference_check() {
    let spec = DeepOnetSpec {
        branch: MlpSpec::new(vec![5, 4, 4, 3], Activation::Tanh),
        trunk: MlpSpec::new(vec![3, 4, 3], Activation::Sine),
        fourier: FourierFeatureSpec::new(1, vec![1.0]),
    };
    let mut store = ParamStore::new();
    let net = DeepOnet::init(&spec, sensors(5), 11, &mut store, "don").unwrap();
    let states = random_tensor(3, 5, 12);
    let queries = random_tensor(4, 1, 13);
    let weights = random_tensor(3, 4, 14);
    let report = grad_check(&mut store, 1e-6, |g, st| {
        let s = g.constant(states.clone());
        let out = deeponet_forward(&net, st, g, s, &queries)?;
        let w = g.constant(weights.clone());
        let prod = g.mul(out, w)?;
        let sq = g.square(prod);
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_mlps_pass_gradient_check(
        seed in 0u64..1000,
        hidden in 1usize..5,
        act in prop::sample::select(vec![Activation::Tanh, Activation::Sine, Activation::Gelu, Activation::Silu]),
    ) {
        let spec = MlpSpec::new(vec![3, hidden, hidden + 1, 2], act);
        let mut store = ParamStore::new();
        let mlp = Mlp::init(&spec, seed, &mut store, "m").unwrap();
        let x = random_tensor(4, 3, seed + 1);
        let report = grad_check(&mut store, 1e-6, |g, st| {
            let bound = mlp.bind(g, st);
            let xv = g.constant(x.clone());
            let y = bound.forward(g, xv)?;
            let sq = g.square(y);
            Ok(g.mean(sq))
        }).unwrap();
        prop_assert!(report.max_rel_error <= 1e-6, "{:?}", report);
    }
}
