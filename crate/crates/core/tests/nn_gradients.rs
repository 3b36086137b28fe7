mod common;

use common::{gradient_error, probe_network, relative_error, GRAD_EPS, GRAD_TOL, LAYER_NAMES};
use evtac::nn::{bce, bce_step, LayerKind, Network};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_layer_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for layer in LAYER_NAMES {
        for shape in 0..20 {
            let mut net = probe_network(layer, &mut rng);
            let err = gradient_error(&mut net, &mut rng);
            assert!(err < GRAD_TOL, "{layer} shape {shape} ({}): relative error {err:e}", net.spec());
        }
    }
}

#[test]
fn bce_gradient_through_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(1..6);
        let mut net = Network::new(
            (n, 1, 1),
            vec![LayerKind::Dense { input: n, output: 3 }, LayerKind::Relu, LayerKind::Dense { input: 3, output: 1 }, LayerKind::Sigmoid],
            rng.random(),
        )
        .unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = f64::from(rng.random_bool(0.5));
        net.zero_grad();
        bce_step(&mut net, &x, y).unwrap();
        let g = net.grads();
        let p0 = net.params();
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] += GRAD_EPS;
            net.set_params(&p).unwrap();
            let up = bce(net.predict(&x).unwrap()[0], y);
            p[i] -= 2.0 * GRAD_EPS;
            net.set_params(&p).unwrap();
            let down = bce(net.predict(&x).unwrap()[0], y);
            let numeric = (up - down) / (2.0 * GRAD_EPS);
            assert!(relative_error(g[i], numeric) < GRAD_TOL, "param {i}: {} vs {numeric}", g[i]);
        }
        net.set_params(&p0).unwrap();
    }
}

#[test]
fn accumulated_batch_is_one_summed_step() {
    // a bias-free linear unit on a quadratic loss: two sequential steps
    // differ from one step along the summed gradient
    let mut net = Network::new((1, 1, 1), vec![LayerKind::Dense { input: 1, output: 1 }], 0).unwrap();
    net.set_params(&[1.0, 0.0]).unwrap();
    let data = [(2.0, 0.0), (1.0, 3.0)];
    let lr = 0.1;

    let mut batched = net.clone();
    batched.zero_grad();
    for (x, t) in data {
        evtac::nn::mse_step(&mut batched, &[x], &[t]).unwrap();
    }
    batched.sgd_step(lr).unwrap();
    // d/dw 0.5 (w x - t)^2 = (w x - t) x, same for the bias with x = 1
    let (gw, gb) = data.iter().fold((0.0, 0.0), |(a, b), &(x, t)| (a + (x - t) * x, b + (x - t)));
    let expect = [1.0 - lr * gw, -lr * gb];
    let got = batched.params();
    assert!((got[0] - expect[0]).abs() < 1e-12 && (got[1] - expect[1]).abs() < 1e-12);

    let mut sequential = net.clone();
    for (x, t) in data {
        sequential.zero_grad();
        evtac::nn::mse_step(&mut sequential, &[x], &[t]).unwrap();
        sequential.sgd_step(lr).unwrap();
    }
    assert!((sequential.params()[0] - got[0]).abs() > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_stack_gradients(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(
            (n, 1, 1),
            vec![LayerKind::Dense { input: n, output: m }, LayerKind::Sigmoid, LayerKind::Dense { input: m, output: 2 }],
            seed,
        ).unwrap();
        prop_assert!(gradient_error(&mut net, &mut rng) < GRAD_TOL);
    }

    #[test]
    fn predict_is_pure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = probe_network("conv2d", &mut rng);
        let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        prop_assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }
}
