#![allow(dead_code)]

use evtac::force::{ForceSample, ForceTrajectory};
use evtac::nn::{mse_step, LayerKind, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const DOTS: usize = 56;

pub const LAYER_NAMES: [&str; 7] = ["dense", "conv2d", "relu", "sigmoid", "dropout", "flatten", "maxpool"];

/// A small network that ends in the layer under test. A parametric layer in
/// front makes the input gradient of parameter-free layers observable.
pub fn probe_network(layer: &str, rng: &mut ChaCha8Rng) -> Network {
    let seed = rng.random();
    let c = rng.random_range(1..=3);
    let h = rng.random_range(2..=6);
    let w = rng.random_range(2..=6);
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=6);
    let pre_conv = LayerKind::Conv2d { in_ch: c, out_ch: c, kh: 1, kw: 1, pad: (0, 0, 0, 0) };
    let (shape, kinds) = match layer {
        "dense" => ((n, 1, 1), vec![LayerKind::Dense { input: n, output: m }, LayerKind::Dense { input: m, output: rng.random_range(1..=4) }]),
        "conv2d" => {
            let kh = rng.random_range(1..=3);
            let kw = rng.random_range(1..=3);
            let pad = (rng.random_range(0..=1), rng.random_range(0..=1), rng.random_range(0..=1), rng.random_range(0..=1));
            let out_ch = rng.random_range(1..=3);
            let kh = kh.min(h + pad.0 + pad.1);
            let kw = kw.min(w + pad.2 + pad.3);
            ((c, h, w), vec![pre_conv, LayerKind::Conv2d { in_ch: c, out_ch, kh, kw, pad }])
        }
        "relu" => ((n, 1, 1), vec![LayerKind::Dense { input: n, output: m }, LayerKind::Relu]),
        "sigmoid" => ((n, 1, 1), vec![LayerKind::Dense { input: n, output: m }, LayerKind::Sigmoid]),
        "dropout" => (
            (n, 1, 1),
            vec![LayerKind::Dense { input: n, output: m + 2 }, LayerKind::Dropout { p: rng.random_range(0.1..0.6) }],
        ),
        "flatten" => ((c, h, w), vec![pre_conv, LayerKind::Flatten, LayerKind::Dense { input: c * h * w, output: m }]),
        "maxpool" => {
            let kh = rng.random_range(1..=h.min(3));
            let kw = rng.random_range(1..=w.min(3));
            ((c, h, w), vec![pre_conv, LayerKind::MaxPool2d { kh, kw }])
        }
        other => panic!("unknown layer {other}"),
    };
    let mut net = Network::new(shape, kinds, seed).unwrap();
    net.set_training(true);
    net
}

fn loss(net: &mut Network, x: &[f64], t: &[f64], seed: u64) -> f64 {
    net.reseed(seed);
    let o = net.forward(x).unwrap();
    0.5 * o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Largest relative error between backprop and central differences over
/// all parameters, for the loss `0.5 * |out - target|^2`.
pub fn gradient_error(net: &mut Network, rng: &mut ChaCha8Rng) -> f64 {
    let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask_seed: u64 = rng.random();
    net.zero_grad();
    net.reseed(mask_seed);
    mse_step(net, &x, &t).unwrap();
    let analytic = net.grads();
    let p0 = net.params();
    let mut worst = 0.0f64;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + GRAD_EPS;
        net.set_params(&p).unwrap();
        let up = loss(net, &x, &t, mask_seed);
        p[i] = p0[i] - GRAD_EPS;
        net.set_params(&p).unwrap();
        let down = loss(net, &x, &t, mask_seed);
        let numeric = (up - down) / (2.0 * GRAD_EPS);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    net.set_params(&p0).unwrap();
    worst
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Samples whose force is an exact affine map of the summed displacement,
/// plus optional Gaussian noise.
pub fn linear_trajectory(k: [[f64; 2]; 2], bias: [f64; 2], n: usize, noise: f64, rng: &mut ChaCha8Rng) -> ForceTrajectory {
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let samples = (0..n)
        .map(|_| {
            let shift = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let disp: Vec<f64> = (0..DOTS)
                .flat_map(|_| [shift.0 + rng.random_range(-0.5..0.5), shift.1 + rng.random_range(-0.5..0.5)])
                .collect();
            let (sx, sy) = disp.chunks_exact(2).fold((0.0, 0.0), |(a, b), d| (a + d[0], b + d[1]));
            let mut f = (k[0][0] * sx + k[0][1] * sy + bias[0], k[1][0] * sx + k[1][1] * sy + bias[1]);
            if noise > 0.0 {
                f.0 += normal.sample(rng);
                f.1 += normal.sample(rng);
            }
            ForceSample { disp, force: f }
        })
        .collect();
    ForceTrajectory { samples }
}
