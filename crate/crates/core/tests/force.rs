mod common;

use common::linear_trajectory;
use evtac::force::{evaluate, fit_linear, fit_network, ForceModel, ForceTrajectory};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: [[f64; 2]; 2] = [[0.012, -0.003], [0.004, 0.018]];
const BIAS: [f64; 2] = [0.05, -0.02];

#[test]
fn noise_free_coefficients_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = linear_trajectory(K, BIAS, 300, 0.0, &mut rng);
    let m = fit_linear(&[t]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((m.coef[i][j] - K[i][j]).abs() <= 1e-9 * K[i][j].abs(), "coef {i}{j}: {}", m.coef[i][j]);
        }
        assert!((m.bias[i] - BIAS[i]).abs() <= 1e-9 * BIAS[i].abs());
    }
}

#[test]
fn noisy_residual_matches_half_normal_mean() {
    let sigma = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let train: Vec<ForceTrajectory> = (0..5).map(|_| linear_trajectory(K, BIAS, 400, sigma, &mut rng)).collect();
    let test = linear_trajectory(K, BIAS, 2000, sigma, &mut rng);
    let m = fit_linear(&train).unwrap();
    let e = evaluate(&ForceModel::Linear(m), &test).unwrap();
    let oracle = sigma * (2.0 / std::f64::consts::PI).sqrt();
    for mae in [e.mae.0, e.mae.1] {
        assert!((mae / oracle - 1.0).abs() < 0.2, "mae {mae} vs {oracle}");
    }
}

#[test]
fn shuffled_labels_lose_the_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = linear_trajectory(K, BIAS, 400, 0.01, &mut rng);
    let mut shuffled = t.clone();
    let mut forces: Vec<(f64, f64)> = shuffled.samples.iter().map(|s| s.force).collect();
    forces.shuffle(&mut rng);
    for (s, f) in shuffled.samples.iter_mut().zip(forces) {
        s.force = f;
    }
    let good = evaluate(&ForceModel::Linear(fit_linear(std::slice::from_ref(&t)).unwrap()), &t).unwrap();
    let bad = evaluate(&ForceModel::Linear(fit_linear(&[shuffled]).unwrap()), &t).unwrap();
    assert!(bad.mae.0 > 5.0 * good.mae.0 && bad.mae.1 > 5.0 * good.mae.1);
}

#[test]
fn network_learns_linear_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trajs: Vec<ForceTrajectory> = (0..6).map(|_| linear_trajectory(K, BIAS, 200, 0.0, &mut rng)).collect();
    let test = linear_trajectory(K, BIAS, 200, 0.0, &mut rng);
    let fit = fit_network(&trajs, 50, 9).unwrap();
    assert!(fit.test_loss.last().unwrap() < fit.test_loss.first().unwrap());
    let net = evaluate(&ForceModel::Network(fit.network), &test).unwrap();
    let lin = evaluate(&ForceModel::Linear(fit_linear(&trajs).unwrap()), &test).unwrap();
    let scale = test.samples.iter().map(|s| s.force.0.abs().max(s.force.1.abs())).fold(0.0, f64::max);
    assert!(net.mae.0 <= lin.mae.0 + 0.05 * scale && net.mae.1 <= lin.mae.1 + 0.05 * scale, "{:?} vs {:?}", net.mae, lin.mae);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_forces_scales_the_fit(seed in any::<u64>(), s in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = linear_trajectory(K, BIAS, 60, 0.05, &mut rng);
        let mut scaled = t.clone();
        for x in &mut scaled.samples {
            x.force = (x.force.0 * s, x.force.1 * s);
        }
        let a = fit_linear(&[t]).unwrap();
        let b = fit_linear(&[scaled]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((b.coef[i][j] - s * a.coef[i][j]).abs() <= 1e-9 * (s * a.coef[i][j]).abs().max(1e-6));
            }
            prop_assert!((b.bias[i] - s * a.bias[i]).abs() <= 1e-9 * (s * a.bias[i]).abs().max(1e-6));
        }
    }

    #[test]
    fn fit_reproduces_its_own_predictions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = linear_trajectory(K, BIAS, 50, 0.1, &mut rng);
        let m = fit_linear(std::slice::from_ref(&t)).unwrap();
        let mut refit = t.clone();
        for x in &mut refit.samples {
            x.force = m.predict(x);
        }
        let e = evaluate(&ForceModel::Linear(fit_linear(&[refit.clone()]).unwrap()), &refit).unwrap();
        prop_assert!(e.mae.0 < 1e-9 && e.mae.1 < 1e-9);
    }
}
