use evtac::features::{FeatureConfig, FeatureFrame};
use evtac::nn::Network;
use evtac::sim::GridSpec;
use evtac::slip::dataset::{shift_labels, LabeledTrajectory};
use evtac::slip::eval::{flag, probabilities, Confusion};
use evtac::slip::model::{build_model, LatticeMap, Rotation, SlipArch, SlipModel, LATTICE_COLS, LATTICE_ROWS};
use evtac::slip::stream::{SlipCounter, SlipStream};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn compose(a: Rotation, b: Rotation, x: &[f64], shape: (usize, usize, usize)) -> Vec<f64> {
    a.apply(&b.apply(x, shape), shape)
}

fn random_frames(n: usize, rng: &mut ChaCha8Rng) -> Vec<FeatureFrame> {
    (0..n)
        .map(|k| {
            let e_c: Vec<u32> = (0..56).map(|_| rng.random_range(0..40)).collect();
            let d_c: Vec<f64> = (0..56).map(|_| rng.random_range(0.0..6.0)).collect();
            FeatureFrame {
                t_end: (k as u64 + 1) * 1000,
                n_e: e_c.iter().sum::<u32>() as usize,
                e_c,
                p_c: vec![(0.0, 0.0); 56],
                d_c,
                image: None,
            }
        })
        .collect()
}

fn trajectory(features: Vec<FeatureFrame>) -> LabeledTrajectory {
    let n = features.len();
    LabeledTrajectory {
        name: "synthetic".into(),
        object: String::new(),
        features,
        labels: (0..n).map(|k| k >= n / 2).collect(),
        window_flow: vec![0.0; n],
        marker_flow: vec![0.0; n],
        truth: None,
        frames: None,
    }
}

#[test]
fn stream_matches_offline_for_every_per_dot_config() {
    let grid = GridSpec::cut();
    let map = LatticeMap::new(&grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for arch in SlipArch::ALL.into_iter().filter(|a| *a != SlipArch::Baseline) {
        let traj = trajectory(random_frames(80, &mut rng));
        let model = SlipModel::new(arch, 10, 0.5, build_model(arch, rng.random()).unwrap()).unwrap();
        let offline = probabilities(&model.network, arch, &traj, &map, traj.len()).unwrap();
        let mut s = SlipStream::new(model, &grid, SlipCounter::new()).unwrap();
        let online: Vec<Option<f64>> = traj.features.iter().map(|f| s.probability(f).unwrap()).collect();
        assert_eq!(online, offline, "{arch}");
    }
}

#[test]
fn stream_counter_counts_flags() {
    let grid = GridSpec::cut();
    let arch = SlipArch::PerDot(FeatureConfig::Hist10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counter = SlipCounter::new();
    let model = SlipModel::new(arch, 0, 0.0, build_model(arch, 3).unwrap()).unwrap();
    let mut s = SlipStream::new(model, &grid, counter.clone()).unwrap();
    let mut last = 0;
    let mut flags = 0;
    for f in random_frames(40, &mut rng) {
        flags += usize::from(s.push(&f).unwrap());
        assert!(counter.get() >= last);
        last = counter.get();
    }
    assert_eq!(counter.get() as usize, flags);
    assert_eq!(flags, 31);
}

#[test]
fn baseline_has_no_stream() {
    let m = SlipModel::new(SlipArch::Baseline, 10, 0.5, build_model(SlipArch::Baseline, 0).unwrap()).unwrap();
    assert!(SlipStream::new(m, &GridSpec::cut(), SlipCounter::new()).is_err());
}

/// The two 1x1 layers of the per-dot encoder as a standalone network.
fn encoder(arch: SlipArch, seed: u64) -> Network {
    let full = build_model(arch, seed).unwrap();
    let kinds = arch.layers()[..4].to_vec();
    let mut enc = Network::new(arch.input_shape(), kinds, 0).unwrap();
    let n = enc.param_count();
    enc.set_params(&full.params()[..n]).unwrap();
    enc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn square_rotations_form_a_cyclic_group(c in 1usize..3, n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = (c, n, n);
        let x: Vec<f64> = (0..c * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        prop_assert_eq!(compose(Rotation::R90, Rotation::R90, &x, shape), Rotation::R180.apply(&x, shape));
        prop_assert_eq!(compose(Rotation::R90, Rotation::R270, &x, shape), x.clone());
        prop_assert_eq!(compose(Rotation::R270, Rotation::R90, &x, shape), x.clone());
        prop_assert_eq!(compose(Rotation::R180, Rotation::R180, &x, shape), x.clone());
        prop_assert_eq!(Rotation::R0.apply(&x, shape), x);
    }

    #[test]
    fn quarter_turn_of_lattice_keeps_values(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = (2, LATTICE_ROWS, LATTICE_COLS);
        let x: Vec<f64> = (0..2 * LATTICE_ROWS * LATTICE_COLS).map(|_| rng.random_range(0.5..1.0)).collect();
        let y = Rotation::R90.apply(&x, shape);
        let plane = LATTICE_ROWS * LATTICE_COLS;
        for ch in 0..2 {
            for r in 0..LATTICE_ROWS {
                for col in 0..LATTICE_COLS {
                    let v = y[ch * plane + r * LATTICE_COLS + col];
                    if col >= LATTICE_ROWS {
                        prop_assert_eq!(v, 0.0);
                    } else {
                        prop_assert_eq!(v, x[ch * plane + (LATTICE_ROWS - 1 - col) * LATTICE_COLS + r]);
                    }
                }
            }
        }
    }

    #[test]
    fn encoder_commutes_with_cell_permutations(seed in any::<u64>(), cfg in 0usize..7) {
        let arch = SlipArch::ALL.into_iter().filter(|a| *a != SlipArch::Baseline).nth(cfg).unwrap();
        let enc = encoder(arch, seed);
        let (c, h, w) = arch.input_shape();
        let plane = h * w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x: Vec<f64> = (0..c * plane).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..plane).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permute = |v: &[f64], ch: usize| -> Vec<f64> {
            (0..ch * plane).map(|i| v[(i / plane) * plane + perm[i % plane]]).collect()
        };
        let a = enc.predict(&permute(&x, c)).unwrap();
        let out_ch = a.len() / plane;
        let b = permute(&enc.predict(&x).unwrap(), out_ch);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn f1_ignores_true_negatives(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..500, extra in 0usize..500) {
        let c = Confusion { tp, fp, fn_, tn };
        prop_assert_eq!(c.f1(), Confusion { tn: tn + extra, ..c }.f1());
        let f = c.f1();
        prop_assert!((0.0..=1.0).contains(&f));
        if tp > 0 {
            let oracle = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
            prop_assert!((f - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_labels_read_ahead(labels in proptest::collection::vec(any::<bool>(), 1..200), d in 0usize..30) {
        let s = shift_labels(&labels, d);
        prop_assert_eq!(s.len(), labels.len());
        for (t, &v) in s.iter().enumerate() {
            prop_assert_eq!(v, labels[(t + d).min(labels.len() - 1)]);
        }
    }

    #[test]
    fn flag_is_strict(p in 0.0f64..1.0, thr in 0.0f64..1.0) {
        prop_assert_eq!(flag(Some(p), thr), p > thr);
        prop_assert!(!flag(None, thr));
    }
}
