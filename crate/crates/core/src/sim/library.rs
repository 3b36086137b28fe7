//! Built-in scenes.
//!
//! * `vibration-<hz>`: dots in a contact patch tapped at a fixed frequency,
//! * `shear-<k>`: the gel dragged around with a linear force law,
//! * `perturb-slip`: object grasped, lifted, pressed twice, then released,
//! * `distractor-<k>`: textured objects sliding over a resting gel,
//! * `slip-<object>-<k>`: labeled slip trajectories on a gel with a window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::*;
use crate::event::{SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::grasp::physics::{GraspSimObject, GripperParams};
use crate::grasp::transduction::Transduction;

pub const VIBRATION_FREQUENCIES: [f64; 5] = [100.0, 200.0, 300.0, 400.0, 498.0];
pub const SHEAR_GAIN: f64 = 2.0;
pub const SHEAR_SCENES: usize = 5;
pub const DISTRACTOR_SCENES: usize = 10;

pub fn vibration_scene(freq_hz: f64, seed: u64) -> GelScene {
    let mut s = GelScene::new(&format!("vibration-{}", freq_hz.round()), GridSpec::default());
    s.seed = seed;
    s.vibration = Some(Vibration { freq_hz, amplitude_px: 0.6, center: [320.0, 240.0], contact_radius: 60.0 });
    s
}

/// Gel dragged between random waypoints; force follows `SHEAR_GAIN` times the
/// mean dot displacement plus `noise_std` N of Gaussian noise.
pub fn shear_scene(index: usize, duration_s: f64, noise_std: f64, seed: u64) -> GelScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GelScene::new(&format!("shear-{index}"), GridSpec::full());
    s.seed = seed;
    s.noise_rate = 0.0;
    s.field = FieldSpec { center: [320.0, 240.0], sigma: 260.0 };
    s.force = ForceSpec { gain: [[SHEAR_GAIN, 0.0], [0.0, SHEAR_GAIN]], noise_std };
    let speed = 0.06; // px per ms
    let mut t = 0.2;
    let (mut x, mut y) = (0.0f64, 0.0f64);
    s.keyframes.push(Keyframe { t: 0.0, dx: 0.0, dy: 0.0, radial: 0.0 });
    s.keyframes.push(Keyframe { t, dx: 0.0, dy: 0.0, radial: 0.0 });
    while t < duration_s - 0.5 {
        let (nx, ny) = loop {
            let c = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            if (c.0 - x).hypot(c.1 - y) > 1.5 {
                break c;
            }
        };
        t += (nx - x).hypot(ny - y) / speed * 1e-3;
        s.keyframes.push(Keyframe { t, dx: nx, dy: ny, radial: 0.0 });
        t += rng.random_range(0.1..0.3);
        s.keyframes.push(Keyframe { t, dx: nx, dy: ny, radial: 0.0 });
        (x, y) = (nx, ny);
    }
    t += x.hypot(y) / speed * 1e-3;
    s.keyframes.push(Keyframe { t, dx: 0.0, dy: 0.0, radial: 0.0 });
    s
}

/// Textured object sliding across part of a resting gel, entering and leaving
/// the field of view.
pub fn distractor_scene(index: usize, seed: u64) -> GelScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64) << 8);
    let mut s = GelScene::new(&format!("distractor-{index}"), GridSpec::default());
    s.seed = seed;
    let (w, h) = (SENSOR_WIDTH as f64, SENSOR_HEIGHT as f64);
    let across = rng.random_range(130.0..180.0);
    let along = rng.random_range(120.0..200.0);
    let speed = rng.random_range(0.3..0.6) * 1000.0; // px per s
    let horizontal = index % 2 == 0;
    let forward = rng.random_bool(0.5);
    let (from, to, size) = if horizontal {
        let y = rng.random_range(120.0..h - 120.0);
        let (a, b) = (-along / 2.0 - 5.0, w + along / 2.0 + 5.0);
        let (a, b) = if forward { (a, b) } else { (b, a) };
        ([a, y], [b, y], [along, across])
    } else {
        let x = rng.random_range(140.0..w - 140.0);
        let (a, b) = (-along / 2.0 - 5.0, h + along / 2.0 + 5.0);
        let (a, b) = if forward { (a, b) } else { (b, a) };
        ([x, a], [x, b], [across, along])
    };
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let start = 0.05;
    let period = rng.random_range(24.0..36.0);
    s.distractors.push(Distractor {
        start_s: start,
        end_s: start + len / speed,
        from,
        to,
        size,
        period,
        dark_width: rng.random_range(3.0..6.0),
    });
    s
}

pub fn distractor_duration(scene: &GelScene) -> f64 {
    scene.distractors.iter().map(|d| d.end_s).fold(0.0, f64::max) + 0.05
}

/// Object set: the first eight are used for training, the rest are held out.
pub fn objects() -> Vec<GraspSimObject> {
    let table: [(f64, f64, f64, f64, f64); 12] = [
        (150.0, 0.7, 0.85, 2.0, 8.0),
        (250.0, 0.6, 0.80, 2.0, 10.0),
        (350.0, 0.8, 0.75, 2.5, 12.0),
        (200.0, 0.5, 0.85, 1.5, 9.0),
        (450.0, 0.9, 0.80, 3.0, 14.0),
        (300.0, 0.65, 0.70, 2.0, 8.0),
        (120.0, 0.55, 0.80, 1.8, 11.0),
        (400.0, 0.75, 0.85, 2.2, 10.0),
        (220.0, 0.6, 0.80, 2.0, 13.0),
        (380.0, 0.7, 0.75, 2.4, 9.0),
        (180.0, 0.85, 0.85, 1.7, 12.0),
        (320.0, 0.55, 0.80, 2.6, 10.0),
    ];
    table
        .iter()
        .enumerate()
        .map(|(i, &(m, mu, kin, k, tex))| GraspSimObject {
            name: format!("object-{}", i + 1),
            mass_g: m,
            friction: mu,
            kinetic_ratio: kin,
            width_mm: 40.0,
            stiffness: k,
            texture_period_px: tex,
        })
        .collect()
}

pub const TRAINING_OBJECTS: usize = 8;

/// Slip collection: the object is held, then the gripper opens in random
/// increments until the object slips.
pub fn slip_scene(object: &GraspSimObject, index: usize, seed: u64) -> GelScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed ^ ((index as u64) << 20));
    let mut s = GelScene::new(&format!("slip-{}-{index}", object.name), GridSpec::cut());
    s.seed = rng.random();
    let weight = object.mass_g * 1e-3 * crate::grasp::physics::GRAVITY_MM_S2 * 1e-3;
    let n_slip = weight / (2.0 * object.friction);
    let safety = rng.random_range(1.5..2.2);
    let hold = -safety * n_slip / GripperParams::default().force_per_unit;
    let step = rng.random_range(0.15..0.45);
    s.grasp = Some(GraspScript {
        kind: GraspScriptKind::Collection,
        object: ObjectSpec::from(object),
        hold_command: hold,
        hold_s: rng.random_range(0.1..0.2),
        open_step: [0.5 * step, 1.5 * step],
        post_slip_s: 0.1,
        transduction: TransductionSpec::from(&Transduction::default()),
    });
    s
}

pub fn perturb_scene(seed: u64) -> GelScene {
    let objects = objects();
    let object = &objects[1];
    let mut s = GelScene::new("perturb-slip", GridSpec::full());
    s.seed = seed;
    s.grasp = Some(GraspScript {
        kind: GraspScriptKind::Perturb,
        object: ObjectSpec::from(object),
        hold_command: -250.0,
        hold_s: 3.4,
        open_step: [0.3, 0.7],
        post_slip_s: 1.0,
        transduction: TransductionSpec::from(&Transduction::default()),
    });
    s
}

pub const PERTURB_DURATION_S: f64 = 4.5;

pub fn scene_library() -> Vec<GelScene> {
    let mut out: Vec<GelScene> = VIBRATION_FREQUENCIES.iter().map(|&f| vibration_scene(f, f as u64)).collect();
    out.push(vibration_scene(600.0, 600));
    for k in 0..SHEAR_SCENES {
        out.push(shear_scene(k, 10.0, 0.0, 100 + k as u64));
    }
    out.push(perturb_scene(7));
    for k in 0..DISTRACTOR_SCENES {
        out.push(distractor_scene(k, 200 + k as u64));
    }
    for (i, o) in objects().iter().enumerate() {
        out.push(slip_scene(o, 0, 300 + i as u64));
    }
    out
}

pub fn find_scene(name: &str) -> Option<GelScene> {
    scene_library().into_iter().find(|s| s.name == name)
}
