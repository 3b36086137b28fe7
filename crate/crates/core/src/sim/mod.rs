//! Synthetic tactile sensor: a dot grid printed on a gel, observed by an
//! event camera.

pub mod library;
pub mod scene;
pub mod sensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event::{EventFrame, FRAME_PERIOD_US};
use crate::grasp::physics::{GraspPhysics, GraspSimObject, GripperParams};
use crate::grasp::transduction::{ContactSnapshot, GelModel, Transduction, WINDOW_TEXTURE_DEPTH};
pub use scene::{
    tap_waveform, Distractor, FieldSpec, ForceSpec, GelScene, GraspScript, GraspScriptKind, GridSpec, Keyframe,
    ObjectSpec, TransductionSpec, Vibration,
};
pub use sensor::{EventSensor, Rect, SceneState, Texture, SUBSTEPS};

/// Seconds per sensor substep.
pub const SUBSTEP_S: f64 = FRAME_PERIOD_US as f64 * 1e-6 / SUBSTEPS as f64;

/// Ground truth for one readout period, sampled at the end of the period.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTick {
    pub t_end: u64,
    pub centers: Vec<(f64, f64)>,
    /// Shear force (N).
    pub force: (f64, f64),
    pub slip: bool,
    /// Object height (mm) and slide relative to the fingers (mm).
    pub object_z: f64,
    pub rel_slide: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub rest: Vec<(f64, f64)>,
    pub ticks: Vec<TruthTick>,
}

impl GroundTruth {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tick,t_end_us,dot,x,y,fx,fy,slip,object_z,rel_slide\n");
        for (i, t) in self.ticks.iter().enumerate() {
            for (d, c) in t.centers.iter().enumerate() {
                s.push_str(&format!(
                    "{i},{},{d},{:.4},{:.4},{:.5},{:.5},{},{:.4},{:.4}\n",
                    t.t_end,
                    c.0,
                    c.1,
                    t.force.0,
                    t.force.1,
                    u8::from(t.slip),
                    t.object_z,
                    t.rel_slide
                ));
            }
        }
        s
    }

    /// First tick whose slip flag is set.
    pub fn slip_onset(&self) -> Option<usize> {
        self.ticks.iter().position(|t| t.slip)
    }
}

/// Event camera looking at a gel driven by grasp physics.
pub struct GelCamera {
    pub gel: GelModel,
    sensor: EventSensor,
    last: SceneState,
}

impl GelCamera {
    /// The gel starts loaded by `initial` without emitting the events of loading it.
    pub fn new(
        grid: &GridSpec,
        trans: Transduction,
        texture_period: f64,
        threshold: f64,
        noise: f64,
        seed: u64,
        initial: &ContactSnapshot,
    ) -> Self {
        let gel = GelModel::new(trans, grid.rest_positions(), grid.radius, grid.window(), texture_period, seed ^ 0x9e37);
        let state = gel.scene(initial, 0.0);
        let mut sensor = EventSensor::new(&state, threshold, noise, seed);
        sensor.motion_epsilon = 0.01;
        GelCamera { gel, sensor, last: state }
    }

    /// One readout period from one contact snapshot per substep. `t0_s` is the
    /// period start time.
    pub fn step(&mut self, snaps: &[ContactSnapshot], t0_s: f64) -> EventFrame {
        assert_eq!(snaps.len() as u64, SUBSTEPS);
        let mut states = Vec::with_capacity(snaps.len());
        for (k, s) in snaps.iter().enumerate() {
            self.gel.advance(s, SUBSTEP_S);
            states.push(self.gel.scene(s, t0_s + (k + 1) as f64 * SUBSTEP_S));
        }
        let frame = self.sensor.step_states(&states);
        self.last = states.pop().expect("substeps");
        frame
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.last.dots
    }
}

// Timeline of the perturbation script (s).
const CLOSE_START: f64 = 0.3;
const CLOSE_END: f64 = 0.8;
const LIFT_START: f64 = 0.8;
const LIFT_END: f64 = 1.8;
const LIFT_HEIGHT: f64 = 20.0;
const PRESS_TIMES: [f64; 2] = [2.2, 2.8];
const PRESS_FORCE: f64 = 1.2;
const PRESS_HZ: f64 = 6.0;
const PRESS_DECAY: f64 = 0.12;
const CONTROL_PERIOD_S: f64 = 0.002;

struct GraspDriver {
    script: GraspScript,
    physics: GraspPhysics,
    camera: GelCamera,
    command: f64,
    rng: ChaCha8Rng,
    onset: Option<u64>,
    next_control: f64,
}

impl GraspDriver {
    fn new(scene: &GelScene, script: &GraspScript) -> Self {
        let object = GraspSimObject::from(&script.object);
        let params = GripperParams::default();
        let physics = match script.kind {
            GraspScriptKind::Collection => GraspPhysics::holding(params, object.clone(), script.hold_command, 50.0),
            GraspScriptKind::Perturb => GraspPhysics::new(params, object.clone(), object.width_mm + 5.0),
        };
        let trans = Transduction::from(&script.transduction);
        let snap = ContactSnapshot::from(&physics.state);
        let camera = GelCamera::new(
            &scene.grid,
            trans,
            object.texture_period_px,
            scene.threshold,
            scene.noise_rate,
            scene.seed,
            &snap,
        );
        let command = match script.kind {
            GraspScriptKind::Collection => script.hold_command,
            GraspScriptKind::Perturb => 0.0,
        };
        GraspDriver {
            script: script.clone(),
            physics,
            camera,
            command,
            rng: ChaCha8Rng::seed_from_u64(scene.seed.wrapping_mul(31).wrapping_add(7)),
            onset: None,
            next_control: 0.0,
        }
    }

    fn lift_velocity(t: f64) -> f64 {
        if !(LIFT_START..LIFT_END).contains(&t) {
            return 0.0;
        }
        // raised-cosine velocity profile
        let s = (t - LIFT_START) / (LIFT_END - LIFT_START);
        let peak = 2.0 * LIFT_HEIGHT / (LIFT_END - LIFT_START);
        peak * 0.5 * (1.0 - (std::f64::consts::TAU * s).cos())
    }

    fn press_force(t: f64) -> f64 {
        PRESS_TIMES
            .iter()
            .filter(|&&t0| t >= t0)
            .map(|&t0| {
                let dt = t - t0;
                -PRESS_FORCE * (-dt / PRESS_DECAY).exp() * (std::f64::consts::TAU * PRESS_HZ * dt).sin().abs()
            })
            .sum()
    }

    fn control(&mut self, t: f64) {
        if t + 1e-12 < self.next_control {
            return;
        }
        self.next_control += CONTROL_PERIOD_S;
        let s = &self.script;
        if t >= s.hold_s {
            let step = if s.open_step[1] > s.open_step[0] {
                self.rng.random_range(s.open_step[0]..s.open_step[1])
            } else {
                s.open_step[0]
            };
            self.command += step;
        } else if s.kind == GraspScriptKind::Perturb {
            let a = ((t - CLOSE_START) / (CLOSE_END - CLOSE_START)).clamp(0.0, 1.0);
            self.command = s.hold_command * a;
        }
    }

    fn step(&mut self, tick: u64) -> (EventFrame, TruthTick) {
        let t0 = tick as f64 * FRAME_PERIOD_US as f64 * 1e-6;
        let mut snaps = Vec::with_capacity(SUBSTEPS as usize);
        for k in 0..SUBSTEPS {
            let t = t0 + k as f64 * SUBSTEP_S;
            self.control(t);
            let (v, f) = match self.script.kind {
                GraspScriptKind::Collection => (0.0, 0.0),
                GraspScriptKind::Perturb => (Self::lift_velocity(t), Self::press_force(t)),
            };
            self.physics.step(self.command, v, f, SUBSTEP_S);
            snaps.push(ContactSnapshot::from(&self.physics.state));
        }
        let frame = self.camera.step(&snaps, t0);
        let st = &self.physics.state;
        if st.slipping && self.onset.is_none() && t0 >= self.script.hold_s {
            self.onset = Some(tick);
        }
        let truth = TruthTick {
            t_end: frame.t_end,
            centers: self.camera.centers().to_vec(),
            force: (0.0, st.friction),
            slip: st.slipping,
            object_z: st.z_o,
            rel_slide: st.rel_slide,
        };
        (frame, truth)
    }

    fn finished(&self, tick: u64) -> bool {
        match self.onset {
            Some(o) => (tick - o) as f64 * 1e-3 >= self.script.post_slip_s,
            None => self.physics.state.dropped,
        }
    }
}

/// Streaming simulator: one readout period per call to [`Simulator::step`].
pub struct Simulator {
    scene: GelScene,
    rest: Vec<(f64, f64)>,
    sensor: Option<EventSensor>,
    grasp: Option<Box<GraspDriver>>,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    window: Option<Rect>,
    vib_mask: Vec<bool>,
    tick: u64,
}

impl Simulator {
    pub fn new(scene: &GelScene) -> Result<Self> {
        scene.validate()?;
        let rest = scene.grid.rest_positions();
        let noise = if scene.force.noise_std > 0.0 {
            Some(Normal::new(0.0, scene.force.noise_std).map_err(|e| Error::InvalidScene(e.to_string()))?)
        } else {
            None
        };
        let vib_mask = rest
            .iter()
            .map(|&(x, y)| match &scene.vibration {
                Some(v) => (x - v.center[0]).hypot(y - v.center[1]) < v.contact_radius,
                None => false,
            })
            .collect();
        let mut sim = Simulator {
            scene: scene.clone(),
            rest,
            sensor: None,
            grasp: None,
            noise,
            rng: ChaCha8Rng::seed_from_u64(scene.seed ^ 0xf0f0),
            window: scene.grid.window(),
            vib_mask,
            tick: 0,
        };
        match &scene.grasp {
            Some(g) => sim.grasp = Some(Box::new(GraspDriver::new(scene, g))),
            None => {
                let s0 = sim.state_at(0);
                sim.sensor = Some(EventSensor::new(&s0, scene.threshold, scene.noise_rate, scene.seed));
            }
        }
        Ok(sim)
    }

    pub fn scene(&self) -> &GelScene {
        &self.scene
    }

    pub fn rest_positions(&self) -> &[(f64, f64)] {
        &self.rest
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// True once a scripted grasp has run its course.
    pub fn finished(&self) -> bool {
        self.grasp.as_ref().is_some_and(|g| g.finished(self.tick))
    }

    /// Tick at which the scripted object first slipped.
    pub fn slip_onset(&self) -> Option<u64> {
        self.grasp.as_ref().and_then(|g| g.onset)
    }

    /// True dot centers at absolute time `t_us` for kinematic scenes.
    pub fn centers_at(&self, t_us: u64) -> Vec<(f64, f64)> {
        let t = t_us as f64 * 1e-6;
        let vib = self.scene.vibration.as_ref().map(|v| v.amplitude_px * tap_waveform(std::f64::consts::TAU * v.freq_hz * t));
        self.rest
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let (dx, dy) = self.scene.field_offset(p, t);
                let vx = if self.vib_mask[k] { vib.unwrap_or(0.0) } else { 0.0 };
                (p.0 + dx + vx, p.1 + dy)
            })
            .collect()
    }

    fn state_at(&self, t_us: u64) -> SceneState {
        let t = t_us as f64 * 1e-6;
        let mut textures = Vec::new();
        if let Some(w) = self.window {
            textures.push(Texture {
                region: w,
                period: 10.0,
                dark_width: 5.0,
                vertical_motion: true,
                offset: 0.0,
                depth: WINDOW_TEXTURE_DEPTH,
            });
        }
        for d in &self.scene.distractors {
            if t < d.start_s || t > d.end_s {
                continue;
            }
            let s = (t - d.start_s) / (d.end_s - d.start_s);
            let cx = d.from[0] + s * (d.to[0] - d.from[0]);
            let cy = d.from[1] + s * (d.to[1] - d.from[1]);
            let vertical = (d.to[1] - d.from[1]).abs() > (d.to[0] - d.from[0]).abs();
            textures.push(Texture {
                region: Rect { x0: cx - d.size[0] / 2.0, y0: cy - d.size[1] / 2.0, x1: cx + d.size[0] / 2.0, y1: cy + d.size[1] / 2.0 },
                period: d.period,
                dark_width: d.dark_width,
                vertical_motion: vertical,
                offset: if vertical { cy } else { cx },
                depth: 1.0,
            });
        }
        SceneState { dots: self.centers_at(t_us), radius: self.scene.grid.radius, textures }
    }

    fn mean_displacement(&self, centers: &[(f64, f64)]) -> (f64, f64) {
        let n = centers.len().max(1) as f64;
        let (sx, sy) = centers
            .iter()
            .zip(&self.rest)
            .fold((0.0, 0.0), |(ax, ay), (c, r)| (ax + c.0 - r.0, ay + c.1 - r.1));
        (sx / n, sy / n)
    }

    pub fn step(&mut self) -> (EventFrame, TruthTick) {
        let tick = self.tick;
        self.tick += 1;
        if let Some(g) = self.grasp.as_mut() {
            return g.step(tick);
        }
        let sensor = self.sensor.take().expect("kinematic sensor");
        let mut sensor = sensor;
        let frame = sensor.step(|t| self.state_at(t));
        self.sensor = Some(sensor);
        let centers = self.centers_at(frame.t_end);
        let d = self.mean_displacement(&centers);
        let k = &self.scene.force.gain;
        let mut force = (k[0][0] * d.0 + k[0][1] * d.1, k[1][0] * d.0 + k[1][1] * d.1);
        if let Some(n) = &self.noise {
            force.0 += n.sample(&mut self.rng);
            force.1 += n.sample(&mut self.rng);
        }
        let truth = TruthTick { t_end: frame.t_end, centers, force, slip: false, object_z: 0.0, rel_slide: 0.0 };
        (frame, truth)
    }
}

/// Runs `scene` for `duration_s` seconds (or until its grasp script ends).
pub fn simulate(scene: &GelScene, duration_s: f64) -> Result<(Vec<EventFrame>, GroundTruth)> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidInput("duration must be positive".into()));
    }
    let mut sim = Simulator::new(scene)?;
    let ticks = (duration_s * 1000.0).round() as u64;
    let mut frames = Vec::with_capacity(ticks as usize);
    let mut truth = GroundTruth { rest: sim.rest_positions().to_vec(), ticks: Vec::with_capacity(ticks as usize) };
    while sim.tick() < ticks && !sim.finished() {
        let (f, t) = sim.step();
        frames.push(f);
        truth.ticks.push(t);
    }
    Ok((frames, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_scene_without_noise_is_silent() {
        let mut s = GelScene::new("still", GridSpec::default());
        s.noise_rate = 0.0;
        let (frames, truth) = simulate(&s, 0.1).unwrap();
        assert_eq!(frames.len(), 100);
        assert_eq!(truth.ticks.len(), 100);
        assert!(frames.iter().all(|f| f.events.is_empty()));
    }

    #[test]
    fn zero_displacement_gives_zero_force() {
        let mut s = GelScene::new("b", GridSpec::full());
        s.noise_rate = 0.0;
        s.force.gain = [[2.0, 0.0], [0.0, 3.0]];
        let (_, truth) = simulate(&s, 0.01).unwrap();
        assert!(truth.ticks.iter().all(|t| t.force == (0.0, 0.0)));
    }

    #[test]
    fn uniform_shift_moves_force_by_gain() {
        let mut s = GelScene::new("b", GridSpec::full());
        s.noise_rate = 0.0;
        s.force.gain = [[2.0, 0.0], [0.0, 3.0]];
        s.keyframes = vec![Keyframe { t: 0.0, dx: 0.0, dy: 0.0, radial: 0.0 }, Keyframe { t: 0.02, dx: 1.0, dy: -1.0, radial: 0.0 }];
        let (frames, truth) = simulate(&s, 0.03).unwrap();
        let last = truth.ticks.last().unwrap();
        assert!((last.force.0 - 2.0).abs() < 1e-9 && (last.force.1 + 3.0).abs() < 1e-9);
        assert!(frames.iter().map(|f| f.events.len()).sum::<usize>() > 1000);
    }

    #[test]
    fn collection_script_slips_and_stops() {
        let obj = GraspSimObject::new("o", 200.0, 0.6);
        let mut s = GelScene::new("e", GridSpec::cut());
        s.grasp = Some(GraspScript {
            kind: GraspScriptKind::Collection,
            object: ObjectSpec::from(&obj),
            hold_command: -200.0,
            hold_s: 0.05,
            open_step: [1.0, 2.0],
            post_slip_s: 0.03,
            transduction: TransductionSpec::from(&Transduction::default()),
        });
        let mut sim = Simulator::new(&s).unwrap();
        let mut n = 0;
        while !sim.finished() && n < 3000 {
            sim.step();
            n += 1;
        }
        let onset = sim.slip_onset().expect("object slipped");
        assert_eq!(n as u64, onset + 30);
    }
}
