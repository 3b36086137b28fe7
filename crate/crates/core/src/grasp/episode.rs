//! Approach, lift and balance episodes of the slip-driven controller on the
//! 1-D physics, with an oracle or a learned slip detector.

use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::control::{GripperState, Phase, CONTACT_TICKS, DEFAULT_KP};
use super::physics::{GraspPhysics, GraspSimObject, GripperParams, GRAVITY_MM_S2};
use super::transduction::{ContactSnapshot, Transduction};
use crate::error::{Error, Result};
use crate::sim::scene::{DEFAULT_NOISE_RATE, DEFAULT_THRESHOLD};
use crate::sim::{GelCamera, GridSpec, SUBSTEPS, SUBSTEP_S};
use crate::slip::model::SlipModel;
use crate::slip::stream::{SlipCounter, SlipDetector};
use crate::tracker::TrackerConfig;

/// Detector ticks per controller tick (1 kHz detector, 500 Hz controller).
pub const DETECTOR_PER_CONTROL: usize = 2;
pub const LIFT_HEIGHT_MM: f64 = 100.0;
pub const LIFT_RAMP_S: f64 = 1.0;
/// A lift counts when the object ends at least this fraction of the lift
/// height above the table.
pub const HEIGHT_FRACTION: f64 = 0.8;
pub const MAX_APPROACH_S: f64 = 2.0;
/// A single detector tick slower than this aborts the episode.
pub const STALL_LIMIT: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub enum Detector {
    /// Slip flag straight from the physics.
    Oracle,
    /// The learned model on simulated gel events.
    Model(Box<SlipModel>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub grams: f64,
    /// Seconds into the balance phase.
    pub at_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub lift_s: f64,
    pub balance_s: f64,
    pub k_p: f64,
    /// Keep `u_ff` at the approach value after contact.
    pub open_loop: bool,
    pub perturbation: Option<Perturbation>,
    pub seed: u64,
    pub keep_log: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            lift_s: 10.0,
            balance_s: 20.0,
            k_p: DEFAULT_KP,
            open_loop: false,
            perturbation: None,
            seed: 0,
            keep_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub tick: usize,
    pub x_g: f64,
    pub x_ref: Option<f64>,
    pub u_ff: f64,
    pub u_c: f64,
    pub slip: bool,
    pub travel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub object: String,
    pub lift_success: bool,
    pub balance_success: bool,
    pub contact_width: f64,
    pub lift_width_change: f64,
    pub balance_width_change: f64,
    /// Slide of the object against the fingers over the episode (mm).
    pub object_travel: f64,
    pub lift_peak_effort: f64,
    pub balance_mean_effort: f64,
    /// Controller ticks that saw a slip.
    pub slip_ticks: usize,
    pub balance_slip_ticks: usize,
    pub latency_p99_us: Option<f64>,
    pub log: Vec<LogRow>,
}

impl EpisodeResult {
    pub fn success(&self) -> bool {
        self.lift_success && self.balance_success
    }

    /// Net opening change from contact to the end of the episode.
    pub fn total_width_change(&self) -> f64 {
        self.lift_width_change + self.balance_width_change
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("tick,x_g,x_ref,u_ff,u_c,slip,object_travel\n");
        for r in &self.log {
            let xr = r.x_ref.map_or(String::new(), |v| format!("{v:.5}"));
            let _ = writeln!(s, "{},{:.5},{xr},{:.4},{:.4},{},{:.5}", r.tick, r.x_g, r.u_ff, r.u_c, u8::from(r.slip), r.travel);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "object {}\nlift success {}\nbalance success {}\nwidth change lift {:.3} mm balance {:.3} mm total {:.3} mm\nobject travel {:.3} mm\neffort lift peak {:.2} balance mean {:.2}\nslip ticks {}\n",
            self.object,
            self.lift_success,
            self.balance_success,
            self.lift_width_change,
            self.balance_width_change,
            self.total_width_change(),
            self.object_travel,
            self.lift_peak_effort,
            self.balance_mean_effort,
            self.slip_ticks
        )
    }
}

/// Vertical gripper velocity: raised-cosine rise over `LIFT_RAMP_S`.
pub fn lift_velocity(t: f64) -> f64 {
    if !(0.0..LIFT_RAMP_S).contains(&t) {
        return 0.0;
    }
    let peak = 2.0 * LIFT_HEIGHT_MM / LIFT_RAMP_S;
    peak * 0.5 * (1.0 - (std::f64::consts::TAU * t / LIFT_RAMP_S).cos())
}

struct Sensing {
    camera: GelCamera,
    detector: SlipDetector,
}

pub fn run_episode(object: &GraspSimObject, detector: &Detector, cfg: &EpisodeConfig) -> Result<EpisodeResult> {
    object.validate()?;
    if cfg.k_p <= 0.0 {
        return Err(Error::InvalidInput("K_p must be positive".into()));
    }
    let params = GripperParams::default();
    let mut phys = GraspPhysics::new(params, object.clone(), object.width_mm + 5.0);
    let mut ctl = GripperState::new(phys.state.x_g, cfg.k_p);
    let counter = SlipCounter::new();
    let mut seen = counter.get();
    let mut u_c = ctl.approach_step(phys.state.x_g);
    let mut sensing: Option<Sensing> = None;
    let mut res = EpisodeResult {
        object: object.name.clone(),
        lift_success: false,
        balance_success: false,
        contact_width: 0.0,
        lift_width_change: 0.0,
        balance_width_change: 0.0,
        object_travel: 0.0,
        lift_peak_effort: 0.0,
        balance_mean_effort: 0.0,
        slip_ticks: 0,
        balance_slip_ticks: 0,
        latency_p99_us: None,
        log: Vec::new(),
    };
    let mut contact_run = 0usize;
    let mut phase_start = 0usize;
    let mut balance_effort = (0.0, 0usize);
    let mut perturbed = false;
    let mut tick = 0usize;
    let mut lift_end_width = 0.0;
    loop {
        let phase_t = (tick - phase_start) as f64 * 1e-3;
        let v_g = if ctl.phase == Phase::Lift { lift_velocity(phase_t) } else { 0.0 };
        if ctl.phase == Phase::Balance && !perturbed {
            if let Some(p) = cfg.perturbation.filter(|p| phase_t >= p.at_s) {
                phys.add_mass(p.grams);
                perturbed = true;
            }
        }
        // one detector tick of physics
        let mut snaps = Vec::with_capacity(SUBSTEPS as usize);
        let mut slipped = false;
        for _ in 0..SUBSTEPS {
            phys.step(u_c, v_g, 0.0, SUBSTEP_S);
            slipped |= phys.state.slipping;
            snaps.push(ContactSnapshot::from(&phys.state));
        }
        match (detector, sensing.as_mut()) {
            (Detector::Oracle, _) => {
                if slipped {
                    counter.increment();
                }
            }
            (Detector::Model(_), Some(s)) => {
                let frame = s.camera.step(&snaps, tick as f64 * 1e-3);
                s.detector.step(&frame)?;
                if let Some(&last) = s.detector.latency.samples_us.last() {
                    if last > STALL_LIMIT.as_secs_f64() * 1e6 {
                        return Err(Error::Latency(format!(
                            "detector stalled for {:.1} ms at tick {tick} ({})",
                            last / 1e3,
                            object.name
                        )));
                    }
                }
            }
            (Detector::Model(_), None) => {}
        }
        tick += 1;
        if tick % DETECTOR_PER_CONTROL != 0 {
            continue;
        }
        // controller tick
        let now = counter.get();
        let slip = now > seen;
        seen = now;
        let x_g = phys.state.x_g;
        let phase_t = (tick - phase_start) as f64 * 1e-3;
        match ctl.phase {
            Phase::Approach => {
                u_c = ctl.approach_step(x_g);
                contact_run = if x_g < object.width_mm { contact_run + 1 } else { 0 };
                if contact_run >= CONTACT_TICKS {
                    ctl.start_lift();
                    phase_start = tick;
                    res.contact_width = x_g;
                    if let Detector::Model(m) = detector {
                        sensing = Some(start_sensing(m, object, &phys, &counter, cfg.seed)?);
                        seen = counter.get();
                    }
                } else if phase_t > MAX_APPROACH_S {
                    return Err(Error::InvalidInput(format!("{}: gripper never reached the object", object.name)));
                }
            }
            Phase::Lift => {
                u_c = if cfg.open_loop { ctl.approach_step(x_g) } else { ctl.lift_step(slip, x_g) };
                res.lift_peak_effort = res.lift_peak_effort.max(u_c.abs());
                if slip {
                    res.slip_ticks += 1;
                }
                if phase_t + 1e-9 >= cfg.lift_s {
                    res.lift_success = held(&phys);
                    res.lift_width_change = x_g - res.contact_width;
                    lift_end_width = x_g;
                    ctl.start_balance();
                    phase_start = tick;
                }
            }
            Phase::Balance => {
                u_c = if cfg.open_loop { ctl.approach_step(x_g) } else { ctl.balance_step(slip, x_g) };
                balance_effort.0 += u_c.abs();
                balance_effort.1 += 1;
                if slip {
                    res.slip_ticks += 1;
                    res.balance_slip_ticks += 1;
                }
            }
        }
        debug_assert!(ctl.phase == Phase::Approach || (ctl.clip.0..=ctl.clip.1).contains(&ctl.u_ff));
        if cfg.keep_log {
            res.log.push(LogRow {
                tick,
                x_g,
                x_ref: ctl.x_ref,
                u_ff: ctl.u_ff,
                u_c,
                slip,
                travel: phys.state.slip_travel,
            });
        }
        if ctl.phase == Phase::Balance && (tick - phase_start) as f64 * 1e-3 + 1e-9 >= cfg.balance_s {
            break;
        }
    }
    res.balance_success = res.lift_success && held(&phys);
    res.balance_width_change = phys.state.x_g - lift_end_width;
    res.balance_mean_effort = balance_effort.0 / balance_effort.1.max(1) as f64;
    res.object_travel = phys.state.slip_travel;
    res.latency_p99_us = sensing.map(|s| s.detector.latency.percentile(0.99));
    Ok(res)
}

fn held(p: &GraspPhysics) -> bool {
    !p.state.dropped && p.state.z_o >= HEIGHT_FRACTION * LIFT_HEIGHT_MM
}

fn start_sensing(
    model: &SlipModel,
    object: &GraspSimObject,
    phys: &GraspPhysics,
    counter: &SlipCounter,
    seed: u64,
) -> Result<Sensing> {
    let grid = GridSpec::cut();
    let snap = ContactSnapshot::from(&phys.state);
    let camera = GelCamera::new(
        &grid,
        Transduction::default(),
        object.texture_period_px,
        DEFAULT_THRESHOLD,
        DEFAULT_NOISE_RATE,
        seed,
        &snap,
    );
    let detector = SlipDetector::new(model.clone(), &grid, TrackerConfig::default(), counter.clone())?;
    Ok(Sensing { camera, detector })
}

/// Contact force needed to hold `object` against gravity.
pub fn required_normal(object: &GraspSimObject) -> f64 {
    object.mass_g * 1e-3 * GRAVITY_MM_S2 * 1e-3 / (2.0 * object.friction)
}

/// Object set for grasp experiments: masses 200-500 g with friction chosen so
/// that the holding force lies between `lo` and `hi` newtons.
pub fn grasp_objects(count: usize, lo: f64, hi: f64, seed: u64) -> Vec<GraspSimObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mass = rng.random_range(200.0..500.0);
            let need = rng.random_range(lo..hi);
            let weight = mass * 1e-3 * GRAVITY_MM_S2 * 1e-3;
            GraspSimObject {
                name: format!("grasp-object-{}", i + 1),
                mass_g: mass,
                friction: weight / (2.0 * need),
                kinetic_ratio: rng.random_range(0.7..0.9),
                width_mm: rng.random_range(30.0..60.0),
                stiffness: rng.random_range(1.5..3.0),
                texture_period_px: rng.random_range(8.0..14.0),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_profile_reaches_height() {
        let n = 40_000;
        let dt = LIFT_RAMP_S / n as f64;
        let h: f64 = (0..n).map(|i| lift_velocity((i as f64 + 0.5) * dt) * dt).sum();
        assert!((h - LIFT_HEIGHT_MM).abs() < 1e-6);
        assert_eq!(lift_velocity(LIFT_RAMP_S + 0.1), 0.0);
    }

    #[test]
    fn required_normal_balances_weight() {
        let o = GraspSimObject::new("o", 500.0, 0.5);
        assert!((required_normal(&o) - 4.905).abs() < 1e-9);
    }
}
