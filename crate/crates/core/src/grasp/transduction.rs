//! Linear map from grasp physics to gel geometry.
//!
//! * normal force pushes contact dots radially outward,
//! * friction (shear) force drags contact dots along the image y axis,
//! * sliding excites a decaying high-frequency dot jitter,
//! * the object's texture in the window region moves with the gel plus the
//!   object's slide relative to the fingers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::physics::PhysicsState;
use crate::sim::sensor::{Rect, SceneState, Texture};

#[derive(Debug, Clone, PartialEq)]
pub struct Transduction {
    pub px_per_mm: f64,
    /// Radial dot displacement per newton of normal force at the contact center (px/N).
    pub normal_gain: f64,
    /// Dot displacement per newton of friction at the contact center (px/N).
    pub shear_gain: f64,
    /// Jitter amplitude per mm/s of slide velocity (px).
    pub jitter_gain: f64,
    pub jitter_max: f64,
    pub jitter_hz: f64,
    /// Jitter decay time constant once sliding stops (s).
    pub jitter_decay: f64,
    pub contact_center: (f64, f64),
    /// Gaussian width of the contact patch (px).
    pub contact_sigma: f64,
}

impl Default for Transduction {
    fn default() -> Self {
        Transduction {
            px_per_mm: 20.0,
            normal_gain: 0.25,
            shear_gain: 0.6,
            jitter_gain: 0.004,
            jitter_max: 0.1,
            jitter_hz: 170.0,
            jitter_decay: 0.008,
            contact_center: (320.0, 240.0),
            contact_sigma: 130.0,
        }
    }
}

/// Darkness of the object texture seen through the window.
pub const WINDOW_TEXTURE_DEPTH: f64 = 0.25;

/// Stateful gel model: keeps the jitter envelope and per-dot phases.
#[derive(Debug, Clone)]
pub struct GelModel {
    pub params: Transduction,
    rest: Vec<(f64, f64)>,
    weights: Vec<f64>,
    phases: Vec<(f64, f64)>,
    jitter: f64,
    radius: f64,
    window: Option<Rect>,
    texture_period: f64,
}

/// Quantities of one physics tick the gel responds to.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactSnapshot {
    pub normal: f64,
    pub friction: f64,
    pub slip_velocity: f64,
    pub rel_slide: f64,
}

impl From<&PhysicsState> for ContactSnapshot {
    fn from(s: &PhysicsState) -> Self {
        ContactSnapshot {
            normal: s.normal,
            friction: s.friction,
            slip_velocity: s.slip_velocity(),
            rel_slide: s.rel_slide,
        }
    }
}

impl GelModel {
    pub fn new(
        params: Transduction,
        rest: Vec<(f64, f64)>,
        radius: f64,
        window: Option<Rect>,
        texture_period: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = std::f64::consts::TAU;
        let phases = rest
            .iter()
            .map(|_| (rng.random::<f64>() * tau, rng.random::<f64>() * tau))
            .collect();
        let weights = rest.iter().map(|&p| weight(&params, p)).collect();
        GelModel { params, rest, weights, phases, jitter: 0.0, radius, window, texture_period }
    }

    pub fn rest(&self) -> &[(f64, f64)] {
        &self.rest
    }

    /// Updates the jitter envelope after one physics step of `dt` seconds.
    pub fn advance(&mut self, snap: &ContactSnapshot, dt: f64) {
        let drive = (self.params.jitter_gain * snap.slip_velocity.abs()).min(self.params.jitter_max);
        let decayed = self.jitter * (-dt / self.params.jitter_decay).exp();
        self.jitter = decayed.max(if snap.normal > 0.0 { drive } else { 0.0 });
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Quasi-static displacement of dot `k` (no jitter).
    pub fn static_offset(&self, k: usize, snap: &ContactSnapshot) -> (f64, f64) {
        let p = &self.params;
        let (x, y) = self.rest[k];
        let w = self.weights[k];
        let (cx, cy) = p.contact_center;
        let radial = p.normal_gain * snap.normal * w / p.contact_sigma;
        // positive friction holds the object up, so the gel is dragged down (+y)
        let shear = p.shear_gain * snap.friction * w;
        (radial * (x - cx), radial * (y - cy) + shear)
    }

    /// Dot centers and window texture at absolute time `t_s`.
    pub fn scene(&self, snap: &ContactSnapshot, t_s: f64) -> SceneState {
        let tau = std::f64::consts::TAU;
        let arg = tau * self.params.jitter_hz * t_s;
        let dots = (0..self.rest.len())
            .map(|k| {
                let (ox, oy) = self.static_offset(k, snap);
                let (px, py) = self.phases[k];
                let a = self.jitter * self.weights[k];
                (
                    self.rest[k].0 + ox + a * (arg + px).sin(),
                    self.rest[k].1 + oy + a * (arg + py).sin(),
                )
            })
            .collect();
        let textures = match self.window {
            Some(region) => {
                let (cx, cy) = ((region.x0 + region.x1) / 2.0, (region.y0 + region.y1) / 2.0);
                let w = weight(&self.params, (cx, cy));
                let gel = self.params.shear_gain * snap.friction * w;
                vec![Texture {
                    region,
                    period: self.texture_period,
                    dark_width: self.texture_period / 2.0,
                    vertical_motion: true,
                    offset: gel + snap.rel_slide * self.params.px_per_mm,
                    depth: WINDOW_TEXTURE_DEPTH,
                }]
            }
            None => vec![],
        };
        SceneState { dots, radius: self.radius, textures }
    }
}

fn weight(p: &Transduction, (x, y): (f64, f64)) -> f64 {
    let (cx, cy) = p.contact_center;
    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
    (-d2 / (2.0 * p.contact_sigma * p.contact_sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GelModel {
        GelModel::new(Transduction::default(), vec![(320.0, 240.0), (100.0, 240.0)], 15.0, None, 8.0, 1)
    }

    #[test]
    fn unloaded_gel_is_at_rest() {
        let m = model();
        let s = m.scene(&ContactSnapshot::default(), 0.123);
        assert_eq!(s.dots, vec![(320.0, 240.0), (100.0, 240.0)]);
    }

    #[test]
    fn shear_drags_down_and_normal_spreads_out() {
        let m = model();
        let snap = ContactSnapshot { normal: 4.0, friction: 2.0, ..Default::default() };
        let s = m.scene(&snap, 0.0);
        assert!(s.dots[0].1 > 240.0);
        assert_eq!(s.dots[0].0, 320.0);
        assert!(s.dots[1].0 < 100.0);
    }

    #[test]
    fn jitter_rises_with_slip_and_decays() {
        let mut m = model();
        let slip = ContactSnapshot { normal: 1.0, slip_velocity: 30.0, ..Default::default() };
        m.advance(&slip, 1e-3);
        let peak = m.jitter();
        assert!(peak > 0.0);
        let hold = ContactSnapshot { normal: 1.0, ..Default::default() };
        for _ in 0..50 {
            m.advance(&hold, 1e-3);
        }
        assert!(m.jitter() < peak * 0.01);
    }
}
