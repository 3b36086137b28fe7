//! Log-intensity event generator.
//!
//! The sensor keeps two log-intensity layers (dots and textured objects) and a
//! per-pixel reference level. Whenever the combined log intensity drifts at
//! least one threshold away from the reference, one event per threshold
//! crossing is emitted and the reference is stepped by that many thresholds.
//! Only pixels touched by moving geometry are re-evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::event::{Event, EventFrame, Polarity, FRAME_PERIOD_US, SENSOR_HEIGHT, SENSOR_WIDTH};

const W: usize = SENSOR_WIDTH as usize;
const H: usize = SENSOR_HEIGHT as usize;

/// Intensity of dot and texture interiors relative to the background.
pub const DARK_LEVEL: f64 = 0.05;
/// Intensities are clamped here before taking the log.
pub const MIN_INTENSITY: f64 = 0.01;
pub const SUBSTEPS: u64 = 10;

const LUT_STEPS: usize = 4096;

/// Axis-aligned rectangle in pixel coordinates, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn pixel_bounds(&self) -> (usize, usize, usize, usize) {
        let cl = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        (
            cl(self.x0.floor() - 1.0, W),
            cl(self.y0.floor() - 1.0, H),
            cl(self.x1.ceil() + 1.0, W),
            cl(self.y1.ceil() + 1.0, H),
        )
    }

    fn union(&self, o: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(o.x0),
            y0: self.y0.min(o.y0),
            x1: self.x1.max(o.x1),
            y1: self.y1.max(o.y1),
        }
    }
}

/// A striped texture visible inside `region`. Stripes are perpendicular to
/// the y axis when `vertical_motion` is set, else perpendicular to x; the
/// pattern is shifted by `offset`. `depth` is the darkness of a stripe, 1 for
/// as dark as a dot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub region: Rect,
    pub period: f64,
    pub dark_width: f64,
    pub vertical_motion: bool,
    pub offset: f64,
    pub depth: f64,
}

impl Texture {
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let ox = overlap(x - 0.5, x + 0.5, self.region.x0, self.region.x1);
        let oy = overlap(y - 0.5, y + 0.5, self.region.y0, self.region.y1);
        if ox <= 0.0 || oy <= 0.0 {
            return 0.0;
        }
        let s = if self.vertical_motion { y } else { x } - self.offset;
        let stripes = stripe_integral(s + 0.5, self.period, self.dark_width)
            - stripe_integral(s - 0.5, self.period, self.dark_width);
        ox * oy * stripes * self.depth
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).clamp(0.0, 1.0)
}

/// Measure of dark stripe `[kP, kP + w)` inside `(-inf, s]`, up to a constant.
fn stripe_integral(s: f64, period: f64, width: f64) -> f64 {
    let k = (s / period).floor();
    k * width + (s - k * period).min(width)
}

/// Geometry of the scene at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub dots: Vec<(f64, f64)>,
    pub radius: f64,
    pub textures: Vec<Texture>,
}

pub struct EventSensor {
    threshold: f64,
    noise_rate: f64,
    dot_log: Vec<f32>,
    tex_log: Vec<f32>,
    reference: Vec<f32>,
    stamp: Vec<u32>,
    stamp_id: u32,
    dirty: Vec<u32>,
    lut: Vec<f32>,
    min_log: f32,
    rendered_dots: Vec<(f64, f64)>,
    radius: f64,
    textures: Vec<Texture>,
    /// Dots are re-rendered only after moving at least this far.
    pub motion_epsilon: f64,
    rng: ChaCha8Rng,
    tick: u64,
}

impl EventSensor {
    pub fn new(initial: &SceneState, threshold: f64, noise_rate: f64, seed: u64) -> Self {
        let lut = (0..=LUT_STEPS)
            .map(|i| {
                let cov = i as f64 / LUT_STEPS as f64;
                (1.0 - (1.0 - DARK_LEVEL) * cov).max(MIN_INTENSITY).ln() as f32
            })
            .collect();
        let mut s = EventSensor {
            threshold,
            noise_rate,
            dot_log: vec![0.0; W * H],
            tex_log: vec![0.0; W * H],
            reference: vec![0.0; W * H],
            stamp: vec![0; W * H],
            stamp_id: 0,
            dirty: Vec::with_capacity(1 << 16),
            lut,
            min_log: (MIN_INTENSITY as f32).ln(),
            rendered_dots: Vec::new(),
            radius: initial.radius,
            textures: Vec::new(),
            motion_epsilon: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tick: 0,
        };
        for &(x, y) in &initial.dots {
            s.paint_dot(None, (x, y));
        }
        s.rendered_dots = initial.dots.clone();
        s.repaint_textures(&initial.textures, None);
        s.textures = initial.textures.clone();
        for i in 0..W * H {
            s.reference[i] = s.level(i);
        }
        s.dirty.clear();
        s
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    #[inline]
    fn level(&self, i: usize) -> f32 {
        (self.dot_log[i] + self.tex_log[i]).max(self.min_log)
    }

    #[inline]
    fn lut_log(&self, cov: f64) -> f32 {
        self.lut[(cov * LUT_STEPS as f64 + 0.5) as usize]
    }

    #[inline]
    fn mark(&mut self, i: usize) {
        if self.stamp[i] != self.stamp_id {
            self.stamp[i] = self.stamp_id;
            self.dirty.push(i as u32);
        }
    }

    /// Re-evaluates dot coverage of all pixels whose value may differ between
    /// the dot at `old` and at `new`.
    fn paint_dot(&mut self, old: Option<(f64, f64)>, new: (f64, f64)) {
        let r = self.radius;
        let r_out = r + 1.5;
        let r_in = (r - 1.5).max(0.0);
        let (ox, oy) = old.unwrap_or(new);
        let (nx, ny) = new;
        let y_lo = (oy.min(ny) - r_out).floor().max(0.0) as usize;
        let y_hi = ((oy.max(ny) + r_out).ceil() as usize).min(H - 1);
        let fresh = old.is_none();
        for y in y_lo..=y_hi {
            let yf = y as f64;
            let dyo = yf - oy;
            let dyn_ = yf - ny;
            let ho = r_out * r_out - dyo * dyo;
            let hn = r_out * r_out - dyn_ * dyn_;
            if ho < 0.0 && hn < 0.0 {
                continue;
            }
            let mut x_lo = f64::INFINITY;
            let mut x_hi = f64::NEG_INFINITY;
            if ho >= 0.0 {
                let h = ho.sqrt();
                x_lo = x_lo.min(ox - h);
                x_hi = x_hi.max(ox + h);
            }
            if hn >= 0.0 {
                let h = hn.sqrt();
                x_lo = x_lo.min(nx - h);
                x_hi = x_hi.max(nx + h);
            }
            // interior shared by both positions never changes
            let io = r_in * r_in - dyo * dyo;
            let inn = r_in * r_in - dyn_ * dyn_;
            let (skip_lo, skip_hi) = if !fresh && io > 0.0 && inn > 0.0 {
                let (a, b) = (io.sqrt(), inn.sqrt());
                ((ox - a).max(nx - b), (ox + a).min(nx + b))
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            };
            let xs = x_lo.floor().max(0.0) as usize;
            let xe = (x_hi.ceil() as usize).min(W - 1);
            let row = y * W;
            for x in xs..=xe {
                let xf = x as f64;
                if xf > skip_lo && xf < skip_hi {
                    continue;
                }
                let dx = xf - nx;
                let dist = (dx * dx + dyn_ * dyn_).sqrt();
                let cov = (r + 0.5 - dist).clamp(0.0, 1.0);
                let v = self.lut_log(cov);
                let i = row + x;
                if v != self.dot_log[i] {
                    self.dot_log[i] = v;
                    self.mark(i);
                }
            }
        }
    }

    fn repaint_textures(&mut self, textures: &[Texture], previous: Option<&[Texture]>) {
        let mut bounds: Option<Rect> = None;
        for t in textures.iter().chain(previous.unwrap_or(&[]).iter()) {
            bounds = Some(match bounds {
                Some(b) => b.union(&t.region),
                None => t.region,
            });
        }
        let Some(b) = bounds else { return };
        let (x0, y0, x1, y1) = b.pixel_bounds();
        for y in y0..y1 {
            for x in x0..x1 {
                let (xf, yf) = (x as f64, y as f64);
                let mut v = 0.0f32;
                for t in textures {
                    let c = t.coverage(xf, yf);
                    if c > 0.0 {
                        v += self.lut_log(c);
                    }
                }
                let i = y * W + x;
                if v != self.tex_log[i] {
                    self.tex_log[i] = v;
                    self.mark(i);
                }
            }
        }
    }

    /// Moves the scene to `state` and emits events for every pixel whose log
    /// intensity crossed one or more thresholds, all stamped at `t_us`.
    fn apply(&mut self, state: &SceneState, t_us: u64, out: &mut Vec<Event>) {
        self.stamp_id = self.stamp_id.wrapping_add(1);
        if self.stamp_id == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp_id = 1;
        }
        self.dirty.clear();
        debug_assert_eq!(state.dots.len(), self.rendered_dots.len());
        let eps2 = self.motion_epsilon * self.motion_epsilon;
        for k in 0..state.dots.len() {
            let old = self.rendered_dots[k];
            let new = state.dots[k];
            let (dx, dy) = (new.0 - old.0, new.1 - old.1);
            let d2 = dx * dx + dy * dy;
            if d2 == 0.0 || d2 < eps2 {
                continue;
            }
            self.paint_dot(Some(old), new);
            self.rendered_dots[k] = new;
        }
        if state.textures != self.textures {
            let prev = std::mem::take(&mut self.textures);
            self.repaint_textures(&state.textures, Some(&prev));
            self.textures = state.textures.clone();
        }
        let c = self.threshold as f32;
        let dirty = std::mem::take(&mut self.dirty);
        for &i in &dirty {
            let i = i as usize;
            let level = self.level(i);
            let diff = level - self.reference[i];
            if diff.abs() < c {
                continue;
            }
            let n = (diff.abs() / c).floor();
            let p = if diff > 0.0 { Polarity::On } else { Polarity::Off };
            self.reference[i] += n * c * diff.signum();
            let e = Event { x: (i % W) as u16, y: (i / W) as u16, t: t_us, p };
            for _ in 0..n as usize {
                out.push(e);
            }
        }
        self.dirty = dirty;
    }

    fn add_noise(&mut self, t_us: u64, dt_us: u64, out: &mut Vec<Event>) {
        if self.noise_rate <= 0.0 {
            return;
        }
        let mean = self.noise_rate * (W * H) as f64 * dt_us as f64 * 1e-6;
        let n = Poisson::new(mean).map(|p| p.sample(&mut self.rng) as usize).unwrap_or(0);
        for _ in 0..n {
            let x = self.rng.random_range(0..W) as u16;
            let y = self.rng.random_range(0..H) as u16;
            let p = if self.rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            out.push(Event { x, y, t: t_us, p });
        }
    }

    /// Simulates one readout period. `state_at(t)` gives the scene geometry at
    /// absolute time `t` in microseconds; it is sampled at the end of each
    /// substep.
    pub fn step<F: FnMut(u64) -> SceneState>(&mut self, mut state_at: F) -> EventFrame {
        let start = self.tick * FRAME_PERIOD_US;
        let sub = FRAME_PERIOD_US / SUBSTEPS;
        let mut events = Vec::new();
        for k in 0..SUBSTEPS {
            let t_state = start + (k + 1) * sub;
            let state = state_at(t_state);
            let stamp = t_state - 1;
            self.apply(&state, stamp, &mut events);
            self.add_noise(stamp, sub, &mut events);
        }
        self.tick += 1;
        EventFrame { t_end: start + FRAME_PERIOD_US, events }
    }

    /// Same as [`step`] with one precomputed state per substep.
    pub fn step_states(&mut self, states: &[SceneState]) -> EventFrame {
        assert_eq!(states.len() as u64, SUBSTEPS);
        let start = self.tick * FRAME_PERIOD_US;
        let sub = FRAME_PERIOD_US / SUBSTEPS;
        let mut events = Vec::new();
        for (k, state) in states.iter().enumerate() {
            let stamp = start + (k as u64 + 1) * sub - 1;
            self.apply(state, stamp, &mut events);
            self.add_noise(stamp, sub, &mut events);
        }
        self.tick += 1;
        EventFrame { t_end: start + FRAME_PERIOD_US, events }
    }

    /// Current log intensity at a pixel (for bookkeeping checks).
    pub fn log_intensity(&self, x: usize, y: usize) -> f32 {
        self.level(y * W + x)
    }

    pub fn reference_level(&self, x: usize, y: usize) -> f32 {
        self.reference[y * W + x]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}
