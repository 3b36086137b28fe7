//! Scene descriptions. Scenes are plain data and round-trip through TOML.
//!
//! ```toml
//! name = "shear-1"
//! threshold = 0.2          # contrast threshold C (log units)
//! noise_rate = 1e-5        # spurious events per pixel per second
//! seed = 7
//!
//! [grid]
//! rows = 7
//! cols = 9
//! spacing = 55.0
//! radius = 15.0
//! cut_column = 8           # optional: removes one column, leaving a window
//!
//! [field]                  # spatial profile of the scripted displacement
//! center = [320.0, 240.0]
//! sigma = 0.0              # 0 = uniform
//!
//! [[keyframes]]            # piecewise-linear displacement script
//! t = 0.0
//! dx = 0.0
//! dy = 0.0
//! radial = 0.0             # outward px at 100 px from the center
//!
//! [vibration]              # optional tapping vibration
//! freq_hz = 300.0
//! amplitude_px = 0.6
//! center = [320.0, 240.0]
//! contact_radius = 90.0
//!
//! [[distractors]]          # optional textured objects sliding over the gel
//! start_s = 0.2
//! end_s = 0.8
//! from = [-150.0, 240.0]
//! to = [800.0, 240.0]
//! size = [140.0, 160.0]
//! period = 12.0
//! dark_width = 6.0
//!
//! [force]                  # F = K * mean displacement + noise
//! gain = [[1.0, 0.0], [0.0, 1.0]]
//! noise_std = 0.0
//!
//! [grasp]                  # optional physics-driven script, see GraspScript
//! ```

use serde::{Deserialize, Serialize};

use super::sensor::Rect;
use crate::error::{Error, Result};
use crate::event::{SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::grasp::physics::GraspSimObject;
use crate::grasp::transduction::Transduction;

pub const DEFAULT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_NOISE_RATE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_column: Option<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { rows: 7, cols: 8, spacing: 55.0, radius: 15.0, cut_column: None }
    }
}

impl GridSpec {
    /// 7 x 9 gel with all 63 dots.
    pub fn full() -> Self {
        GridSpec { cols: 9, ..Default::default() }
    }

    /// 7 x 9 gel with its last column removed: 56 dots plus a window.
    pub fn cut() -> Self {
        GridSpec { cols: 9, cut_column: Some(8), ..Default::default() }
    }

    pub fn origin(&self) -> (f64, f64) {
        (
            (SENSOR_WIDTH as f64 - (self.cols as f64 - 1.0) * self.spacing) / 2.0,
            (SENSOR_HEIGHT as f64 - (self.rows as f64 - 1.0) * self.spacing) / 2.0,
        )
    }

    pub fn lattice_cols(&self) -> usize {
        self.cols - usize::from(self.cut_column.is_some())
    }

    pub fn dot_count(&self) -> usize {
        self.rows * self.lattice_cols()
    }

    /// (row, lattice column, grid column) of every dot, row-major.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.dot_count());
        for r in 0..self.rows {
            let mut lc = 0;
            for c in 0..self.cols {
                if Some(c) == self.cut_column {
                    continue;
                }
                out.push((r, lc, c));
                lc += 1;
            }
        }
        out
    }

    pub fn rest_positions(&self) -> Vec<(f64, f64)> {
        let (x0, y0) = self.origin();
        self.cells()
            .into_iter()
            .map(|(r, _, c)| (x0 + c as f64 * self.spacing, y0 + r as f64 * self.spacing))
            .collect()
    }

    /// The cut region, one grid cell wide, spanning all rows.
    pub fn window(&self) -> Option<Rect> {
        let c = self.cut_column?;
        let (x0, y0) = self.origin();
        let cx = x0 + c as f64 * self.spacing;
        let half = self.spacing / 2.0;
        Some(Rect {
            x0: (cx - half + 2.0).max(0.0),
            y0: (y0 - half).max(0.0),
            x1: (cx + half - 2.0).min(SENSOR_WIDTH as f64),
            y1: (y0 + (self.rows as f64 - 1.0) * self.spacing + half).min(SENSOR_HEIGHT as f64),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.radius <= 0.0 || self.spacing <= 0.0 {
            return Err(Error::InvalidScene("grid needs positive size, spacing and radius".into()));
        }
        if let Some(c) = self.cut_column {
            if c >= self.cols {
                return Err(Error::InvalidScene(format!("cut column {c} outside grid")));
            }
        }
        let (x0, y0) = self.origin();
        let margin = 2.0 * self.radius;
        let x_max = x0 + (self.cols as f64 - 1.0) * self.spacing;
        let y_max = y0 + (self.rows as f64 - 1.0) * self.spacing;
        if x0 - self.radius < margin
            || y0 - self.radius < margin
            || x_max + self.radius > SENSOR_WIDTH as f64 - margin
            || y_max + self.radius > SENSOR_HEIGHT as f64 - margin
        {
            return Err(Error::InvalidScene("grid does not fit the sensor with a 2r margin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub center: [f64; 2],
    /// Gaussian width of the displacement profile; 0 means uniform.
    pub sigma: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec { center: [320.0, 240.0], sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub radial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vibration {
    pub freq_hz: f64,
    /// Peak-to-peak displacement (px).
    pub amplitude_px: f64,
    pub center: [f64; 2],
    /// Dots closer than this to `center` vibrate.
    pub contact_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub start_s: f64,
    pub end_s: f64,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub size: [f64; 2],
    pub period: f64,
    pub dark_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub gain: [[f64; 2]; 2],
    pub noise_std: f64,
}

impl Default for ForceSpec {
    fn default() -> Self {
        ForceSpec { gain: [[0.0, 0.0], [0.0, 0.0]], noise_std: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspScriptKind {
    /// Object held still, gripper opened in random increments until it slips.
    Collection,
    /// Close, lift, press the object twice, then open until it slips.
    Perturb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub mass_g: f64,
    pub friction: f64,
    pub kinetic_ratio: f64,
    pub width_mm: f64,
    pub stiffness: f64,
    pub texture_period_px: f64,
}

impl From<&ObjectSpec> for GraspSimObject {
    fn from(o: &ObjectSpec) -> Self {
        GraspSimObject {
            name: o.name.clone(),
            mass_g: o.mass_g,
            friction: o.friction,
            kinetic_ratio: o.kinetic_ratio,
            width_mm: o.width_mm,
            stiffness: o.stiffness,
            texture_period_px: o.texture_period_px,
        }
    }
}

impl From<&GraspSimObject> for ObjectSpec {
    fn from(o: &GraspSimObject) -> Self {
        ObjectSpec {
            name: o.name.clone(),
            mass_g: o.mass_g,
            friction: o.friction,
            kinetic_ratio: o.kinetic_ratio,
            width_mm: o.width_mm,
            stiffness: o.stiffness,
            texture_period_px: o.texture_period_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransductionSpec {
    pub px_per_mm: f64,
    pub normal_gain: f64,
    pub shear_gain: f64,
    pub jitter_gain: f64,
    pub jitter_max: f64,
    pub jitter_hz: f64,
    pub jitter_decay: f64,
    pub contact_center: [f64; 2],
    pub contact_sigma: f64,
}

impl From<&Transduction> for TransductionSpec {
    fn from(t: &Transduction) -> Self {
        TransductionSpec {
            px_per_mm: t.px_per_mm,
            normal_gain: t.normal_gain,
            shear_gain: t.shear_gain,
            jitter_gain: t.jitter_gain,
            jitter_max: t.jitter_max,
            jitter_hz: t.jitter_hz,
            jitter_decay: t.jitter_decay,
            contact_center: [t.contact_center.0, t.contact_center.1],
            contact_sigma: t.contact_sigma,
        }
    }
}

impl From<&TransductionSpec> for Transduction {
    fn from(t: &TransductionSpec) -> Self {
        Transduction {
            px_per_mm: t.px_per_mm,
            normal_gain: t.normal_gain,
            shear_gain: t.shear_gain,
            jitter_gain: t.jitter_gain,
            jitter_max: t.jitter_max,
            jitter_hz: t.jitter_hz,
            jitter_decay: t.jitter_decay,
            contact_center: (t.contact_center[0], t.contact_center[1]),
            contact_sigma: t.contact_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspScript {
    pub kind: GraspScriptKind,
    pub object: ObjectSpec,
    /// Gripper command while holding (negative closes).
    pub hold_command: f64,
    /// Time before the gripper starts opening (s).
    pub hold_s: f64,
    /// Range of per-controller-tick command increments while opening.
    pub open_step: [f64; 2],
    /// How long to keep recording after the first slip tick (s).
    pub post_slip_s: f64,
    pub transduction: TransductionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelScene {
    pub name: String,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_noise")]
    pub noise_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vibration: Option<Vibration>,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp: Option<GraspScript>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_RATE
}

impl GelScene {
    pub fn new(name: &str, grid: GridSpec) -> Self {
        GelScene {
            name: name.to_string(),
            grid,
            threshold: DEFAULT_THRESHOLD,
            noise_rate: DEFAULT_NOISE_RATE,
            seed: 0,
            field: FieldSpec::default(),
            keyframes: vec![],
            vibration: None,
            distractors: vec![],
            force: ForceSpec::default(),
            grasp: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidScene("contrast threshold must be positive".into()));
        }
        if !(self.noise_rate >= 0.0) {
            return Err(Error::InvalidScene("noise rate must be non-negative".into()));
        }
        if let Some(v) = &self.vibration {
            if !(v.freq_hz > 0.0) || !(v.amplitude_px >= 0.0) {
                return Err(Error::InvalidScene("vibration needs positive frequency".into()));
            }
        }
        if self.keyframes.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::InvalidScene("keyframes must be sorted in time".into()));
        }
        for d in &self.distractors {
            if !(d.end_s > d.start_s) || !(d.period > 0.0) || d.dark_width < 0.0 {
                return Err(Error::InvalidScene("distractor needs a positive duration and period".into()));
            }
        }
        if let Some(g) = &self.grasp {
            GraspSimObject::from(&g.object).validate().map_err(|e| Error::InvalidScene(e.to_string()))?;
            if !(g.open_step[0] <= g.open_step[1]) {
                return Err(Error::InvalidScene("open_step range is reversed".into()));
            }
        }
        Ok(())
    }

    /// Valid vibration scenes stay below the 500 Hz Nyquist limit; scenes
    /// above it are still simulated to exercise aliasing.
    pub fn is_below_nyquist(&self) -> bool {
        self.vibration.as_ref().is_none_or(|v| v.freq_hz < 500.0)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: GelScene = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    /// Scripted displacement of a rest position at time `t` (s).
    pub fn field_offset(&self, rest: (f64, f64), t: f64) -> (f64, f64) {
        let Some(k) = interpolate(&self.keyframes, t) else {
            return (0.0, 0.0);
        };
        let (cx, cy) = (self.field.center[0], self.field.center[1]);
        let w = if self.field.sigma > 0.0 {
            let d2 = (rest.0 - cx).powi(2) + (rest.1 - cy).powi(2);
            (-d2 / (2.0 * self.field.sigma.powi(2))).exp()
        } else {
            1.0
        };
        let rad = k.radial / 100.0;
        (w * (k.dx + rad * (rest.0 - cx)), w * (k.dy + rad * (rest.1 - cy)))
    }
}

fn interpolate(keys: &[Keyframe], t: f64) -> Option<Keyframe> {
    let first = keys.first()?;
    if t <= first.t {
        return Some(*first);
    }
    for w in keys.windows(2) {
        let (a, b) = (w[0], w[1]);
        if t <= b.t {
            let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
            return Some(Keyframe {
                t,
                dx: a.dx + s * (b.dx - a.dx),
                dy: a.dy + s * (b.dy - a.dy),
                radial: a.radial + s * (b.radial - a.radial),
            });
        }
    }
    keys.last().copied()
}

/// Tapping waveform with unit peak-to-peak amplitude and zero mean position
/// offset at phase 0. Its speed profile is `1 + cos(theta)` (up to scale), so
/// the magnitude of its velocity carries energy only at the fundamental.
pub fn tap_waveform(phase: f64) -> f64 {
    use std::f64::consts::PI;
    // turning point a solves a + sin(a) = pi / 2
    const TURN: f64 = 0.831_711_193_579_735_9;
    let th = (phase + PI).rem_euclid(2.0 * PI) - PI;
    let raw = if th < -TURN {
        -(th + th.sin() + PI)
    } else if th <= TURN {
        th + th.sin()
    } else {
        PI - th - th.sin()
    };
    raw / PI
}
