//! Slip classifiers: the per-dot encoder with a spatial convolution head, and
//! the image baseline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::event::{EventFrame, SENSOR_HEIGHT};
use crate::features::FeatureConfig;
use crate::io::write_atomic;
use crate::nn::{LayerKind, Network, Shape};
use crate::sim::GridSpec;

pub const LATTICE_ROWS: usize = 7;
pub const LATTICE_COLS: usize = 8;
pub const FC3: usize = 32;
pub const FC4: usize = 10;

/// Input scaling applied before the network sees the features.
pub const DISP_SCALE: f64 = 0.5;
pub const EVENT_SCALE: f64 = 0.1;

pub const BASELINE_FRAMES: usize = 10;
/// Image columns kept by the baseline (the window region is cropped away).
pub const BASELINE_WIDTH: usize = 500;
pub const BASELINE_HEIGHT: usize = SENSOR_HEIGHT as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlipArch {
    PerDot(FeatureConfig),
    Baseline,
}

impl SlipArch {
    pub const ALL: [SlipArch; 8] = [
        SlipArch::PerDot(FeatureConfig::NoHist),
        SlipArch::PerDot(FeatureConfig::Hist10),
        SlipArch::PerDot(FeatureConfig::EventsOnlyHist10),
        SlipArch::PerDot(FeatureConfig::DispOnlyHist10),
        SlipArch::PerDot(FeatureConfig::Hist20),
        SlipArch::PerDot(FeatureConfig::Hist50Down5),
        SlipArch::PerDot(FeatureConfig::FastSlowHist50),
        SlipArch::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SlipArch::PerDot(c) => c.name(),
            SlipArch::Baseline => "baseline-image-hist-10",
        }
    }

    /// Per-dot layer sizes `(l_i, l_fc1, l_fc2)`.
    pub fn dot_sizes(self) -> Option<(usize, usize, usize)> {
        let c = match self {
            SlipArch::PerDot(c) => c,
            SlipArch::Baseline => return None,
        };
        let (f1, f2) = match c {
            FeatureConfig::NoHist => (10, 4),
            FeatureConfig::Hist10 => (12, 4),
            FeatureConfig::EventsOnlyHist10 | FeatureConfig::DispOnlyHist10 => (8, 4),
            FeatureConfig::Hist20 => (20, 8),
            FeatureConfig::Hist50Down5 => (12, 4),
            FeatureConfig::FastSlowHist50 => (15, 8),
        };
        Some((c.input_len(), f1, f2))
    }

    /// Frames of history needed before the first prediction.
    pub fn history(self) -> usize {
        match self {
            SlipArch::PerDot(c) => c.history(),
            SlipArch::Baseline => BASELINE_FRAMES,
        }
    }

    /// Trajectory cut after the labeled onset, in ticks.
    pub fn cut_ms(self) -> usize {
        match self.history() {
            h if h <= 10 => 15,
            h if h <= 20 => 20,
            _ => 50,
        }
    }

    pub fn input_shape(self) -> Shape {
        match self {
            SlipArch::PerDot(c) => (c.input_len(), LATTICE_ROWS, LATTICE_COLS),
            SlipArch::Baseline => (BASELINE_FRAMES, BASELINE_HEIGHT, BASELINE_WIDTH),
        }
    }

    pub fn layers(self) -> Vec<LayerKind> {
        match self.dot_sizes() {
            Some((li, f1, f2)) => vec![
                LayerKind::Conv2d { in_ch: li, out_ch: f1, kh: 1, kw: 1, pad: (0, 0, 0, 0) },
                LayerKind::Relu,
                LayerKind::Conv2d { in_ch: f1, out_ch: f2, kh: 1, kw: 1, pad: (0, 0, 0, 0) },
                LayerKind::Relu,
                LayerKind::Conv2d { in_ch: f2, out_ch: 16, kh: 7, kw: 6, pad: LayerKind::same_pad(7, 6) },
                LayerKind::Relu,
                LayerKind::Conv2d { in_ch: 16, out_ch: 32, kh: 3, kw: 3, pad: (0, 0, 0, 0) },
                LayerKind::Relu,
                LayerKind::Flatten,
                LayerKind::Dense { input: 32 * (LATTICE_ROWS - 2) * (LATTICE_COLS - 2), output: FC3 },
                LayerKind::Relu,
                LayerKind::Dense { input: FC3, output: FC4 },
                LayerKind::Relu,
                LayerKind::Dense { input: FC4, output: 1 },
                LayerKind::Sigmoid,
            ],
            None => {
                let mut v = Vec::new();
                let chans = [(BASELINE_FRAMES, 15), (15, 20), (20, 25), (25, 32)];
                let pools = [(3, 3), (3, 3), (4, 4), (9, 7)];
                for (&(i, o), &(ph, pw)) in chans.iter().zip(&pools) {
                    v.push(LayerKind::Conv2d { in_ch: i, out_ch: o, kh: 5, kw: 5, pad: LayerKind::same_pad(5, 5) });
                    v.push(LayerKind::Relu);
                    v.push(LayerKind::MaxPool2d { kh: ph, kw: pw });
                }
                v.extend([
                    LayerKind::Flatten,
                    LayerKind::Dense { input: 32, output: FC4 },
                    LayerKind::Relu,
                    LayerKind::Dense { input: FC4, output: 1 },
                    LayerKind::Sigmoid,
                ]);
                v
            }
        }
    }
}

impl fmt::Display for SlipArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SlipArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SlipArch::ALL.iter().copied().find(|a| a.name() == s).ok_or_else(|| Error::UnknownConfig(s.to_string()))
    }
}

pub fn build_model(arch: SlipArch, seed: u64) -> Result<Network> {
    Network::new(arch.input_shape(), arch.layers(), seed)
}

/// Maps dot-major encoded features onto the channel-major dot lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMap {
    /// Lattice cell (`row * LATTICE_COLS + col`) of each dot.
    cells: Vec<usize>,
}

impl LatticeMap {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        if grid.rows != LATTICE_ROWS || grid.lattice_cols() != LATTICE_COLS {
            return Err(Error::Shape(format!(
                "slip models need a {LATTICE_ROWS}x{LATTICE_COLS} dot lattice, grid has {}x{}",
                grid.rows,
                grid.lattice_cols()
            )));
        }
        Ok(LatticeMap { cells: grid.cells().iter().map(|&(r, c, _)| r * LATTICE_COLS + c).collect() })
    }

    pub fn dots(&self) -> usize {
        self.cells.len()
    }

    /// Scales and scatters `enc` (dots x `config.input_len()`) into `out`.
    pub fn fill(&self, config: FeatureConfig, enc: &[f32], out: &mut Vec<f64>) -> Result<()> {
        let li = config.input_len();
        if enc.len() != li * self.cells.len() {
            return Err(Error::Shape(format!("expected {} encoded values, got {}", li * self.cells.len(), enc.len())));
        }
        let plane = LATTICE_ROWS * LATTICE_COLS;
        out.clear();
        out.resize(li * plane, 0.0);
        let scales = channel_scales(config);
        for (k, &cell) in self.cells.iter().enumerate() {
            for (c, &s) in scales.iter().enumerate() {
                out[c * plane + cell] = enc[k * li + c] as f64 * s;
            }
        }
        Ok(())
    }
}

fn channel_scales(config: FeatureConfig) -> Vec<f64> {
    let signals = usize::from(config.uses_disp()) + usize::from(config.uses_events());
    let per = config.input_len() / signals;
    let mut v = Vec::with_capacity(config.input_len());
    if config.uses_disp() {
        v.extend(std::iter::repeat_n(DISP_SCALE, per));
    }
    if config.uses_events() {
        v.extend(std::iter::repeat_n(EVENT_SCALE, per));
    }
    v
}

/// Stacks the last `BASELINE_FRAMES` frames as signed event images,
/// cropped to the first `BASELINE_WIDTH` columns.
pub fn baseline_input(frames: &[EventFrame], out: &mut Vec<f64>) -> Result<()> {
    if frames.len() < BASELINE_FRAMES {
        return Err(Error::InvalidInput(format!("baseline needs {BASELINE_FRAMES} frames, got {}", frames.len())));
    }
    let plane = BASELINE_HEIGHT * BASELINE_WIDTH;
    out.clear();
    out.resize(BASELINE_FRAMES * plane, 0.0);
    for (c, f) in frames[frames.len() - BASELINE_FRAMES..].iter().enumerate() {
        for e in &f.events {
            let (x, y) = (e.x as usize, e.y as usize);
            if x < BASELINE_WIDTH && y < BASELINE_HEIGHT {
                out[c * plane + y * BASELINE_WIDTH + x] = e.p.sign() as f64;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    /// Rotates a `(c, h, w)` tensor in place of `x`. Quarter turns of a
    /// non-square lattice are cropped to the first `h` rows and zero-padded
    /// on the right back to `w` columns.
    pub fn apply(self, x: &[f64], shape: Shape) -> Vec<f64> {
        let (c, h, w) = shape;
        let mut out = vec![0.0; x.len()];
        for ch in 0..c {
            let src = &x[ch * h * w..(ch + 1) * h * w];
            let dst = &mut out[ch * h * w..(ch + 1) * h * w];
            for r in 0..h {
                for col in 0..w {
                    let from = match self {
                        Rotation::R0 => Some((r, col)),
                        Rotation::R180 => Some((h - 1 - r, w - 1 - col)),
                        // quarter turns: rotated shape is (w, h)
                        Rotation::R90 => (col < h && r < w).then(|| (h - 1 - col, r)),
                        Rotation::R270 => (col < h && r < w).then(|| (col, w - 1 - r)),
                    };
                    if let Some((sr, sc)) = from {
                        dst[r * w + col] = src[sr * w + sc];
                    }
                }
            }
        }
        out
    }
}

/// A trained classifier with its decision threshold.
#[derive(Debug, Clone)]
pub struct SlipModel {
    pub arch: SlipArch,
    pub delta_t: usize,
    pub threshold: f64,
    pub network: Network,
}

const MODEL_MAGIC: &[u8; 4] = b"EVSM";

impl SlipModel {
    pub fn new(arch: SlipArch, delta_t: usize, threshold: f64, network: Network) -> Result<Self> {
        if network.input_len() != arch.input_shape().0 * arch.input_shape().1 * arch.input_shape().2 {
            return Err(Error::Shape(format!("network does not fit {arch}")));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidInput(format!("threshold {threshold} outside [0, 1]")));
        }
        Ok(SlipModel { arch, delta_t, threshold, network })
    }

    pub fn probability(&self, input: &[f64]) -> Result<f64> {
        Ok(self.network.predict(input)?[0])
    }

    /// Layout: magic, u8 name length, name, u32 delta, f64 threshold, network.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = MODEL_MAGIC.to_vec();
        let name = self.arch.name().as_bytes();
        b.push(name.len() as u8);
        b.extend_from_slice(name);
        b.extend_from_slice(&(self.delta_t as u32).to_le_bytes());
        b.extend_from_slice(&self.threshold.to_le_bytes());
        b.extend(self.network.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Decode(format!("slip model: {m}"));
        if b.len() < 5 || &b[..4] != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let n = b[4] as usize;
        let rest = b.get(5..).ok_or_else(|| bad("truncated"))?;
        if rest.len() < n + 12 {
            return Err(bad("truncated header"));
        }
        let name = std::str::from_utf8(&rest[..n]).map_err(|_| bad("name is not utf-8"))?;
        let arch: SlipArch = name.parse()?;
        let delta = u32::from_le_bytes(rest[n..n + 4].try_into().unwrap()) as usize;
        let threshold = f64::from_le_bytes(rest[n + 4..n + 12].try_into().unwrap());
        let network = Network::from_bytes(&rest[n + 12..])?;
        SlipModel::new(arch, delta, threshold, network)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        SlipModel::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes() {
        assert_eq!(SlipArch::PerDot(FeatureConfig::NoHist).dot_sizes(), Some((2, 10, 4)));
        assert_eq!(SlipArch::PerDot(FeatureConfig::FastSlowHist50).dot_sizes(), Some((30, 15, 8)));
        assert_eq!(SlipArch::PerDot(FeatureConfig::Hist20).dot_sizes(), Some((40, 20, 8)));
        assert_eq!(SlipArch::Baseline.dot_sizes(), None);
    }

    #[test]
    fn every_arch_builds() {
        for a in SlipArch::ALL {
            let n = build_model(a, 1).unwrap();
            assert_eq!(n.output_len(), 1, "{a}");
            assert_eq!(a.to_string().parse::<SlipArch>().unwrap(), a);
        }
        assert!(matches!("hist-30".parse::<SlipArch>(), Err(Error::UnknownConfig(_))));
    }

    #[test]
    fn cuts_follow_history() {
        assert_eq!(SlipArch::PerDot(FeatureConfig::Hist10).cut_ms(), 15);
        assert_eq!(SlipArch::PerDot(FeatureConfig::Hist20).cut_ms(), 20);
        assert_eq!(SlipArch::PerDot(FeatureConfig::FastSlowHist50).cut_ms(), 50);
    }

    #[test]
    fn lattice_skips_window_cell() {
        let m = LatticeMap::new(&GridSpec::cut()).unwrap();
        assert_eq!(m.dots(), 56);
        let enc: Vec<f32> = (0..112).map(|v| v as f32).collect();
        let mut out = Vec::new();
        m.fill(FeatureConfig::NoHist, &enc, &mut out).unwrap();
        assert_eq!(out.len(), 112);
        // dot 1 sits at row 0, col 1; channel 1 is its event count
        assert_eq!(out[1], 2.0 * DISP_SCALE);
        assert_eq!(out[56 + 1], 3.0 * EVENT_SCALE);
        assert!(LatticeMap::new(&GridSpec::full()).is_err());
    }

    #[test]
    fn half_turn_is_involution() {
        let s = (2, 7, 8);
        let x: Vec<f64> = (0..112).map(|v| v as f64).collect();
        let y = Rotation::R180.apply(&x, s);
        assert_ne!(x, y);
        assert_eq!(Rotation::R180.apply(&y, s), x);
    }

    #[test]
    fn quarter_turn_crops_and_pads() {
        let s = (1, 7, 8);
        let x: Vec<f64> = (0..56).map(|v| v as f64 + 1.0).collect();
        let y = Rotation::R90.apply(&x, s);
        // last column is padding
        assert!((0..7).all(|r| y[r * 8 + 7] == 0.0));
        // top-left of a clockwise turn is the old bottom-left
        assert_eq!(y[0], x[6 * 8]);
    }

    #[test]
    fn model_bytes_round_trip() {
        let a = SlipArch::PerDot(FeatureConfig::NoHist);
        let m = SlipModel::new(a, 10, 0.425, build_model(a, 3).unwrap()).unwrap();
        let back = SlipModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!((back.arch, back.delta_t, back.threshold), (a, 10, 0.425));
        assert_eq!(back.network.params(), m.network.params());
        assert!(SlipModel::from_bytes(b"EVSMxx").is_err());
    }
}
