//! Per-frame touch features and their history encodings.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::event::{EventFrame, EventImage};
use crate::sim::Rect;

pub const DOT_DISC_RADIUS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub t_end: u64,
    /// Total events, window region excluded.
    pub n_e: usize,
    /// Events within the disc around each dot's current center.
    pub e_c: Vec<u32>,
    pub p_c: Vec<(f64, f64)>,
    /// Distance of each dot from its rest position (px).
    pub d_c: Vec<f64>,
    pub image: Option<EventImage>,
}

/// Computes the features of one frame given the tracked and rest centers.
pub fn extract(
    frame: &EventFrame,
    centers: &[(f64, f64)],
    rest: &[(f64, f64)],
    disc_radius: f64,
    window: Option<&Rect>,
) -> FeatureFrame {
    let n = centers.len();
    let mut e_c = vec![0u32; n];
    let r2 = disc_radius * disc_radius;
    // bucket dots on a coarse grid so each event checks only nearby dots
    let cell = disc_radius.max(1.0);
    let cols = (640.0 / cell).ceil() as i64 + 1;
    let rows = (480.0 / cell).ceil() as i64 + 1;
    let mut buckets: Vec<Vec<u16>> = vec![Vec::new(); (cols * rows) as usize];
    for (i, &(x, y)) in centers.iter().enumerate() {
        let (bx, by) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
        if (0..cols).contains(&bx) && (0..rows).contains(&by) {
            buckets[(by * cols + bx) as usize].push(i as u16);
        }
    }
    let mut n_e = 0;
    for e in &frame.events {
        let (x, y) = (e.x as f64, e.y as f64);
        if window.is_some_and(|w| w.contains(x, y)) {
            continue;
        }
        n_e += 1;
        let (bx, by) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
        for gy in by - 1..=by + 1 {
            for gx in bx - 1..=bx + 1 {
                if !(0..cols).contains(&gx) || !(0..rows).contains(&gy) {
                    continue;
                }
                for &i in &buckets[(gy * cols + gx) as usize] {
                    let c = centers[i as usize];
                    if (x - c.0).powi(2) + (y - c.1).powi(2) < r2 {
                        e_c[i as usize] += 1;
                    }
                }
            }
        }
    }
    let d_c = centers.iter().zip(rest).map(|(c, r)| (c.0 - r.0).hypot(c.1 - r.1)).collect();
    FeatureFrame { t_end: frame.t_end, n_e, e_c, p_c: centers.to_vec(), d_c, image: None }
}

/// The seven per-dot input encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureConfig {
    NoHist,
    Hist10,
    EventsOnlyHist10,
    DispOnlyHist10,
    Hist20,
    Hist50Down5,
    FastSlowHist50,
}

impl FeatureConfig {
    pub const ALL: [FeatureConfig; 7] = [
        FeatureConfig::NoHist,
        FeatureConfig::Hist10,
        FeatureConfig::EventsOnlyHist10,
        FeatureConfig::DispOnlyHist10,
        FeatureConfig::Hist20,
        FeatureConfig::Hist50Down5,
        FeatureConfig::FastSlowHist50,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureConfig::NoHist => "no-hist",
            FeatureConfig::Hist10 => "hist-10",
            FeatureConfig::EventsOnlyHist10 => "events-only-hist-10",
            FeatureConfig::DispOnlyHist10 => "disp-only-hist-10",
            FeatureConfig::Hist20 => "hist-20",
            FeatureConfig::Hist50Down5 => "hist-50-down-5",
            FeatureConfig::FastSlowHist50 => "fast-slow-hist-50",
        }
    }

    /// Per-dot input length.
    pub fn input_len(self) -> usize {
        match self {
            FeatureConfig::NoHist => 2,
            FeatureConfig::Hist10 => 20,
            FeatureConfig::EventsOnlyHist10 | FeatureConfig::DispOnlyHist10 => 10,
            FeatureConfig::Hist20 => 40,
            FeatureConfig::Hist50Down5 => 20,
            FeatureConfig::FastSlowHist50 => 30,
        }
    }

    /// Number of past frames (including the current one) the encoding reads.
    pub fn history(self) -> usize {
        match self {
            FeatureConfig::NoHist => 1,
            FeatureConfig::Hist10 | FeatureConfig::EventsOnlyHist10 | FeatureConfig::DispOnlyHist10 => 10,
            FeatureConfig::Hist20 => 20,
            FeatureConfig::Hist50Down5 | FeatureConfig::FastSlowHist50 => 50,
        }
    }

    pub fn uses_disp(self) -> bool {
        self != FeatureConfig::EventsOnlyHist10
    }

    pub fn uses_events(self) -> bool {
        self != FeatureConfig::DispOnlyHist10
    }

    /// Encodes one signal; `at(l)` is the value `l` frames back.
    fn encode(self, at: impl Fn(usize) -> f64, out: &mut Vec<f32>) {
        match self {
            FeatureConfig::NoHist => out.push(at(0) as f32),
            FeatureConfig::Hist10 | FeatureConfig::EventsOnlyHist10 | FeatureConfig::DispOnlyHist10 => {
                out.extend((0..10).map(|l| at(l) as f32))
            }
            FeatureConfig::Hist20 => out.extend((0..20).map(|l| at(l) as f32)),
            FeatureConfig::Hist50Down5 => {
                for m in 0..10 {
                    out.push((0..5).map(|l| 0.2 * at(5 * m + l)).sum::<f64>() as f32);
                }
            }
            FeatureConfig::FastSlowHist50 => {
                out.extend((0..10).map(|l| at(l) as f32));
                for m in 0..5 {
                    out.push((0..10).map(|l| 0.1 * at(10 * m + l)).sum::<f64>() as f32);
                }
            }
        }
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureConfig::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownConfig(s.to_string()))
    }
}

/// Builds per-dot input vectors from a window of frames (oldest first, the
/// last one is the current frame). Layout: displacement part, then events.
pub fn history_features(window: &[FeatureFrame], config: FeatureConfig) -> Result<Vec<Vec<f32>>> {
    if window.len() < config.history() {
        return invalid(format!("{config} needs {} frames, got {}", config.history(), window.len()));
    }
    let last = window.len() - 1;
    let dots = window[last].d_c.len();
    Ok((0..dots)
        .map(|k| {
            let mut v = Vec::with_capacity(config.input_len());
            if config.uses_disp() {
                config.encode(|l| window[last - l].d_c[k], &mut v);
            }
            if config.uses_events() {
                config.encode(|l| window[last - l].e_c[k] as f64, &mut v);
            }
            v
        })
        .collect())
}

/// Rolling per-dot history for streaming use.
#[derive(Debug, Clone)]
pub struct FeatureHistory {
    capacity: usize,
    d: VecDeque<Vec<f64>>,
    e: VecDeque<Vec<u32>>,
}

impl FeatureHistory {
    pub fn new(capacity: usize) -> Self {
        FeatureHistory { capacity: capacity.max(1), d: VecDeque::new(), e: VecDeque::new() }
    }

    pub fn push(&mut self, f: &FeatureFrame) {
        if self.d.len() == self.capacity {
            self.d.pop_front();
            self.e.pop_front();
        }
        self.d.push_back(f.d_c.clone());
        self.e.push_back(f.e_c.clone());
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Flattened per-dot inputs (dot-major), or `None` while warming up.
    pub fn encode(&self, config: FeatureConfig, out: &mut Vec<f32>) -> bool {
        out.clear();
        if self.d.len() < config.history() {
            return false;
        }
        let last = self.d.len() - 1;
        let dots = self.d[last].len();
        for k in 0..dots {
            if config.uses_disp() {
                config.encode(|l| self.d[last - l][k], out);
            }
            if config.uses_events() {
                config.encode(|l| self.e[last - l][k] as f64, out);
            }
        }
        true
    }
}

pub fn features_csv(frames: &[FeatureFrame]) -> String {
    let mut s = String::from("tick,t_end_us,n_e,dot,e_c,x,y,d_c\n");
    for (i, f) in frames.iter().enumerate() {
        for k in 0..f.e_c.len() {
            s.push_str(&format!(
                "{i},{},{},{k},{},{:.4},{:.4},{:.4}\n",
                f.t_end, f.n_e, f.e_c[k], f.p_c[k].0, f.p_c[k].1, f.d_c[k]
            ));
        }
    }
    s
}
