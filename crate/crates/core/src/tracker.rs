//! Event-driven dot tracker.
//!
//! Each dot center descends the gradient of the squared distance between its
//! rim circle and the events in a ring around it, plus a penalty that keeps
//! neighbor distances close to their rest values.

use crate::error::{invalid, Result};
use crate::event::EventFrame;
use crate::sim::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub alpha: f64,
    pub w_dist: f64,
    /// A dot moves only with more than this many events.
    pub gate: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { ring_inner: 10.0, ring_outer: 20.0, alpha: DEFAULT_ALPHA, w_dist: DEFAULT_W_DIST, gate: 10 }
    }
}

pub const DEFAULT_ALPHA: f64 = 0.001;
pub const DEFAULT_W_DIST: f64 = 0.0045;

impl TrackerConfig {
    pub fn unregularized() -> Self {
        TrackerConfig { w_dist: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ring_inner > 0.0 && self.ring_inner < self.ring_outer) {
            return invalid("ring radii must satisfy 0 < inner < outer");
        }
        if !(self.alpha > 0.0) || !(self.w_dist >= 0.0) {
            return invalid("alpha must be positive and w_dist non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotState {
    pub id: usize,
    pub rest: (f64, f64),
    pub center: (f64, f64),
    pub radius: f64,
    /// Neighbor ids with their rest distance (px).
    pub neighbors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotGrid {
    pub dots: Vec<DotState>,
}

impl DotGrid {
    /// Dots at rest with an 8-connected neighbor graph over the grid cells.
    pub fn from_grid(grid: &GridSpec) -> Self {
        let cells = grid.cells();
        let rest = grid.rest_positions();
        let dots = cells
            .iter()
            .enumerate()
            .map(|(i, &(r, _, c))| {
                let neighbors = cells
                    .iter()
                    .enumerate()
                    .filter(|&(j, &(r2, _, c2))| j != i && r.abs_diff(r2) <= 1 && c.abs_diff(c2) <= 1)
                    .map(|(j, _)| (j, dist(rest[i], rest[j])))
                    .collect();
                DotState { id: i, rest: rest[i], center: rest[i], radius: grid.radius, neighbors }
            })
            .collect();
        DotGrid { dots }
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.dots.iter().map(|d| d.center).collect()
    }

    pub fn len(&self) -> usize {
        self.dots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dots.is_empty()
    }

    pub fn reset(&mut self) {
        for d in &mut self.dots {
            d.center = d.rest;
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Uniform bucket grid over dot centers for ring lookups.
#[derive(Debug, Clone, Default)]
struct Buckets {
    cell: f64,
    cols: usize,
    rows: usize,
    heads: Vec<Vec<u32>>,
}

impl Buckets {
    fn rebuild(&mut self, centers: &[(f64, f64)], cell: f64) {
        self.cell = cell;
        self.cols = (640.0 / cell).ceil() as usize + 1;
        self.rows = (480.0 / cell).ceil() as usize + 1;
        self.heads.resize(self.cols * self.rows, Vec::new());
        self.heads.iter_mut().for_each(Vec::clear);
        for (i, &(x, y)) in centers.iter().enumerate() {
            if let Some(k) = self.index(x, y) {
                self.heads[k].push(i as u32);
            }
        }
    }

    fn index(&self, x: f64, y: f64) -> Option<usize> {
        let (cx, cy) = ((x / self.cell).floor(), (y / self.cell).floor());
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f64 || cy >= self.rows as f64 {
            return None;
        }
        Some(cy as usize * self.cols + cx as usize)
    }
}

/// Assigns each event to the dot whose ring contains it; when rings overlap
/// the nearest center wins. Returns event indices per dot.
pub fn assign_events(frame: &EventFrame, centers: &[(f64, f64)], cfg: &TrackerConfig) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); centers.len()];
    let mut b = Buckets::default();
    b.rebuild(centers, cfg.ring_outer);
    assign_with(frame, centers, cfg, &b, &mut out);
    out
}

fn assign_with(frame: &EventFrame, centers: &[(f64, f64)], cfg: &TrackerConfig, b: &Buckets, out: &mut [Vec<usize>]) {
    let (r_in2, r_out2) = (cfg.ring_inner * cfg.ring_inner, cfg.ring_outer * cfg.ring_outer);
    for (k, e) in frame.events.iter().enumerate() {
        let (x, y) = (e.x as f64, e.y as f64);
        let (cx, cy) = ((x / b.cell).floor() as i64, (y / b.cell).floor() as i64);
        let mut best: Option<(f64, usize)> = None;
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                if gx < 0 || gy < 0 || gx >= b.cols as i64 || gy >= b.rows as i64 {
                    continue;
                }
                for &i in &b.heads[gy as usize * b.cols + gx as usize] {
                    let c = centers[i as usize];
                    let d2 = (x - c.0).powi(2) + (y - c.1).powi(2);
                    if d2 > r_in2 && d2 < r_out2 && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && (i as usize) < bi)) {
                        best = Some((d2, i as usize));
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            out[i].push(k);
        }
    }
}

/// Gradient step for one dot. `rel_events` are event positions relative to
/// the dot's current center; `neighbor_centers` follow `dot.neighbors`.
pub fn update_dot(
    dot: &DotState,
    rel_events: &[(f64, f64)],
    neighbor_centers: &[(f64, f64)],
    cfg: &TrackerConfig,
) -> (f64, f64) {
    if rel_events.len() <= cfg.gate {
        return dot.center;
    }
    let r = dot.radius;
    let (mut gx, mut gy) = (0.0, 0.0);
    for &(x, y) in rel_events {
        let n = x.hypot(y);
        if n == 0.0 {
            continue;
        }
        gx += -2.0 * (x - r * x / n);
        gy += -2.0 * (y - r * y / n);
    }
    if cfg.w_dist > 0.0 && !dot.neighbors.is_empty() {
        let (c0, c1) = dot.center;
        let (mut rx, mut ry) = (0.0, 0.0);
        for (&(_, d), &(nx, ny)) in dot.neighbors.iter().zip(neighbor_centers) {
            let (dx, dy) = (c0 - nx, c1 - ny);
            // the penalty compares squared distances
            let k = 4.0 * (dx * dx + dy * dy - d * d);
            rx += k * dx;
            ry += k * dy;
        }
        let scale = cfg.w_dist * 8.0 / dot.neighbors.len() as f64;
        gx += scale * rx;
        gy += scale * ry;
    }
    (dot.center.0 - cfg.alpha * gx, dot.center.1 - cfg.alpha * gy)
}

/// Streaming tracker: one call to [`Tracker::step`] per readout frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub grid: DotGrid,
    pub cfg: TrackerConfig,
    buckets: Buckets,
    assigned: Vec<Vec<usize>>,
    rel: Vec<(f64, f64)>,
    nbr: Vec<(f64, f64)>,
    next: Vec<(f64, f64)>,
    last_t: Option<u64>,
}

impl Tracker {
    pub fn new(grid: DotGrid, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.len();
        Ok(Tracker {
            grid,
            cfg,
            buckets: Buckets::default(),
            assigned: vec![Vec::new(); n],
            rel: Vec::new(),
            nbr: Vec::new(),
            next: vec![(0.0, 0.0); n],
            last_t: None,
        })
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.grid.centers()
    }

    /// Events assigned to each dot in the last processed frame.
    pub fn assigned(&self) -> &[Vec<usize>] {
        &self.assigned
    }

    pub fn step(&mut self, frame: &EventFrame) -> Result<()> {
        if let Some(t) = self.last_t {
            if frame.t_end <= t {
                return invalid(format!("frame at {} us after frame at {t} us", frame.t_end));
            }
        }
        self.last_t = Some(frame.t_end);
        let centers = self.grid.centers();
        self.buckets.rebuild(&centers, self.cfg.ring_outer);
        self.assigned.iter_mut().for_each(Vec::clear);
        assign_with(frame, &centers, &self.cfg, &self.buckets, &mut self.assigned);
        for (i, dot) in self.grid.dots.iter().enumerate() {
            let idx = &self.assigned[i];
            if idx.len() <= self.cfg.gate {
                self.next[i] = dot.center;
                continue;
            }
            self.rel.clear();
            self.rel.extend(idx.iter().map(|&k| {
                let e = &frame.events[k];
                (e.x as f64 - dot.center.0, e.y as f64 - dot.center.1)
            }));
            self.nbr.clear();
            self.nbr.extend(dot.neighbors.iter().map(|&(j, _)| centers[j]));
            self.next[i] = update_dot(dot, &self.rel, &self.nbr, &self.cfg);
        }
        for (d, &c) in self.grid.dots.iter_mut().zip(&self.next) {
            d.center = c;
        }
        Ok(())
    }
}

/// Tracks all frames from rest; returns the centers after every frame.
pub fn track(frames: &[EventFrame], grid: &DotGrid, cfg: &TrackerConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut g = grid.clone();
    g.reset();
    let mut t = Tracker::new(g, cfg.clone())?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        t.step(f)?;
        out.push(t.centers());
    }
    Ok(out)
}

pub const ENDPOINT_RADIUS: f64 = 20.0;

/// Number of dots farther than `radius` from their rest position.
pub fn lost_dots(centers: &[(f64, f64)], rest: &[(f64, f64)], radius: f64) -> usize {
    centers.iter().zip(rest).filter(|(c, r)| dist(**c, **r) > radius).count()
}

/// A trajectory is endpoint consistent when every dot ends near its rest position.
pub fn endpoint_success(centers: &[(f64, f64)], rest: &[(f64, f64)]) -> bool {
    lost_dots(centers, rest, ENDPOINT_RADIUS) == 0
}

/// Per-dot root-mean-square error between tracked and true centers.
pub fn rms_error(tracked: &[Vec<(f64, f64)>], truth: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let n = tracked.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; n];
    for (a, b) in tracked.iter().zip(truth) {
        for (k, (p, q)) in a.iter().zip(b).enumerate() {
            acc[k] += (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
        }
    }
    let m = tracked.len().min(truth.len()).max(1) as f64;
    acc.into_iter().map(|s| (s / m).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    fn ev(x: u16, y: u16) -> Event {
        Event { x, y, t: 0, p: Polarity::On }
    }

    #[test]
    fn event_at_center_is_unassigned() {
        let f = EventFrame { t_end: 1000, events: vec![ev(100, 100)] };
        let a = assign_events(&f, &[(100.0, 100.0)], &TrackerConfig::default());
        assert!(a[0].is_empty());
    }

    #[test]
    fn ring_event_is_assigned() {
        let f = EventFrame { t_end: 1000, events: vec![ev(115, 100)] };
        let a = assign_events(&f, &[(100.0, 100.0), (200.0, 100.0)], &TrackerConfig::default());
        assert_eq!(a, vec![vec![0], vec![]]);
    }

    #[test]
    fn overlapping_rings_pick_nearest() {
        let f = EventFrame { t_end: 1000, events: vec![ev(112, 100)] };
        let a = assign_events(&f, &[(100.0, 100.0), (126.0, 100.0)], &TrackerConfig::default());
        assert_eq!(a, vec![vec![0], vec![]]);
    }

    fn lone_dot() -> DotState {
        DotState { id: 0, rest: (0.0, 0.0), center: (0.0, 0.0), radius: 15.0, neighbors: vec![] }
    }

    #[test]
    fn gated_update_is_identity() {
        let cfg = TrackerConfig::default();
        let d = lone_dot();
        assert_eq!(update_dot(&d, &[(12.0, 0.0); 5], &[], &cfg), d.center);
    }

    #[test]
    fn hand_evaluated_update() {
        let cfg = TrackerConfig { alpha: 1.0 / 22.0, w_dist: 0.0, ..Default::default() };
        let c = update_dot(&lone_dot(), &[(12.0, 0.0); 11], &[], &cfg);
        assert!((c.0 + 3.0).abs() < 1e-12 && c.1 == 0.0);
    }

    #[test]
    fn neighbors_at_rest_distance_do_not_pull() {
        let cfg = TrackerConfig { w_dist: 1.0, ..Default::default() };
        let mut d = lone_dot();
        d.neighbors = vec![(1, 55.0), (2, 55.0)];
        // events symmetric around the rim give zero data gradient
        let ev: Vec<_> = (0..12).map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 12.0;
            (15.0 * a.cos(), 15.0 * a.sin())
        }).collect();
        let c = update_dot(&d, &ev, &[(55.0, 0.0), (0.0, -55.0)], &cfg);
        assert!(c.0.abs() < 1e-9 && c.1.abs() < 1e-9);
    }

    #[test]
    fn grid_neighbors_are_8_connected() {
        let g = DotGrid::from_grid(&GridSpec::default());
        for d in &g.dots {
            assert!((3..=8).contains(&d.neighbors.len()));
        }
        assert_eq!(g.dots[0].neighbors.len(), 3);
        assert_eq!(g.dots[9].neighbors.len(), 8);
    }

    #[test]
    fn non_monotone_frames_rejected() {
        let g = DotGrid::from_grid(&GridSpec::default());
        let frames = vec![EventFrame::empty(2000), EventFrame::empty(1000)];
        assert!(track(&frames, &g, &TrackerConfig::default()).is_err());
    }

    #[test]
    fn empty_frames_keep_positions() {
        let g = DotGrid::from_grid(&GridSpec::default());
        let frames: Vec<_> = (1..=20).map(|i| EventFrame::empty(i * 1000)).collect();
        let out = track(&frames, &g, &TrackerConfig::default()).unwrap();
        assert!(out.iter().all(|c| *c == g.centers()));
    }
}
