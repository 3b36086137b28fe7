//! Offline slip labels from the relative motion of the window and marker
//! regions, measured by block matching on event images 4 ms apart.

use crate::error::{Error, Result};
use crate::event::{EventFrame, SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::sim::{GridSpec, Rect};

pub const BLOCK: usize = 16;
pub const SEARCH: i32 = 8;
pub const LOOKAHEAD: usize = 4;
/// Frames rendered into one labeling image.
pub const IMAGE_FRAMES: usize = 5;
/// Relative flow (px per 4 ms) above which a tick is labeled as slip.
pub const DEFAULT_FLOW_THRESHOLD: f64 = 1.0;
/// Blocks with fewer active pixels carry no usable texture.
pub const MIN_BLOCK_PIXELS: u32 = 8;

const W: usize = SENSOR_WIDTH as usize;
const H: usize = SENSOR_HEIGHT as usize;
const WORDS: usize = W.div_ceil(64);

/// Event image as two bit planes (on, off), one row of `u64` words per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitImage {
    on: Vec<u64>,
    off: Vec<u64>,
}

impl BitImage {
    pub fn blank() -> Self {
        BitImage { on: vec![0; WORDS * H], off: vec![0; WORDS * H] }
    }

    /// Renders `frames` in order; a later event overwrites an earlier one at
    /// the same pixel.
    pub fn render(frames: &[EventFrame]) -> Self {
        let mut img = Self::blank();
        for f in frames {
            for e in &f.events {
                let i = e.y as usize * WORDS + e.x as usize / 64;
                let bit = 1u64 << (e.x % 64);
                if e.p.sign() > 0 {
                    img.on[i] |= bit;
                    img.off[i] &= !bit;
                } else {
                    img.off[i] |= bit;
                    img.on[i] &= !bit;
                }
            }
        }
        img
    }

    pub fn get(&self, x: usize, y: usize) -> i8 {
        let i = y * WORDS + x / 64;
        let bit = 1u64 << (x % 64);
        if self.on[i] & bit != 0 {
            1
        } else if self.off[i] & bit != 0 {
            -1
        } else {
            0
        }
    }

    /// 16 bits starting at column `x` of row `y`; outside the image reads 0.
    fn strip(plane: &[u64], x: i32, y: i32) -> u32 {
        if y < 0 || y >= H as i32 {
            return 0;
        }
        let row = &plane[y as usize * WORDS..(y as usize + 1) * WORDS];
        if x >= 0 && x + 16 <= W as i32 {
            let (w, o) = ((x / 64) as usize, (x % 64) as u32);
            let mut v = row[w] >> o;
            if o > 48 {
                v |= row[w + 1] << (64 - o);
            }
            return (v & 0xffff) as u32;
        }
        let mut v = 0;
        for b in 0..16 {
            let xx = x + b;
            if xx >= 0 && xx < W as i32 && row[xx as usize / 64] >> (xx % 64) & 1 == 1 {
                v |= 1 << b;
            }
        }
        v
    }
}

/// Displacement of the block at `(bx, by)` from `a` to `b` minimizing the sum
/// of absolute trit differences; ties go to the smaller displacement. `None`
/// when the block in `a` has too few active pixels.
pub fn block_flow(a: &BitImage, b: &BitImage, bx: usize, by: usize) -> Option<(i32, i32)> {
    let n = BLOCK as i32;
    let (bx, by) = (bx as i32, by as i32);
    let mut a_on = [0u32; BLOCK];
    let mut a_off = [0u32; BLOCK];
    let mut active = 0;
    for r in 0..n {
        a_on[r as usize] = BitImage::strip(&a.on, bx, by + r);
        a_off[r as usize] = BitImage::strip(&a.off, bx, by + r);
        active += (a_on[r as usize] | a_off[r as usize]).count_ones();
    }
    if active < MIN_BLOCK_PIXELS {
        return None;
    }
    let span = (2 * SEARCH + 1) as usize;
    let rows = BLOCK + 2 * SEARCH as usize;
    // strips of b for every row of the search area and every horizontal shift
    let mut b_on = vec![0u32; rows * span];
    let mut b_off = vec![0u32; rows * span];
    for r in 0..rows {
        for (k, dx) in (-SEARCH..=SEARCH).enumerate() {
            let y = by - SEARCH + r as i32;
            b_on[r * span + k] = BitImage::strip(&b.on, bx + dx, y);
            b_off[r * span + k] = BitImage::strip(&b.off, bx + dx, y);
        }
    }
    let mut best: Option<(u32, i32, (i32, i32))> = None;
    for dy in -SEARCH..=SEARCH {
        for (k, dx) in (-SEARCH..=SEARCH).enumerate() {
            let mut sad = 0;
            for r in 0..BLOCK {
                let row = (r as i32 + dy + SEARCH) as usize;
                let (bo, bf) = (b_on[row * span + k], b_off[row * span + k]);
                // |a - b| over trits: 2 where the signs oppose, 1 where one is 0
                let diff_on = a_on[r] ^ bo;
                let diff_off = a_off[r] ^ bf;
                sad += diff_on.count_ones() + diff_off.count_ones();
            }
            let d2 = dx * dx + dy * dy;
            let better = match best {
                None => true,
                Some((s, bd2, _)) => sad < s || (sad == s && d2 < bd2),
            };
            if better {
                best = Some((sad, d2, (dx, dy)));
            }
        }
    }
    best.map(|(_, _, d)| d)
}

/// Mean flow vector over the blocks tiling `region` and the number of blocks
/// that carried texture.
pub fn region_flow(a: &BitImage, b: &BitImage, region: &Rect) -> ((f64, f64), usize) {
    let x0 = region.x0.ceil().max(0.0) as usize;
    let y0 = region.y0.ceil().max(0.0) as usize;
    let x1 = (region.x1.floor() as usize).min(W);
    let y1 = (region.y1.floor() as usize).min(H);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    let mut by = y0;
    while by + BLOCK <= y1 {
        let mut bx = x0;
        while bx + BLOCK <= x1 {
            if let Some((dx, dy)) = block_flow(a, b, bx, by) {
                sx += dx as f64;
                sy += dy as f64;
                n += 1;
            }
            bx += BLOCK;
        }
        by += BLOCK;
    }
    if n == 0 {
        ((0.0, 0.0), 0)
    } else {
        ((sx / n as f64, sy / n as f64), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLabel {
    pub slip: bool,
    /// Mean flow magnitude (px per 4 ms) in the window and marker regions.
    pub window_flow: f64,
    pub marker_flow: f64,
}

/// Slip iff the window moves faster than the markers by more than `threshold`.
pub fn criterion(window_flow: f64, marker_flow: f64, threshold: f64) -> bool {
    window_flow - marker_flow > threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLabeler {
    pub window: Rect,
    pub marker: Rect,
    pub threshold: f64,
}

impl FlowLabeler {
    pub fn new(window: Option<Rect>, marker: Rect, threshold: f64) -> Result<Self> {
        let window = window.ok_or_else(|| Error::Labeling("scene has no window region".into()))?;
        Ok(FlowLabeler { window, marker, threshold })
    }

    /// Labeler for a gel with a cut column: the marker region spans the dot
    /// lattice up to the window.
    pub fn for_grid(grid: &GridSpec, threshold: f64) -> Result<Self> {
        let window = grid.window().ok_or_else(|| Error::Labeling("grid has no window region".into()))?;
        let rest = grid.rest_positions();
        let half = grid.spacing / 2.0;
        let xmin = rest.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - half;
        let marker = Rect { x0: xmin.max(0.0), y0: window.y0, x1: window.x0 - 2.0, y1: window.y1 };
        Self::new(Some(window), marker, threshold)
    }

    pub fn label_images(&self, now: &BitImage, ahead: &BitImage) -> FlowLabel {
        let (w, _) = region_flow(now, ahead, &self.window);
        let (m, _) = region_flow(now, ahead, &self.marker);
        let window_flow = w.0.hypot(w.1);
        let marker_flow = m.0.hypot(m.1);
        FlowLabel { slip: criterion(window_flow, marker_flow, self.threshold), window_flow, marker_flow }
    }

    /// Label of tick `t` given frames `t - 4 ..= t + 4` (nine frames).
    pub fn label_window(&self, frames: &[EventFrame]) -> Result<FlowLabel> {
        let need = IMAGE_FRAMES + LOOKAHEAD;
        if frames.len() != need {
            return Err(Error::Labeling(format!("labeling needs {need} frames, got {}", frames.len())));
        }
        let now = BitImage::render(&frames[..IMAGE_FRAMES]);
        let ahead = BitImage::render(&frames[LOOKAHEAD..]);
        Ok(self.label_images(&now, &ahead))
    }

    /// Labels every tick of a recording that has 4 ms of future frames. The
    /// first ticks use as many past frames as exist.
    pub fn label(&self, frames: &[EventFrame]) -> Vec<FlowLabel> {
        let n = frames.len().saturating_sub(LOOKAHEAD);
        (0..n)
            .map(|t| {
                let start = (t + 1).saturating_sub(IMAGE_FRAMES);
                let now = BitImage::render(&frames[start..=t]);
                let ahead_start = (t + LOOKAHEAD + 1).saturating_sub(IMAGE_FRAMES);
                let ahead = BitImage::render(&frames[ahead_start..=t + LOOKAHEAD]);
                self.label_images(&now, &ahead)
            })
            .collect()
    }
}

/// First tick labeled as slip.
pub fn first_slip(labels: &[bool]) -> Option<usize> {
    labels.iter().position(|&s| s)
}

/// Fraction of ticks on which two label sequences agree.
pub fn agreement(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    fn textured(dx: i32, dy: i32, region: &Rect) -> EventFrame {
        let mut ev = Vec::new();
        for y in region.y0 as i32..region.y1 as i32 {
            for x in region.x0 as i32..region.x1 as i32 {
                let (u, v) = (x - dx, y - dy);
                // deterministic pseudo-random texture
                let h = (u.wrapping_mul(73856093) ^ v.wrapping_mul(19349663)) as u32;
                if h % 7 == 0 && (0..640).contains(&x) && (0..480).contains(&y) {
                    let p = if h % 2 == 0 { Polarity::On } else { Polarity::Off };
                    ev.push(Event { x: x as u16, y: y as u16, t: 500, p });
                }
            }
        }
        ev.sort_by_key(|e| e.t);
        EventFrame { t_end: 1000, events: ev }
    }

    fn regions() -> (Rect, Rect) {
        (Rect { x0: 400.0, y0: 100.0, x1: 464.0, y1: 196.0 }, Rect { x0: 100.0, y0: 100.0, x1: 196.0, y1: 196.0 })
    }

    #[test]
    fn block_flow_finds_known_shift() {
        let r = Rect { x0: 80.0, y0: 80.0, x1: 200.0, y1: 200.0 };
        let a = BitImage::render(&[textured(0, 0, &r)]);
        let b = BitImage::render(&[textured(3, -2, &r)]);
        assert_eq!(block_flow(&a, &b, 112, 112), Some((3, -2)));
        assert_eq!(block_flow(&a, &a, 112, 112), Some((0, 0)));
        assert_eq!(block_flow(&BitImage::blank(), &b, 112, 112), None);
    }

    #[test]
    fn no_flow_means_no_slip() {
        let (w, m) = regions();
        let l = FlowLabeler::new(Some(w), m, 1.0).unwrap();
        let lab = l.label_images(&BitImage::blank(), &BitImage::blank());
        assert!(!lab.slip);
        assert_eq!((lab.window_flow, lab.marker_flow), (0.0, 0.0));
    }

    #[test]
    fn common_motion_is_not_slip() {
        let (w, m) = regions();
        let all = Rect { x0: 60.0, y0: 60.0, x1: 500.0, y1: 240.0 };
        let a = BitImage::render(&[textured(0, 0, &all)]);
        let b = BitImage::render(&[textured(0, 4, &all)]);
        let l = FlowLabeler::new(Some(w), m, 1.0).unwrap();
        let lab = l.label_images(&a, &b);
        assert!((lab.window_flow - 4.0).abs() < 1e-9 && (lab.marker_flow - 4.0).abs() < 1e-9);
        assert!(!lab.slip);
    }

    #[test]
    fn window_motion_alone_is_slip() {
        let (w, m) = regions();
        let wide = Rect { x0: w.x0 - 20.0, y0: w.y0 - 20.0, x1: w.x1 + 20.0, y1: w.y1 + 20.0 };
        let mut a = textured(0, 0, &wide);
        let mut b = textured(0, 5, &wide);
        let still = textured(0, 0, &Rect { x0: m.x0 - 20.0, y0: m.y0 - 20.0, x1: m.x1 + 20.0, y1: m.y1 + 20.0 });
        a.events.extend(still.events.iter().copied());
        b.events.extend(still.events.iter().copied());
        let l = FlowLabeler::new(Some(w), m, 1.0).unwrap();
        let lab = l.label_images(&BitImage::render(&[a]), &BitImage::render(&[b]));
        assert!((lab.window_flow - 5.0).abs() < 1e-9);
        assert_eq!(lab.marker_flow, 0.0);
        assert!(lab.slip);
    }

    #[test]
    fn criterion_arithmetic() {
        assert!(criterion(5.0, 0.0, 1.0));
        assert!(!criterion(3.0, 3.0, 1.0));
        assert!(!criterion(0.0, 0.0, 1.0));
    }

    #[test]
    fn missing_window_is_an_error() {
        assert!(matches!(FlowLabeler::for_grid(&GridSpec::default(), 1.0), Err(Error::Labeling(_))));
        assert!(FlowLabeler::for_grid(&GridSpec::cut(), 1.0).is_ok());
    }

    #[test]
    fn strip_reads_across_words_and_edges() {
        let f = EventFrame {
            t_end: 1000,
            events: vec![
                Event { x: 63, y: 0, t: 1, p: Polarity::On },
                Event { x: 64, y: 0, t: 2, p: Polarity::On },
                Event { x: 639, y: 0, t: 3, p: Polarity::Off },
            ],
        };
        let img = BitImage::render(&[f]);
        assert_eq!(BitImage::strip(&img.on, 60, 0), 0b11000);
        assert_eq!(BitImage::strip(&img.off, 630, 0), 1 << 9);
        assert_eq!(BitImage::strip(&img.on, -10, 0), 0);
        assert_eq!(img.get(639, 0), -1);
    }
}
