//! Event and frame types plus image-form rendering.

use crate::error::{invalid, Error, Result};

pub const SENSOR_WIDTH: u16 = 640;
pub const SENSOR_HEIGHT: u16 = 480;

/// Readout period of one frame in microseconds (1 kHz).
pub const FRAME_PERIOD_US: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    /// Signed value in {-1, +1}.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_sign(s: i8) -> Result<Self> {
        match s {
            -1 => Ok(Polarity::Off),
            1 => Ok(Polarity::On),
            other => invalid(format!("polarity must be -1 or +1, got {other}")),
        }
    }
}

/// A single brightness-change event at pixel (x, y), time `t` in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Result<Self> {
        if x >= SENSOR_WIDTH || y >= SENSOR_HEIGHT {
            return invalid(format!("event ({x}, {y}) outside the sensor"));
        }
        Ok(Event { x, y, t, p })
    }
}

/// All events accumulated over the millisecond ending at `t_end` (exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventFrame {
    pub t_end: u64,
    pub events: Vec<Event>,
}

impl EventFrame {
    pub fn empty(t_end: u64) -> Self {
        EventFrame { t_end, events: Vec::new() }
    }

    /// Builds a frame, checking the accumulation window and time ordering.
    pub fn new(t_end: u64, events: Vec<Event>) -> Result<Self> {
        let frame = EventFrame { t_end, events };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let start = self.t_end.saturating_sub(FRAME_PERIOD_US);
        let mut last = 0u64;
        for e in &self.events {
            if e.x >= SENSOR_WIDTH || e.y >= SENSOR_HEIGHT {
                return invalid(format!("event ({}, {}) outside the sensor", e.x, e.y));
            }
            if e.t < start || e.t >= self.t_end {
                return invalid(format!(
                    "event at {} us outside frame window [{start}, {})",
                    e.t, self.t_end
                ));
            }
            if e.t < last {
                return invalid("events not sorted by time");
            }
            last = e.t;
        }
        Ok(())
    }

    /// N_E: number of events in the frame.
    pub fn count(&self) -> usize {
        self.events.len()
    }
}

/// Per-pixel trit image: -1 off-event, 0 none, +1 on-event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventImage {
    pub width: u16,
    pub height: u16,
    values: Vec<i8>,
}

impl EventImage {
    pub fn blank() -> Self {
        EventImage {
            width: SENSOR_WIDTH,
            height: SENSOR_HEIGHT,
            values: vec![0; SENSOR_WIDTH as usize * SENSOR_HEIGHT as usize],
        }
    }

    pub fn get(&self, x: u16, y: u16) -> i8 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0).count()
    }

    fn paint(&mut self, frame: &EventFrame) {
        for e in &frame.events {
            self.values[e.y as usize * self.width as usize + e.x as usize] = e.p.sign();
        }
    }
}

/// Renders the last `window` frames into one image. Later events overwrite
/// earlier ones at the same pixel.
pub fn render_image(frames: &[EventFrame], window: usize) -> Result<EventImage> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to render".into()));
    }
    if window == 0 {
        return invalid("render window must be at least one frame");
    }
    let mut img = EventImage::blank();
    let start = frames.len().saturating_sub(window);
    for f in &frames[start..] {
        img.paint(f);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: u16, y: u16, t: u64, p: Polarity) -> Event {
        Event::new(x, y, t, p).unwrap()
    }

    #[test]
    fn empty_frame_renders_blank() {
        let img = render_image(&[EventFrame::empty(1000)], 1).unwrap();
        assert_eq!(img.count_nonzero(), 0);
        assert_eq!((img.width, img.height), (640, 480));
    }

    #[test]
    fn single_on_event() {
        let f = EventFrame::new(1000, vec![ev(10, 10, 500, Polarity::On)]).unwrap();
        let img = render_image(&[f], 1).unwrap();
        assert_eq!(img.count_nonzero(), 1);
        assert_eq!(img.get(10, 10), 1);
    }

    #[test]
    fn last_writer_wins_across_frames() {
        let a = EventFrame::new(1000, vec![ev(3, 4, 100, Polarity::Off)]).unwrap();
        let b = EventFrame::new(2000, vec![ev(3, 4, 1100, Polarity::On)]).unwrap();
        let img = render_image(&[a.clone(), b.clone()], 2).unwrap();
        assert_eq!(img.get(3, 4), 1);
        // reversed order: off written last
        let c = EventFrame::new(3000, vec![ev(3, 4, 2100, Polarity::Off)]).unwrap();
        let img = render_image(&[b, c], 2).unwrap();
        assert_eq!(img.get(3, 4), -1);
    }

    #[test]
    fn window_limits_frames() {
        let a = EventFrame::new(1000, vec![ev(1, 1, 0, Polarity::On)]).unwrap();
        let b = EventFrame::empty(2000);
        let img = render_image(&[a, b], 1).unwrap();
        assert_eq!(img.count_nonzero(), 0);
    }

    #[test]
    fn render_is_idempotent() {
        let a = EventFrame::new(1000, vec![ev(1, 1, 0, Polarity::On), ev(5, 9, 10, Polarity::Off)])
            .unwrap();
        let frames = vec![a];
        assert_eq!(render_image(&frames, 3).unwrap(), render_image(&frames, 3).unwrap());
    }

    #[test]
    fn rejects_empty_and_bad_events() {
        assert!(render_image(&[], 1).is_err());
        assert!(Event::new(640, 0, 0, Polarity::On).is_err());
        assert!(EventFrame::new(1000, vec![ev(0, 0, 1000, Polarity::On)]).is_err());
        assert!(EventFrame::new(
            2000,
            vec![ev(0, 0, 1500, Polarity::On), ev(0, 0, 1200, Polarity::On)]
        )
        .is_err());
        assert!(Polarity::from_sign(0).is_err());
    }
}
