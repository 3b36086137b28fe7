//! `.evtc` container: a fixed-width, little-endian frame stream.
//!
//! ```text
//! header : "EVTC" | version u8 | width u16 | height u16
//! frame  : t_end u64 | count u32 | count x (x u16 | y u16 | polarity u8)
//! ```
//!
//! Each event costs exactly 5 payload bytes. Sub-frame timestamps are not
//! stored; decoded events carry the start time of their frame.

use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, EventFrame, Polarity, FRAME_PERIOD_US, SENSOR_HEIGHT, SENSOR_WIDTH};

pub const MAGIC: &[u8; 4] = b"EVTC";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 2 + 2;
pub const FRAME_HEADER_BYTES: usize = 8 + 4;
pub const EVENT_BYTES: usize = 5;

pub fn encoded_len(frames: &[EventFrame]) -> usize {
    HEADER_BYTES
        + frames
            .iter()
            .map(|f| FRAME_HEADER_BYTES + EVENT_BYTES * f.events.len())
            .sum::<usize>()
}

pub fn encode_frames(frames: &[EventFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(frames));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&SENSOR_WIDTH.to_le_bytes());
    out.extend_from_slice(&SENSOR_HEIGHT.to_le_bytes());
    for f in frames {
        out.extend_from_slice(&f.t_end.to_le_bytes());
        out.extend_from_slice(&(f.events.len() as u32).to_le_bytes());
        for e in &f.events {
            out.extend_from_slice(&e.x.to_le_bytes());
            out.extend_from_slice(&e.y.to_le_bytes());
            out.push(match e.p {
                Polarity::Off => 0,
                Polarity::On => 1,
            });
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode(format!("truncated stream while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_frames(bytes: &[u8]) -> Result<Vec<EventFrame>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported version {version}")));
    }
    let width = cur.u16("width")?;
    let height = cur.u16("height")?;
    if width != SENSOR_WIDTH || height != SENSOR_HEIGHT {
        return Err(Error::Decode(format!("unexpected sensor size {width}x{height}")));
    }
    let mut frames = Vec::new();
    while cur.pos < bytes.len() {
        let t_end = cur.u64("frame time")?;
        let count = cur.u32("event count")? as usize;
        let payload = cur.take(count * EVENT_BYTES, "events")?;
        let t = t_end.saturating_sub(FRAME_PERIOD_US);
        let mut events = Vec::with_capacity(count);
        for chunk in payload.chunks_exact(EVENT_BYTES) {
            let x = u16::from_le_bytes([chunk[0], chunk[1]]);
            let y = u16::from_le_bytes([chunk[2], chunk[3]]);
            let p = match chunk[4] {
                0 => Polarity::Off,
                1 => Polarity::On,
                b => return Err(Error::Decode(format!("bad polarity byte {b}"))),
            };
            if x >= width || y >= height {
                return Err(Error::Decode(format!("event ({x}, {y}) outside sensor")));
            }
            events.push(Event { x, y, t, p });
        }
        frames.push(EventFrame { t_end, events });
    }
    Ok(frames)
}

pub fn read_file(path: &Path) -> Result<Vec<EventFrame>> {
    decode_frames(&std::fs::read(path)?)
}

pub fn write_file(path: &Path, frames: &[EventFrame]) -> Result<()> {
    crate::io::write_atomic(path, &encode_frames(frames))
}

/// Drops sub-frame timing so a frame compares equal to its decoded form.
pub fn quantize_timestamps(frame: &EventFrame) -> EventFrame {
    let t = frame.t_end.saturating_sub(FRAME_PERIOD_US);
    EventFrame {
        t_end: frame.t_end,
        events: frame.events.iter().map(|e| Event { t, ..*e }).collect(),
    }
}
