//! Event-stream versus RGB-frame data-rate accounting.

use crate::codec::EVENT_BYTES;
use crate::error::{invalid, Result};
use crate::event::{EventFrame, FRAME_PERIOD_US};

#[derive(Debug, Clone, PartialEq)]
pub struct DataRateReport {
    pub start_us: u64,
    pub end_us: u64,
    pub event_count: u64,
    pub event_bytes: u64,
    pub rgb_frame_bytes: u64,
    pub rgb_bytes: f64,
    /// event bytes / RGB bytes over the interval.
    pub ratio: f64,
}

impl DataRateReport {
    pub fn duration_s(&self) -> f64 {
        (self.end_us - self.start_us) as f64 * 1e-6
    }

    pub fn to_text(&self) -> String {
        format!(
            "interval: {:.3} s .. {:.3} s\nevents: {}\nevent bytes: {}\nrgb frame bytes: {}\nrgb bytes: {:.0}\nratio: {:.6}\n",
            self.start_us as f64 * 1e-6,
            self.end_us as f64 * 1e-6,
            self.event_count,
            self.event_bytes,
            self.rgb_frame_bytes,
            self.rgb_bytes,
            self.ratio
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "start_s,end_s,events,event_bytes,rgb_bytes,ratio\n{},{},{},{},{},{}\n",
            self.start_us as f64 * 1e-6,
            self.end_us as f64 * 1e-6,
            self.event_count,
            self.event_bytes,
            self.rgb_bytes,
            self.ratio
        )
    }
}

/// Bytes of one uncompressed RGB frame.
pub fn rgb_frame_bytes(width: u32, height: u32) -> u64 {
    width as u64 * height as u64 * 3
}

/// Compares the event payload over `[start_us, end_us)` (whole frames whose
/// accumulation window lies in the interval) with an RGB stream of the given
/// size and rate over the same span.
pub fn data_rate_report(
    frames: &[EventFrame],
    rgb_width: u32,
    rgb_height: u32,
    rgb_hz: f64,
    start_us: u64,
    end_us: u64,
) -> Result<DataRateReport> {
    if end_us <= start_us {
        return invalid("data-rate interval must have positive length");
    }
    if rgb_hz <= 0.0 {
        return invalid("rgb rate must be positive");
    }
    if let (Some(first), Some(last)) = (frames.first(), frames.last()) {
        let rec_start = first.t_end.saturating_sub(FRAME_PERIOD_US);
        if start_us < rec_start || end_us > last.t_end {
            return invalid(format!(
                "interval [{start_us}, {end_us}) outside recording [{rec_start}, {})",
                last.t_end
            ));
        }
    }
    let event_count: u64 = frames
        .iter()
        .filter(|f| f.t_end > start_us && f.t_end <= end_us)
        .map(|f| f.events.len() as u64)
        .sum();
    let event_bytes = EVENT_BYTES as u64 * event_count;
    let frame_bytes = rgb_frame_bytes(rgb_width, rgb_height);
    let duration = (end_us - start_us) as f64 * 1e-6;
    let rgb_bytes = frame_bytes as f64 * rgb_hz * duration;
    Ok(DataRateReport {
        start_us,
        end_us,
        event_count,
        event_bytes,
        rgb_frame_bytes: frame_bytes,
        rgb_bytes,
        ratio: event_bytes as f64 / rgb_bytes,
    })
}
