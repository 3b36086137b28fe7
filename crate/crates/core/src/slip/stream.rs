//! Streaming slip inference at 1 kHz and the shared slip counter.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::eval::flag;
use super::model::{LatticeMap, SlipArch, SlipModel};
use crate::error::{Error, Result};
use crate::event::EventFrame;
use crate::features::{extract, FeatureConfig, FeatureFrame, FeatureHistory, DOT_DISC_RADIUS};
use crate::sim::{GridSpec, Rect};
use crate::tracker::{DotGrid, Tracker, TrackerConfig};

pub const TICK_BUDGET: Duration = Duration::from_millis(1);

/// Count of positive slip ticks. Only ever incremented; cloning shares it.
#[derive(Debug, Clone, Default)]
pub struct SlipCounter(Arc<AtomicU64>);

impl SlipCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::AcqRel);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Acquire)
    }
}

/// Per-dot model fed one feature frame per tick.
pub struct SlipStream {
    model: SlipModel,
    config: FeatureConfig,
    map: LatticeMap,
    history: FeatureHistory,
    enc: Vec<f32>,
    input: Vec<f64>,
    counter: SlipCounter,
}

impl SlipStream {
    pub fn new(model: SlipModel, grid: &GridSpec, counter: SlipCounter) -> Result<Self> {
        let config = match model.arch {
            SlipArch::PerDot(c) => c,
            SlipArch::Baseline => {
                return Err(Error::UnknownConfig("the image baseline has no streaming path".into()));
            }
        };
        Ok(SlipStream {
            history: FeatureHistory::new(config.history()),
            map: LatticeMap::new(grid)?,
            model,
            config,
            enc: Vec::new(),
            input: Vec::new(),
            counter,
        })
    }

    pub fn counter(&self) -> &SlipCounter {
        &self.counter
    }

    pub fn model(&self) -> &SlipModel {
        &self.model
    }

    /// Probability for the newest frame, `None` while warming up.
    pub fn probability(&mut self, f: &FeatureFrame) -> Result<Option<f64>> {
        self.history.push(f);
        if !self.history.encode(self.config, &mut self.enc) {
            return Ok(None);
        }
        self.map.fill(self.config, &self.enc, &mut self.input)?;
        Ok(Some(self.model.probability(&self.input)?))
    }

    /// Slip flag for the newest frame; bumps the counter when positive.
    pub fn push(&mut self, f: &FeatureFrame) -> Result<bool> {
        let s = flag(self.probability(f)?, self.model.threshold);
        if s {
            self.counter.increment();
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyStats {
    pub samples_us: Vec<f64>,
    pub overruns: usize,
}

impl LatencyStats {
    pub fn record(&mut self, d: Duration, tick: usize) {
        if d > TICK_BUDGET {
            self.overruns += 1;
            log::debug!("slip tick {tick} took {:.3} ms, over the 1 ms budget", d.as_secs_f64() * 1e3);
        }
        self.samples_us.push(d.as_secs_f64() * 1e6);
    }

    pub fn percentile(&self, q: f64) -> f64 {
        if self.samples_us.is_empty() {
            return 0.0;
        }
        let mut v = self.samples_us.clone();
        v.sort_by(f64::total_cmp);
        let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
        v[i]
    }

    pub fn mean(&self) -> f64 {
        self.samples_us.iter().sum::<f64>() / self.samples_us.len().max(1) as f64
    }
}

/// Event frames in, slip flags out: tracking, feature extraction and the
/// model, timed per tick against the 1 ms budget.
pub struct SlipDetector {
    tracker: Tracker,
    rest: Vec<(f64, f64)>,
    window: Option<Rect>,
    stream: SlipStream,
    pub latency: LatencyStats,
    ticks: usize,
}

impl SlipDetector {
    pub fn new(model: SlipModel, grid: &GridSpec, tracker: TrackerConfig, counter: SlipCounter) -> Result<Self> {
        Ok(SlipDetector {
            tracker: Tracker::new(DotGrid::from_grid(grid), tracker)?,
            rest: grid.rest_positions(),
            window: grid.window(),
            stream: SlipStream::new(model, grid, counter)?,
            latency: LatencyStats::default(),
            ticks: 0,
        })
    }

    pub fn counter(&self) -> &SlipCounter {
        self.stream.counter()
    }

    pub fn step(&mut self, frame: &EventFrame) -> Result<bool> {
        let start = Instant::now();
        self.tracker.step(frame)?;
        let f = extract(frame, &self.tracker.centers(), &self.rest, DOT_DISC_RADIUS, self.window.as_ref());
        let s = self.stream.push(&f)?;
        self.latency.record(start.elapsed(), self.ticks);
        self.ticks += 1;
        Ok(s)
    }
}
