//! Labeled slip trajectories: tracked features plus offline flow labels.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::label::{FlowLabeler, IMAGE_FRAMES, LOOKAHEAD};
use crate::error::{Error, Result};
use crate::event::EventFrame;
use crate::features::{extract, FeatureFrame, DOT_DISC_RADIUS};
use crate::grasp::physics::GraspSimObject;
use crate::sim::{library, GelScene, GridSpec, Rect, Simulator};
use crate::tracker::{DotGrid, Tracker, TrackerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub name: String,
    pub object: String,
    pub features: Vec<FeatureFrame>,
    /// Flow labels, one per feature frame.
    pub labels: Vec<bool>,
    pub window_flow: Vec<f64>,
    pub marker_flow: Vec<f64>,
    /// Simulator slip flags when known.
    pub truth: Option<Vec<bool>>,
    /// Recorded frames, when kept.
    pub frames: Option<Vec<EventFrame>>,
}

impl LabeledTrajectory {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// First tick the labeler marks as slip.
    pub fn onset(&self) -> Option<usize> {
        self.labels.iter().position(|&s| s)
    }

    pub fn truth_onset(&self) -> Option<usize> {
        self.truth.as_ref().and_then(|t| t.iter().position(|&s| s))
    }

    /// Exclusive end of the trajectory cut `ms` ticks after the labeled onset.
    pub fn cut_end(&self, ms: usize) -> Option<usize> {
        self.onset().map(|o| (o + ms + 1).min(self.len()))
    }

    /// Labels moved `delta` ticks earlier: `out[t] = labels[t + delta]`. The
    /// last label is held past the end.
    pub fn shifted_labels(&self, delta: usize) -> Vec<bool> {
        shift_labels(&self.labels, delta)
    }

    pub fn labels_csv(&self) -> String {
        let tc = self.onset().map_or(String::from("-1"), |o| o.to_string());
        let mut s = String::from("tick,slip,t_c\n");
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(&format!("{i},{},{tc}\n", u8::from(*l)));
        }
        s
    }
}

pub fn shift_labels(labels: &[bool], delta: usize) -> Vec<bool> {
    let n = labels.len();
    (0..n).map(|t| labels[(t + delta).min(n.saturating_sub(1))]).collect()
}

/// Parses `tick,slip,t_c` label CSV.
pub fn parse_labels_csv(text: &str) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("labels line {}: expected tick,slip,t_c", i + 1)));
        }
        let tick: usize = f[0].trim().parse().map_err(|_| Error::Parse(format!("labels line {}: bad tick", i + 1)))?;
        if tick != out.len() {
            return Err(Error::Parse(format!("labels line {}: ticks must be consecutive", i + 1)));
        }
        out.push(match f[1].trim() {
            "0" => false,
            "1" => true,
            v => return Err(Error::Parse(format!("labels line {}: slip must be 0 or 1, got {v}", i + 1))),
        });
    }
    Ok(out)
}

/// Streaming builder: features are computed as frames arrive, labels once
/// the 4 ms look-ahead is available.
pub struct TrajectoryRecorder {
    tracker: Tracker,
    rest: Vec<(f64, f64)>,
    window: Option<Rect>,
    labeler: FlowLabeler,
    recent: VecDeque<EventFrame>,
    out: LabeledTrajectory,
    keep_frames: bool,
    truth: Vec<bool>,
}

impl TrajectoryRecorder {
    pub fn new(grid: &GridSpec, threshold: f64, tracker: TrackerConfig, keep_frames: bool) -> Result<Self> {
        let labeler = FlowLabeler::for_grid(grid, threshold)?;
        Ok(TrajectoryRecorder {
            tracker: Tracker::new(DotGrid::from_grid(grid), tracker)?,
            rest: grid.rest_positions(),
            window: grid.window(),
            labeler,
            recent: VecDeque::with_capacity(IMAGE_FRAMES + LOOKAHEAD),
            out: LabeledTrajectory {
                name: String::new(),
                object: String::new(),
                features: Vec::new(),
                labels: Vec::new(),
                window_flow: Vec::new(),
                marker_flow: Vec::new(),
                truth: None,
                frames: keep_frames.then(Vec::new),
            },
            keep_frames,
            truth: Vec::new(),
        })
    }

    pub fn push(&mut self, frame: EventFrame, truth_slip: Option<bool>) -> Result<()> {
        self.tracker.step(&frame)?;
        let centers = self.tracker.centers();
        let f = extract(&frame, &centers, &self.rest, DOT_DISC_RADIUS, self.window.as_ref());
        self.out.features.push(f);
        if let Some(s) = truth_slip {
            self.truth.push(s);
        }
        if self.recent.len() == IMAGE_FRAMES + LOOKAHEAD {
            self.recent.pop_front();
        }
        if self.keep_frames {
            self.out.frames.as_mut().unwrap().push(frame.clone());
        }
        self.recent.push_back(frame);
        // tick whose look-ahead just completed
        let t = self.out.features.len() as i64 - 1 - LOOKAHEAD as i64;
        if t >= 0 {
            let frames: Vec<EventFrame> = self.recent.iter().cloned().collect();
            let now_start = frames.len().saturating_sub(LOOKAHEAD + IMAGE_FRAMES);
            let now = super::label::BitImage::render(&frames[now_start..frames.len() - LOOKAHEAD]);
            let ahead = super::label::BitImage::render(&frames[frames.len().saturating_sub(IMAGE_FRAMES)..]);
            let l = self.labeler.label_images(&now, &ahead);
            self.out.labels.push(l.slip);
            self.out.window_flow.push(l.window_flow);
            self.out.marker_flow.push(l.marker_flow);
        }
        Ok(())
    }

    /// Ticks labeled so far.
    pub fn labeled(&self) -> usize {
        self.out.labels.len()
    }

    pub fn onset(&self) -> Option<usize> {
        self.out.labels.iter().position(|&s| s)
    }

    /// Drops the trailing ticks that never received a label.
    pub fn finish(mut self, name: &str, object: &str) -> LabeledTrajectory {
        let n = self.out.labels.len();
        self.out.features.truncate(n);
        if let Some(f) = self.out.frames.as_mut() {
            f.truncate(n);
        }
        if !self.truth.is_empty() {
            self.truth.truncate(n);
            self.out.truth = Some(self.truth);
        }
        self.out.name = name.to_string();
        self.out.object = object.to_string();
        self.out
    }
}

/// Ticks recorded after the labeled onset; covers the longest cut.
pub const RECORD_AFTER_ONSET: usize = 60;

/// Simulates a slip scene and labels it. Stops `RECORD_AFTER_ONSET` ticks
/// after the labeled onset or when the script ends.
pub fn record_scene(scene: &GelScene, threshold: f64, keep_frames: bool) -> Result<LabeledTrajectory> {
    let mut sim = Simulator::new(scene)?;
    let mut rec = TrajectoryRecorder::new(&scene.grid, threshold, TrackerConfig::default(), keep_frames)?;
    let limit = 20_000;
    while !sim.finished() && sim.tick() < limit {
        let (frame, truth) = sim.step();
        rec.push(frame, Some(truth.slip))?;
        if rec.onset().is_some_and(|o| rec.labeled() > o + RECORD_AFTER_ONSET) {
            break;
        }
    }
    let object = scene.grasp.as_ref().map(|g| g.object.name.clone()).unwrap_or_default();
    Ok(rec.finish(&scene.name, &object))
}

/// Labels a stored recording.
pub fn record_frames(frames: &[EventFrame], grid: &GridSpec, threshold: f64, name: &str) -> Result<LabeledTrajectory> {
    let mut rec = TrajectoryRecorder::new(grid, threshold, TrackerConfig::default(), true)?;
    for f in frames {
        rec.push(f.clone(), None)?;
    }
    Ok(rec.finish(name, ""))
}

/// Scene E collection plan: `count` trajectories of `object`.
pub fn object_scenes(object: &GraspSimObject, count: usize, seed: u64) -> Vec<GelScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|k| library::slip_scene(object, k, rng.random())).collect()
}

#[derive(Debug, Clone)]
pub struct SlipDataset {
    pub train: Vec<LabeledTrajectory>,
    pub test: Vec<LabeledTrajectory>,
    pub eval: Vec<LabeledTrajectory>,
}

/// Size of a generated data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetPlan {
    /// Trajectories per training object, split into train and test.
    pub per_train_object: usize,
    /// Of those, how many go to the test split used for threshold selection.
    pub test_per_object: usize,
    pub per_eval_object: usize,
    pub seed: u64,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        DatasetPlan { per_train_object: 40, test_per_object: 5, per_eval_object: 10, seed: 1 }
    }
}

/// Records the training objects (train and test splits) and the held-out
/// objects (eval split). Trajectories without a labeled onset are dropped.
pub fn generate(plan: &DatasetPlan, threshold: f64) -> Result<SlipDataset> {
    if plan.test_per_object >= plan.per_train_object {
        return Err(Error::InvalidInput("test split must leave training trajectories".into()));
    }
    let objects = library::objects();
    let mut ds = SlipDataset { train: Vec::new(), test: Vec::new(), eval: Vec::new() };
    for (i, o) in objects.iter().enumerate() {
        let held_out = i >= library::TRAINING_OBJECTS;
        let count = if held_out { plan.per_eval_object } else { plan.per_train_object };
        for (k, scene) in object_scenes(o, count, plan.seed.wrapping_mul(1000).wrapping_add(i as u64)).iter().enumerate() {
            let t = record_scene(scene, threshold, false)?;
            if t.onset().is_none() {
                log::warn!("{}: no labeled slip, dropped", t.name);
                continue;
            }
            if held_out {
                ds.eval.push(t);
            } else if k < plan.test_per_object {
                ds.test.push(t);
            } else {
                ds.train.push(t);
            }
        }
    }
    Ok(ds)
}
