//! Balanced minibatch training with rotation augmentation and periodic
//! checkpoints.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{shift_labels, LabeledTrajectory};
use super::model::{baseline_input, build_model, LatticeMap, Rotation, SlipArch};
use crate::error::{Error, Result};
use crate::features::history_features;
use crate::nn::{bce_step, Network};

/// Frames with more events than this are "above" for pool assignment.
pub const EVENT_POOL_THRESHOLD: usize = 25;
pub const SLIP_PER_BATCH: usize = 32;
pub const ABOVE_PER_BATCH: usize = 32;
pub const BELOW_PER_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: SlipArch,
    /// Prediction shift in ticks.
    pub delta_t: usize,
    pub epochs: usize,
    pub checkpoint_every: usize,
    pub learning_rate: f64,
    /// Caps the batches per epoch; `None` runs the full pass.
    pub max_batches: Option<usize>,
    pub rotation_prob: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(arch: SlipArch, delta_t: usize) -> Self {
        TrainConfig {
            arch,
            delta_t,
            epochs: 70,
            checkpoint_every: 10,
            learning_rate: 0.001,
            max_batches: None,
            rotation_prob: 0.5,
            seed: 0,
        }
    }
}

/// Index of a training sample: (trajectory, tick).
pub type SampleRef = (usize, usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pools {
    pub slip: Vec<SampleRef>,
    pub above: Vec<SampleRef>,
    pub below: Vec<SampleRef>,
}

impl Pools {
    /// Samples cut `arch.cut_ms()` after each labeled onset, labels moved
    /// earlier by `delta_t`.
    pub fn build(trajs: &[LabeledTrajectory], arch: SlipArch, delta_t: usize) -> Result<Self> {
        let mut p = Pools::default();
        let h = arch.history();
        for (i, t) in trajs.iter().enumerate() {
            let end = t.cut_end(arch.cut_ms()).ok_or_else(|| Error::Training(format!("{} has no labeled slip", t.name)))?;
            let labels = shift_labels(&t.labels, delta_t);
            for k in h.saturating_sub(1)..end {
                if labels[k] {
                    p.slip.push((i, k));
                } else if t.features[k].n_e > EVENT_POOL_THRESHOLD {
                    p.above.push((i, k));
                } else {
                    p.below.push((i, k));
                }
            }
        }
        Ok(p)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.above.len().div_ceil(ABOVE_PER_BATCH)
    }
}

/// Network input for tick `k` of `traj`.
pub fn sample_input(traj: &LabeledTrajectory, k: usize, arch: SlipArch, map: &LatticeMap, out: &mut Vec<f64>) -> Result<()> {
    let h = arch.history();
    if k + 1 < h {
        return Err(Error::InvalidInput(format!("tick {k} precedes the {h}-frame history")));
    }
    match arch {
        SlipArch::PerDot(cfg) => {
            let per_dot = history_features(&traj.features[k + 1 - h..=k], cfg)?;
            let flat: Vec<f32> = per_dot.into_iter().flatten().collect();
            map.fill(cfg, &flat, out)
        }
        SlipArch::Baseline => {
            let frames = traj.frames.as_ref().ok_or_else(|| Error::Training(format!("{} has no event frames", traj.name)))?;
            baseline_input(&frames[k + 1 - h..=k], out)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub network: Network,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    /// Mean per-sample loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub batches_per_epoch: usize,
}

pub fn train(trajs: &[LabeledTrajectory], map: &LatticeMap, cfg: &TrainConfig) -> Result<TrainReport> {
    let pools = Pools::build(trajs, cfg.arch, cfg.delta_t)?;
    for (name, p) in [("slip", &pools.slip), ("above", &pools.above), ("below", &pools.below)] {
        if p.is_empty() {
            return Err(Error::Training(format!("empty {name} pool")));
        }
    }
    if cfg.checkpoint_every == 0 {
        return Err(Error::Training("checkpoint interval must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = build_model(cfg.arch, rng.random())?;
    net.set_training(true);
    let labels: Vec<Vec<bool>> = trajs.iter().map(|t| shift_labels(&t.labels, cfg.delta_t)).collect();
    let shape = cfg.arch.input_shape();
    let per_epoch = cfg.max_batches.map_or(pools.batches_per_epoch(), |m| m.min(pools.batches_per_epoch()));
    let mut above = pools.above.clone();
    let mut x = Vec::new();
    let mut report = TrainReport { checkpoints: Vec::new(), epoch_loss: Vec::new(), batches_per_epoch: per_epoch };
    for epoch in 1..=cfg.epochs {
        above.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut seen = 0usize;
        for b in 0..per_epoch {
            let chunk = &above[b * ABOVE_PER_BATCH..((b + 1) * ABOVE_PER_BATCH).min(above.len())];
            let mut batch: Vec<SampleRef> = chunk.to_vec();
            batch.extend((0..SLIP_PER_BATCH).map(|_| pools.slip[rng.random_range(0..pools.slip.len())]));
            batch.extend((0..BELOW_PER_BATCH).map(|_| pools.below[rng.random_range(0..pools.below.len())]));
            net.zero_grad();
            for &(ti, k) in &batch {
                sample_input(&trajs[ti], k, cfg.arch, map, &mut x)?;
                if rng.random_bool(cfg.rotation_prob) {
                    let rot = match cfg.arch {
                        SlipArch::PerDot(_) => [Rotation::R90, Rotation::R180, Rotation::R270][rng.random_range(0..3)],
                        SlipArch::Baseline => Rotation::R180,
                    };
                    x = rot.apply(&x, shape);
                }
                let y = if labels[ti][k] { 1.0 } else { 0.0 };
                loss += bce_step(&mut net, &x, y)?.0;
            }
            seen += batch.len();
            net.sgd_step(cfg.learning_rate)?;
        }
        report.epoch_loss.push(loss / seen.max(1) as f64);
        log::debug!("{} epoch {epoch}: loss {:.4}", cfg.arch, loss / seen.max(1) as f64);
        if epoch % cfg.checkpoint_every == 0 {
            let mut snap = net.clone();
            snap.set_training(false);
            report.checkpoints.push(Checkpoint { epoch, network: snap });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_length_is_ceiling() {
        let p = Pools { slip: vec![(0, 0); 100], above: vec![(0, 0); 1000], below: vec![(0, 0); 500] };
        assert_eq!(p.batches_per_epoch(), 32);
    }
}
