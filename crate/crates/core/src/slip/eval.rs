//! Slip timing and F1 evaluation, threshold selection.

use std::fmt::Write as _;

use super::dataset::{shift_labels, LabeledTrajectory};
use super::model::{LatticeMap, SlipArch, SlipModel};
use super::train::{sample_input, Checkpoint};
use crate::error::{Error, Result};
use crate::nn::Network;

pub const EARLY_MS: usize = 50;
pub const LATE_MS: usize = 20;
/// Trajectories are scored up to this many ticks after the labeled onset.
pub const EVAL_CUT_MS: usize = 20;
pub const THRESHOLD_STEP: f64 = 0.025;

/// The 41 candidate thresholds 0, 0.025, ..., 1.
pub fn threshold_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * THRESHOLD_STEP).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timing {
    Correct,
    TooEarly,
    /// Late or never detected.
    TooLate,
}

/// Timing class of the first detection `first` relative to the onset `tc`.
pub fn timing(first: Option<usize>, tc: usize) -> Timing {
    match first {
        Some(t) if t + EARLY_MS < tc => Timing::TooEarly,
        Some(t) if t <= tc + LATE_MS => Timing::Correct,
        _ => Timing::TooLate,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Offline per-tick probabilities; `None` while the history warms up.
pub fn probabilities(net: &Network, arch: SlipArch, traj: &LabeledTrajectory, map: &LatticeMap, end: usize) -> Result<Vec<Option<f64>>> {
    let h = arch.history();
    let mut x = Vec::new();
    (0..end.min(traj.len()))
        .map(|k| {
            if k + 1 < h {
                return Ok(None);
            }
            sample_input(traj, k, arch, map, &mut x)?;
            Ok(Some(net.predict(&x)?[0]))
        })
        .collect()
}

/// Slip flag for a probability: strictly above the threshold.
pub fn flag(p: Option<f64>, threshold: f64) -> bool {
    p.is_some_and(|p| p > threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub name: String,
    pub onset: usize,
    pub first_detection: Option<usize>,
    pub timing: Timing,
    pub confusion: Confusion,
    pub f1: f64,
}

/// Scores per-tick probabilities of one trajectory (already cut).
pub fn score(traj: &LabeledTrajectory, probs: &[Option<f64>], threshold: f64, delta_t: usize) -> Result<TrajectoryResult> {
    let tc = traj.onset().ok_or_else(|| Error::Labeling(format!("{} has no labeled slip", traj.name)))?;
    let end = (tc + EVAL_CUT_MS + 1).min(traj.len()).min(probs.len());
    let labels = shift_labels(&traj.labels, delta_t);
    let flags: Vec<bool> = probs[..end].iter().map(|&p| flag(p, threshold)).collect();
    let first = flags.iter().position(|&f| f);
    let mut c = Confusion::default();
    for (k, &f) in flags.iter().enumerate() {
        if probs[k].is_some() {
            c.add(f, labels[k]);
        }
    }
    Ok(TrajectoryResult {
        name: traj.name.clone(),
        onset: tc,
        first_detection: first,
        timing: timing(first, tc),
        confusion: c,
        f1: c.f1(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub arch: SlipArch,
    pub threshold: f64,
    pub results: Vec<TrajectoryResult>,
}

impl EvalReport {
    fn rate(&self, t: Timing) -> f64 {
        ratio(self.results.iter().filter(|r| r.timing == t).count(), self.results.len())
    }

    pub fn timing_correct(&self) -> f64 {
        self.rate(Timing::Correct)
    }

    pub fn too_early(&self) -> f64 {
        self.rate(Timing::TooEarly)
    }

    pub fn too_late(&self) -> f64 {
        self.rate(Timing::TooLate)
    }

    pub fn mean_f1(&self) -> f64 {
        if self.results.is_empty() {
            return 0.0;
        }
        self.results.iter().map(|r| r.f1).sum::<f64>() / self.results.len() as f64
    }

    /// Empirical CDF of detection offsets (ms, detection minus onset);
    /// undetected trajectories are left out, so the curve can end below 1.
    pub fn timing_cdf_csv(&self) -> String {
        let mut offsets: Vec<i64> =
            self.results.iter().filter_map(|r| r.first_detection.map(|f| f as i64 - r.onset as i64)).collect();
        offsets.sort_unstable();
        let n = self.results.len().max(1) as f64;
        let mut s = String::from("offset_ms,cdf\n");
        for (i, o) in offsets.iter().enumerate() {
            if offsets.get(i + 1) != Some(o) {
                let _ = writeln!(s, "{o},{:.6}", (i + 1) as f64 / n);
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "model {} threshold {:.3}\ntrajectories {}\ntiming correct {:.3}\ntoo early {:.3}\ntoo late {:.3}\nmean F1 {:.3}\n",
            self.arch,
            self.threshold,
            self.results.len(),
            self.timing_correct(),
            self.too_early(),
            self.too_late(),
            self.mean_f1()
        );
        for r in &self.results {
            let first = r.first_detection.map_or(String::from("none"), |f| f.to_string());
            let _ = writeln!(s, "{} onset {} first {} {:?} f1 {:.3}", r.name, r.onset, first, r.timing, r.f1);
        }
        s
    }
}

fn eval_end(traj: &LabeledTrajectory) -> usize {
    traj.onset().map_or(traj.len(), |o| o + EVAL_CUT_MS + 1)
}

pub fn evaluate(model: &SlipModel, trajs: &[LabeledTrajectory], map: &LatticeMap) -> Result<EvalReport> {
    let results = trajs
        .iter()
        .map(|t| {
            let probs = probabilities(&model.network, model.arch, t, map, eval_end(t))?;
            score(t, &probs, model.threshold, model.delta_t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { arch: model.arch, threshold: model.threshold, results })
}

/// Objective maximized by threshold selection.
pub fn selection_score(report: &EvalReport) -> f64 {
    report.timing_correct() + report.mean_f1()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the candidate checkpoints.
    pub checkpoint: usize,
    pub threshold: f64,
    pub score: f64,
}

/// Grid search over checkpoints and thresholds. Ties go to the lower
/// threshold, then to the earlier checkpoint.
pub fn select_threshold(
    checkpoints: &[Checkpoint],
    arch: SlipArch,
    delta_t: usize,
    test: &[LabeledTrajectory],
    map: &LatticeMap,
) -> Result<Selection> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("no checkpoints to select from".into()));
    }
    let mut best: Option<Selection> = None;
    for (ci, c) in checkpoints.iter().enumerate() {
        let probs: Vec<Vec<Option<f64>>> =
            test.iter().map(|t| probabilities(&c.network, arch, t, map, eval_end(t))).collect::<Result<_>>()?;
        for thr in threshold_grid() {
            let results =
                test.iter().zip(&probs).map(|(t, p)| score(t, p, thr, delta_t)).collect::<Result<Vec<_>>>()?;
            let s = selection_score(&EvalReport { arch, threshold: thr, results });
            let better = match &best {
                None => true,
                Some(b) => s > b.score || (s == b.score && thr < b.threshold),
            };
            if better {
                best = Some(Selection { checkpoint: ci, threshold: thr, score: s });
            }
        }
    }
    Ok(best.unwrap())
}

/// The last `n` checkpoints.
pub fn last_checkpoints(all: &[Checkpoint], n: usize) -> &[Checkpoint] {
    &all[all.len().saturating_sub(n)..]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_41_points() {
        let g = threshold_grid();
        assert_eq!(g.len(), 41);
        assert_eq!((g[0], g[40]), (0.0, 1.0));
    }

    #[test]
    fn timing_window_edges() {
        assert_eq!(timing(Some(440), 500), Timing::TooEarly);
        assert_eq!(timing(Some(450), 500), Timing::Correct);
        assert_eq!(timing(Some(520), 500), Timing::Correct);
        assert_eq!(timing(Some(521), 500), Timing::TooLate);
        assert_eq!(timing(None, 500), Timing::TooLate);
    }

    #[test]
    fn constant_half_flags_below_half() {
        for t in threshold_grid() {
            assert_eq!(flag(Some(0.5), t), t <= 0.475 + 1e-12);
        }
    }

    #[test]
    fn f1_on_constructed_matrix() {
        let c = Confusion { tp: 6, fp: 2, fn_: 4, tn: 100 };
        assert!((c.precision() - 0.75).abs() < 1e-12);
        assert!((c.recall() - 0.6).abs() < 1e-12);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(Confusion { tn: 5, ..c }.f1(), c.f1());
        assert_eq!(Confusion::default().f1(), 0.0);
    }
}
