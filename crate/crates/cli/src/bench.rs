use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use evtac::sim::{library, simulate};
use evtac::slip::model::SlipModel;
use evtac::slip::stream::{LatencyStats, SlipCounter, SlipDetector, TICK_BUDGET};
use evtac::tracker::{DotGrid, Tracker, TrackerConfig};

use crate::sensing::load_scene;
use crate::{require_file, usage, write_text};

const BUCKET_US: f64 = 25.0;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    /// Dot tracking alone.
    Track,
    /// Tracking, features and the slip model.
    Slip,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    stage: Stage,
    /// Scene to replay; a shear scene for track, a slip scene for slip.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Slip model checkpoint (slip stage).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latency histogram CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

fn histogram(stats: &LatencyStats) -> String {
    let max = stats.samples_us.iter().cloned().fold(0.0, f64::max);
    let n = (max / BUCKET_US).floor() as usize + 1;
    let mut counts = vec![0usize; n];
    for &s in &stats.samples_us {
        counts[(s / BUCKET_US).floor() as usize] += 1;
    }
    let mut out = String::from("upper_us,count\n");
    for (i, c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let _ = writeln!(out, "{},{c}", (i + 1) as f64 * BUCKET_US);
    }
    out
}

pub fn run(a: BenchArgs) -> anyhow::Result<()> {
    let default = match a.stage {
        Stage::Track => library::shear_scene(0, a.duration, 0.0, 100).name,
        Stage::Slip => format!("slip-{}-0", library::objects()[library::TRAINING_OBJECTS].name),
    };
    let scene = load_scene(a.scene.as_deref().unwrap_or(&default))?;
    let (frames, _) = simulate(&scene, a.duration)?;
    let mut stats = LatencyStats::default();
    match a.stage {
        Stage::Track => {
            let mut t = Tracker::new(DotGrid::from_grid(&scene.grid), TrackerConfig::default())?;
            for (i, f) in frames.iter().enumerate() {
                let start = Instant::now();
                t.step(f)?;
                stats.record(start.elapsed(), i);
            }
        }
        Stage::Slip => {
            let Some(path) = &a.model else { return usage("bench slip needs --model") };
            require_file(Path::new(path))?;
            let model = SlipModel::load(path)?;
            let mut d = SlipDetector::new(model, &scene.grid, TrackerConfig::default(), SlipCounter::new())?;
            for f in &frames {
                d.step(f)?;
            }
            stats = d.latency;
        }
    }
    println!(
        "{} ticks: mean {:.1} us, p50 {:.1} us, p99 {:.1} us, max {:.1} us, over {} ms budget {}",
        stats.samples_us.len(),
        stats.mean(),
        stats.percentile(0.5),
        stats.percentile(0.99),
        stats.percentile(1.0),
        TICK_BUDGET.as_millis(),
        stats.overruns
    );
    if let Some(p) = &a.histogram {
        write_text(p, &histogram(&stats))?;
    }
    Ok(())
}
