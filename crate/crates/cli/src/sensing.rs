use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use evtac::codec;
use evtac::datarate::data_rate_report;
use evtac::event::EventFrame;
use evtac::features::{extract, features_csv, DOT_DISC_RADIUS};
use evtac::sim::{library, simulate as run_scene, GelScene, GridSpec};
use evtac::spectral::{detect_segments, DEFAULT_CUTOFF_HZ, DEFAULT_TOLERANCE_HZ};
use evtac::tracker::{DotGrid, Tracker, TrackerConfig};

use crate::{require_file, usage, write_text};

pub const READOUT_HZ: f64 = 1000.0;

/// A library scene name or a scene file.
pub fn load_scene(spec: &str) -> anyhow::Result<GelScene> {
    if let Some(s) = library::find_scene(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        let names: Vec<String> = library::scene_library().into_iter().map(|s| s.name).collect();
        return usage(format!("unknown scene {spec:?}; library scenes: {}", names.join(", ")));
    }
    Ok(GelScene::from_toml(&std::fs::read_to_string(path)?)?)
}

/// `cut` (7x9 with the window column), `full` (7x9), `plain` (7x8), the
/// grid of a library scene, or a grid file.
pub fn load_grid(spec: &str) -> anyhow::Result<GridSpec> {
    match spec {
        "cut" => Ok(GridSpec::cut()),
        "full" => Ok(GridSpec::full()),
        "plain" => Ok(GridSpec::default()),
        name if library::find_scene(name).is_some() => Ok(library::find_scene(name).unwrap().grid),
        path => {
            require_file(Path::new(path))?;
            let g: GridSpec = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| crate::Usage(format!("grid file {path}: {e}")))?;
            Ok(g)
        }
    }
}

pub fn read_frames(path: &Path) -> anyhow::Result<Vec<EventFrame>> {
    require_file(path)?;
    Ok(codec::read_file(path).with_context(|| format!("reading {}", path.display()))?)
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Library scene name or scene file.
    #[arg(long)]
    scene: String,
    /// Seconds to simulate; defaults to the scene's own duration.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the resolved scene file.
    #[arg(long)]
    save_scene: Option<PathBuf>,
}

fn default_duration(scene: &GelScene) -> f64 {
    if scene.grasp.is_some() {
        library::PERTURB_DURATION_S
    } else if scene.distractors.is_empty() {
        10.0
    } else {
        library::distractor_duration(scene)
    }
}

pub fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut scene = load_scene(&a.scene)?;
    if let Some(s) = a.seed {
        scene.seed = s;
    }
    let duration = a.duration.unwrap_or_else(|| default_duration(&scene));
    let (frames, truth) = run_scene(&scene, duration)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    codec::write_file(&a.out, &frames)?;
    if let Some(t) = &a.truth {
        write_text(t, &truth.to_csv())?;
    }
    if let Some(p) = &a.save_scene {
        write_text(p, &scene.to_toml()?)?;
    }
    let events: usize = frames.iter().map(|f| f.events.len()).sum();
    println!("{}: {} frames, {events} events", scene.name, frames.len());
    Ok(())
}

#[derive(Args)]
pub struct TrackArgs {
    #[arg(long)]
    input: PathBuf,
    /// `cut`, `full`, `plain`, a library scene name or a grid file.
    #[arg(long, default_value = "cut")]
    grid: String,
    #[arg(long)]
    out: PathBuf,
    /// Disables the neighbor distance term.
    #[arg(long)]
    unregularized: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    w_dist: Option<f64>,
}

fn tracker_config(unregularized: bool, alpha: Option<f64>, w_dist: Option<f64>) -> TrackerConfig {
    let mut cfg = if unregularized { TrackerConfig::unregularized() } else { TrackerConfig::default() };
    if let Some(v) = alpha {
        cfg.alpha = v;
    }
    if let Some(v) = w_dist {
        cfg.w_dist = v;
    }
    cfg
}

pub fn track(a: TrackArgs) -> anyhow::Result<()> {
    let grid = load_grid(&a.grid)?;
    let frames = read_frames(&a.input)?;
    let mut t = Tracker::new(DotGrid::from_grid(&grid), tracker_config(a.unregularized, a.alpha, a.w_dist))?;
    let mut s = String::from("tick,dot,x,y\n");
    for (i, f) in frames.iter().enumerate() {
        t.step(f)?;
        for (d, c) in t.centers().iter().enumerate() {
            let _ = writeln!(s, "{i},{d},{:.4},{:.4}", c.0, c.1);
        }
    }
    write_text(&a.out, &s)
}

#[derive(Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cut")]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

pub fn features(a: FeaturesArgs) -> anyhow::Result<()> {
    let grid = load_grid(&a.grid)?;
    let frames = read_frames(&a.input)?;
    let mut t = Tracker::new(DotGrid::from_grid(&grid), TrackerConfig::default())?;
    let rest = grid.rest_positions();
    let window = grid.window();
    let mut out = Vec::with_capacity(frames.len());
    for f in &frames {
        t.step(f)?;
        out.push(extract(f, &t.centers(), &rest, DOT_DISC_RADIUS, window.as_ref()));
    }
    write_text(&a.out, &features_csv(&out))
}

#[derive(Args)]
pub struct VibrationArgs {
    /// Event recording, or a CSV whose last column holds per-ms event counts.
    #[arg(long)]
    input: PathBuf,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    /// Expected frequency in Hz.
    #[arg(long)]
    target: f64,
    #[arg(long, default_value_t = DEFAULT_CUTOFF_HZ)]
    cutoff: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_HZ)]
    tolerance: f64,
    /// Spectrum of the first segment.
    #[arg(long)]
    spectrum: Option<PathBuf>,
    /// Per-segment results as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn count_series(path: &Path) -> anyhow::Result<Vec<f64>> {
    require_file(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        let text = std::fs::read_to_string(path)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let Some(last) = line.split(',').next_back().map(str::trim) else { continue };
            match last.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) if i == 0 => {}
                Err(_) => return usage(format!("{} line {}: not a number: {last:?}", path.display(), i + 1)),
            }
        }
        return Ok(out);
    }
    Ok(read_frames(path)?.iter().map(|f| f.events.len() as f64).collect())
}

pub fn vibration(a: VibrationArgs) -> anyhow::Result<()> {
    let series = count_series(&a.input)?;
    let segs = detect_segments(&series, READOUT_HZ, a.window, a.cutoff, a.target, a.tolerance)?;
    let mut csv = String::from("segment,detected_hz,success\n");
    let mut ok = 0;
    for (i, s) in segs.iter().enumerate() {
        match s {
            Ok(v) => {
                ok += usize::from(v.success);
                println!("segment {i}: {} Hz{}", v.detected_hz, if v.success { "" } else { " (miss)" });
                let _ = writeln!(csv, "{i},{},{}", v.detected_hz, v.success);
            }
            Err(e) => {
                println!("segment {i}: {e}");
                let _ = writeln!(csv, "{i},,false");
            }
        }
    }
    println!("{ok}/{} segments within {} Hz of {} Hz", segs.len(), a.tolerance, a.target);
    if let Some(p) = &a.out {
        write_text(p, &csv)?;
    }
    if let (Some(p), Some(Ok(first))) = (&a.spectrum, segs.first()) {
        write_text(p, &first.spectrum.to_csv())?;
    }
    Ok(())
}

#[derive(Args)]
pub struct DatarateArgs {
    #[arg(long)]
    input: PathBuf,
    /// `start,end` in seconds; the whole recording when omitted.
    #[arg(long)]
    interval: Option<String>,
    #[arg(long, default_value_t = 25.0)]
    rgb_hz: f64,
    #[arg(long, default_value_t = 540)]
    rgb_width: u32,
    #[arg(long, default_value_t = 480)]
    rgb_height: u32,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_interval(s: &str) -> anyhow::Result<(u64, u64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let secs = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
    match parts.as_slice() {
        [a, b] => match (secs(a), secs(b)) {
            (Some(a), Some(b)) => Ok(((a * 1e6).round() as u64, (b * 1e6).round() as u64)),
            _ => usage(format!("interval {s:?}: expected two non-negative numbers of seconds")),
        },
        _ => usage(format!("interval {s:?}: expected start,end")),
    }
}

pub fn datarate(a: DatarateArgs) -> anyhow::Result<()> {
    let frames = read_frames(&a.input)?;
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return usage("recording has no frames");
    };
    let (start, end) = match &a.interval {
        Some(s) => parse_interval(s)?,
        None => (first.t_end.saturating_sub(1000), last.t_end),
    };
    let r = data_rate_report(&frames, a.rgb_width, a.rgb_height, a.rgb_hz, start, end)?;
    print!("{}", r.to_text());
    if let Some(p) = &a.csv {
        write_text(p, &r.to_csv())?;
    }
    Ok(())
}
