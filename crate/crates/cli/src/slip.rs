use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use evtac::codec;
use evtac::sim::{library, GridSpec};
use evtac::slip::dataset::{object_scenes, parse_labels_csv, record_frames, record_scene, DatasetPlan, LabeledTrajectory};
use evtac::slip::eval::{evaluate, last_checkpoints, select_threshold, EvalReport, Timing};
use evtac::slip::label::FlowLabeler;
use evtac::slip::model::{LatticeMap, SlipArch, SlipModel};
use evtac::slip::train::{train as fit, TrainConfig};

use crate::sensing::{load_grid, read_frames};
use crate::{data_path, require_file, usage, write_text};

pub const DEFAULT_FLOW_THRESHOLD: f64 = 1.0;
const SPLITS: [&str; 3] = ["train", "test", "eval"];
/// Checkpoints considered by threshold selection, counted from the last.
const SELECT_LAST: usize = 3;

#[derive(Args)]
pub struct LabelArgs {
    /// Recording to label.
    #[arg(long, conflicts_with = "dataset")]
    input: Option<PathBuf>,
    /// Labels CSV for --input.
    #[arg(long, requires = "input")]
    out: Option<PathBuf>,
    /// Simulates the slip collection into this directory instead.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "cut")]
    grid: String,
    /// Relative flow threshold in px per 4 ms.
    #[arg(long, default_value_t = DEFAULT_FLOW_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DatasetPlan::default().per_train_object)]
    per_object: usize,
    #[arg(long, default_value_t = DatasetPlan::default().test_per_object)]
    test_per_object: usize,
    #[arg(long, default_value_t = DatasetPlan::default().per_eval_object)]
    eval_per_object: usize,
    #[arg(long, default_value_t = DatasetPlan::default().seed)]
    seed: u64,
}

pub fn label(a: LabelArgs) -> anyhow::Result<()> {
    match (&a.input, &a.dataset) {
        (Some(input), None) => {
            let Some(out) = &a.out else { return usage("--input needs --out") };
            let grid = load_grid(&a.grid)?;
            FlowLabeler::for_grid(&grid, a.threshold)?;
            let frames = read_frames(input)?;
            let name = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let t = record_frames(&frames, &grid, a.threshold, &name)?;
            match t.onset() {
                Some(o) => println!("{name}: {} ticks labeled, slip from tick {o}", t.len()),
                None => println!("{name}: {} ticks labeled, no slip", t.len()),
            }
            write_text(out, &t.labels_csv())
        }
        (None, Some(dir)) => {
            let plan = DatasetPlan {
                per_train_object: a.per_object,
                test_per_object: a.test_per_object,
                per_eval_object: a.eval_per_object,
                seed: a.seed,
            };
            write_dataset(dir, &plan, a.threshold)
        }
        _ => usage("give either --input with --out, or --dataset"),
    }
}

/// Writes `<split>/<name>.evtc` with `<split>/<name>.labels.csv`.
fn write_dataset(dir: &Path, plan: &DatasetPlan, threshold: f64) -> anyhow::Result<()> {
    if plan.test_per_object >= plan.per_train_object {
        return usage("the test split must leave training trajectories");
    }
    for s in SPLITS {
        std::fs::create_dir_all(dir.join(s))?;
    }
    let mut counts = [0usize; 3];
    for (i, o) in library::objects().iter().enumerate() {
        let held_out = i >= library::TRAINING_OBJECTS;
        let n = if held_out { plan.per_eval_object } else { plan.per_train_object };
        for (k, scene) in object_scenes(o, n, plan.seed.wrapping_mul(1000).wrapping_add(i as u64)).iter().enumerate() {
            let t = record_scene(scene, threshold, true)?;
            if t.onset().is_none() {
                log::warn!("{}: no labeled slip, skipped", t.name);
                continue;
            }
            let split = if held_out { 2 } else if k < plan.test_per_object { 1 } else { 0 };
            let base = dir.join(SPLITS[split]).join(&t.name);
            codec::write_file(&base.with_extension("evtc"), t.frames.as_deref().unwrap_or_default())?;
            write_text(&base.with_extension("labels.csv"), &t.labels_csv())?;
            counts[split] += 1;
        }
    }
    println!("train {} test {} eval {} trajectories in {}", counts[0], counts[1], counts[2], dir.display());
    Ok(())
}

fn object_of(name: &str) -> String {
    let n = name.strip_prefix("slip-").unwrap_or(name);
    n.rsplit_once('-').map_or(n, |(o, _)| o).to_string()
}

/// Loads one split; stored labels replace the recomputed ones.
pub fn load_split(dir: &Path, split: &str, grid: &GridSpec) -> anyhow::Result<Vec<LabeledTrajectory>> {
    let d = dir.join(split);
    if !d.is_dir() {
        return usage(format!("no {split} split in {} (run slip-label --dataset first)", dir.display()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&d)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "evtc"))
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let name = f.file_stem().unwrap().to_string_lossy().into_owned();
        let frames = codec::read_file(&f)?;
        let mut t = record_frames(&frames, grid, DEFAULT_FLOW_THRESHOLD, &name)?;
        let labels = f.with_extension("labels.csv");
        if labels.is_file() {
            let stored = parse_labels_csv(&std::fs::read_to_string(&labels)?)?;
            if stored.len() < t.len() {
                return usage(format!("{}: {} labels for {} ticks", labels.display(), stored.len(), t.len()));
            }
            t.labels = stored[..t.len()].to_vec();
        }
        t.object = object_of(&name);
        t.frames = None;
        out.push(t);
    }
    if out.is_empty() {
        return usage(format!("no recordings in {}", d.display()));
    }
    Ok(out)
}

#[derive(Args)]
pub struct TrainArgs {
    /// Model configuration: no-hist, hist-10, events-only-hist-10, disp-only-hist-10,
    /// hist-20, hist-50-down-5, fast-slow-hist-50 or baseline-image-hist-10.
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prediction shift in ms.
    #[arg(long, default_value_t = 10)]
    delta: usize,
    /// Data set directory; defaults to slip/ in the data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 70)]
    epochs: usize,
    /// Caps the batches per epoch.
    #[arg(long)]
    max_batches: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch training loss.
    #[arg(long)]
    loss: Option<PathBuf>,
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let arch: SlipArch = a.config.parse()?;
    if a.epochs == 0 {
        return usage("--epochs must be positive");
    }
    let dir = data_path(a.data, "slip");
    let grid = GridSpec::cut();
    let map = LatticeMap::new(&grid)?;
    let train_set = load_split(&dir, "train", &grid)?;
    let test_set = load_split(&dir, "test", &grid)?;
    if arch == SlipArch::Baseline {
        log::warn!("the image baseline needs event frames; this is slow");
    }
    let mut cfg = TrainConfig::new(arch, a.delta);
    cfg.epochs = a.epochs;
    cfg.checkpoint_every = cfg.checkpoint_every.min(a.epochs);
    cfg.max_batches = a.max_batches;
    cfg.seed = a.seed;
    let rep = fit(&train_set, &map, &cfg)?;
    let last = last_checkpoints(&rep.checkpoints, SELECT_LAST);
    let sel = select_threshold(last, arch, a.delta, &test_set, &map)?;
    let chosen = &last[sel.checkpoint];
    println!(
        "{arch}: {} batches per epoch, checkpoint epoch {}, threshold {:.3}, selection score {:.3}",
        rep.batches_per_epoch, chosen.epoch, sel.threshold, sel.score
    );
    if let Some(p) = &a.loss {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in rep.epoch_loss.iter().enumerate() {
            let _ = writeln!(s, "{},{l}", i + 1);
        }
        write_text(p, &s)?;
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    SlipModel::new(arch, a.delta, sel.threshold, chosen.network.clone())?.save(&a.out)?;
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    split: String,
    /// Per-trajectory results.
    #[arg(long)]
    report: PathBuf,
    /// Detection offset distribution.
    #[arg(long)]
    cdf: Option<PathBuf>,
}

fn report_csv(r: &EvalReport, objects: &[String]) -> String {
    let mut s = String::from("trajectory,object,onset,first_detection,timing,tp,fp,fn,tn,f1\n");
    for (t, o) in r.results.iter().zip(objects) {
        let first = t.first_detection.map_or(String::new(), |f| f.to_string());
        let timing = match t.timing {
            Timing::Correct => "correct",
            Timing::TooEarly => "early",
            Timing::TooLate => "late",
        };
        let c = t.confusion;
        let _ = writeln!(s, "{},{o},{},{first},{timing},{},{},{},{},{:.6}", t.name, t.onset, c.tp, c.fp, c.fn_, c.tn, t.f1);
    }
    s
}

pub fn eval(a: EvalArgs) -> anyhow::Result<()> {
    require_file(&a.model)?;
    if !SPLITS.contains(&a.split.as_str()) {
        return usage(format!("split must be one of {SPLITS:?}"));
    }
    let model = SlipModel::load(&a.model)?;
    let dir = data_path(a.data, "slip");
    let grid = GridSpec::cut();
    let trajs = load_split(&dir, &a.split, &grid)?;
    let r = evaluate(&model, &trajs, &LatticeMap::new(&grid)?)?;
    let objects: Vec<String> = trajs.iter().map(|t| t.object.clone()).collect();
    println!(
        "{}: {} trajectories, timing correct {:.3}, too early {:.3}, too late {:.3}, mean F1 {:.3}",
        model.arch,
        r.results.len(),
        r.timing_correct(),
        r.too_early(),
        r.too_late(),
        r.mean_f1()
    );
    let mut per_object: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (t, o) in r.results.iter().zip(&objects) {
        per_object.entry(o).or_default().push(t.f1);
    }
    for (o, f) in per_object {
        println!("  {o}: F1 {:.3} over {}", f.iter().sum::<f64>() / f.len() as f64, f.len());
    }
    write_text(&a.report, &report_csv(&r, &objects))?;
    if let Some(p) = &a.cdf {
        write_text(p, &r.timing_cdf_csv())?;
    }
    Ok(())
}
