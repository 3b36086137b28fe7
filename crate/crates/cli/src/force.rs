use std::path::PathBuf;

use clap::{Args, ValueEnum};
use evtac::force::{evaluate, fit_linear, fit_network, ForceDataset, ForceModel, ForceTrajectory, EPOCHS, SAMPLES_PER_TRAJECTORY};
use evtac::sim::{library, simulate};
use evtac::tracker::{track, DotGrid, TrackerConfig};

use crate::{data_path, require_file, usage, write_text};

const SHEAR_SECONDS: f64 = 10.0;
const SHEAR_NOISE: f64 = 0.05;

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Linear,
    Nn,
}

#[derive(Args)]
pub struct FitArgs {
    /// Force data CSV; defaults to force.csv in the data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Kind,
    #[arg(long)]
    out: PathBuf,
    /// Simulates the shear scenes and writes the data file first.
    #[arg(long)]
    generate: bool,
    #[arg(long, default_value_t = EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Tracked displacements and true shear forces of the shear scenes; the last
/// trajectory is the held-out one.
fn shear_dataset(seed: u64) -> anyhow::Result<ForceDataset> {
    let mut trajectories = Vec::new();
    for k in 0..library::SHEAR_SCENES {
        let scene = library::shear_scene(k, SHEAR_SECONDS, SHEAR_NOISE, seed.wrapping_add(100 + k as u64));
        let (frames, truth) = simulate(&scene, SHEAR_SECONDS)?;
        let centers = track(&frames, &DotGrid::from_grid(&scene.grid), &TrackerConfig::default())?;
        let forces: Vec<(f64, f64)> = truth.ticks.iter().map(|t| t.force).collect();
        trajectories.push(ForceTrajectory::from_run(&centers, &truth.rest, &forces, SAMPLES_PER_TRAJECTORY)?);
    }
    Ok(ForceDataset { trajectories })
}

pub fn fit(a: FitArgs) -> anyhow::Result<()> {
    let path = data_path(a.data, "force.csv");
    let ds = if a.generate {
        let ds = shear_dataset(a.seed)?;
        write_text(&path, &ds.to_csv())?;
        ds
    } else {
        require_file(&path)?;
        ForceDataset::load(&path)?
    };
    if ds.trajectories.len() < 2 {
        return usage("force data needs at least two trajectories (the last one is held out)");
    }
    let (train, held) = ds.trajectories.split_at(ds.trajectories.len() - 1);
    let model = match a.model {
        Kind::Linear => ForceModel::Linear(fit_linear(train)?),
        Kind::Nn => {
            let fit = fit_network(&ds.trajectories, a.epochs, a.seed)?;
            println!("best epoch {} of {}", fit.best_epoch, a.epochs);
            ForceModel::Network(fit.network)
        }
    };
    let e = evaluate(&model, &held[0])?;
    println!("held-out MAE x {:.4} N, y {:.4} N", e.mae.0, e.mae.1);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&a.out)?;
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trajectory to evaluate; the last one by default.
    #[arg(long)]
    trajectory: Option<usize>,
    /// Per-sample true and predicted forces.
    #[arg(long)]
    out: PathBuf,
}

pub fn eval(a: EvalArgs) -> anyhow::Result<()> {
    require_file(&a.model)?;
    let path = data_path(a.data, "force.csv");
    require_file(&path)?;
    let model = ForceModel::load(&a.model)?;
    let ds = ForceDataset::load(&path)?;
    let i = a.trajectory.unwrap_or(ds.trajectories.len().saturating_sub(1));
    let Some(t) = ds.trajectories.get(i) else {
        return usage(format!("data has {} trajectories, asked for {i}", ds.trajectories.len()));
    };
    let e = evaluate(&model, t)?;
    println!("trajectory {i}: MAE x {:.4} N, y {:.4} N", e.mae.0, e.mae.1);
    write_text(&a.out, &e.to_csv())
}
