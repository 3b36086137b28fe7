mod bench;
mod force;
mod grasp;
mod sensing;
mod slip;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Default directory for generated data sets and models.
pub const DATA_DIR_ENV: &str = "EVTAC_DATA_DIR";

#[derive(Parser)]
#[command(name = "evtac", version, about = "Event-based tactile sensing: simulate, track, detect slip, control grasps")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a gel scene into an event recording.
    Simulate(sensing::SimulateArgs),
    /// Track the dots of a recording.
    Track(sensing::TrackArgs),
    /// Per-dot features of a recording.
    Features(sensing::FeaturesArgs),
    /// Detect a vibration frequency from event counts.
    Vibration(sensing::VibrationArgs),
    /// Event bytes against an RGB stream over an interval.
    Datarate(sensing::DatarateArgs),
    /// Fit a shear force model.
    ForceFit(force::FitArgs),
    /// Evaluate a shear force model.
    ForceEval(force::EvalArgs),
    /// Label slip in a recording, or simulate a labeled data set.
    SlipLabel(slip::LabelArgs),
    /// Train a slip model.
    SlipTrain(slip::TrainArgs),
    /// Evaluate a slip model on a data set split.
    SlipEval(slip::EvalArgs),
    /// Run one grasp episode.
    GraspSim(grasp::GraspArgs),
    /// Per-tick latency of the streaming stages.
    Bench(bench::BenchArgs),
}

/// Bad arguments, missing inputs or malformed files.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

/// `path` itself when given, else `name` inside the data directory.
pub fn data_path(path: Option<PathBuf>, name: &str) -> PathBuf {
    path.unwrap_or_else(|| PathBuf::from(std::env::var_os(DATA_DIR_ENV).unwrap_or_else(|| "data".into())).join(name))
}

pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return usage(format!("no such file: {}", path.display()));
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    evtac::io::write_atomic_str(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    use evtac::error::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return (2, "usage");
    }
    match err.downcast_ref::<E>() {
        Some(E::InvalidInput(_) | E::InvalidScene(_) | E::UnknownConfig(_) | E::Parse(_)) => (2, "usage"),
        Some(E::Decode(_) | E::Shape(_)) => (2, "schema"),
        Some(E::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => (2, "missing-file"),
        _ => (1, "internal"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let result = match cli.command {
        Command::Simulate(a) => sensing::simulate(a),
        Command::Track(a) => sensing::track(a),
        Command::Features(a) => sensing::features(a),
        Command::Vibration(a) => sensing::vibration(a),
        Command::Datarate(a) => sensing::datarate(a),
        Command::ForceFit(a) => force::fit(a),
        Command::ForceEval(a) => force::eval(a),
        Command::SlipLabel(a) => slip::label(a),
        Command::SlipTrain(a) => slip::train(a),
        Command::SlipEval(a) => slip::eval(a),
        Command::GraspSim(a) => grasp::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = exit_code(&e);
            eprintln!("error[{category}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
