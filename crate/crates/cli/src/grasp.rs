use std::path::{Path, PathBuf};

use clap::Args;
use evtac::grasp::control::DEFAULT_KP;
use evtac::grasp::episode::{grasp_objects, run_episode, Detector, EpisodeConfig, Perturbation};
use evtac::grasp::physics::GraspSimObject;
use evtac::sim::library;
use evtac::sim::scene::ObjectSpec;
use evtac::slip::model::SlipModel;

use crate::{require_file, usage, write_text};

/// Seconds into the balance phase at which the weight drops.
const PERTURB_AT_S: f64 = 10.0;

#[derive(Args)]
pub struct GraspArgs {
    /// Library object (object-N, grasp-object-N) or an object file.
    #[arg(long)]
    object: String,
    /// `oracle` or `model:<checkpoint>`.
    #[arg(long, default_value = "oracle")]
    detector: String,
    /// `none`, `20g` or `100g`.
    #[arg(long, default_value = "none")]
    perturb: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_KP)]
    kp: f64,
    #[arg(long, default_value_t = 10.0)]
    lift_s: f64,
    #[arg(long, default_value_t = 20.0)]
    balance_s: f64,
    /// Holds the approach command instead of reacting to slip.
    #[arg(long)]
    open_loop: bool,
    /// Per-tick controller log.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn load_object(spec: &str) -> anyhow::Result<GraspSimObject> {
    let known = library::objects().into_iter().chain(grasp_objects(40, 2.3, 3.3, 5));
    if let Some(o) = known.into_iter().find(|o| o.name == spec) {
        return Ok(o);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return usage(format!("unknown object {spec:?}: expected object-1..12, grasp-object-1..40 or an object file"));
    }
    let o: ObjectSpec = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| crate::Usage(format!("object file {spec}: {e}")))?;
    Ok(GraspSimObject::from(&o))
}

fn load_detector(spec: &str) -> anyhow::Result<Detector> {
    match spec.split_once(':') {
        None if spec == "oracle" => Ok(Detector::Oracle),
        Some(("model", p)) => {
            require_file(Path::new(p))?;
            Ok(Detector::Model(Box::new(SlipModel::load(Path::new(p))?)))
        }
        _ => usage(format!("detector {spec:?}: expected oracle or model:<checkpoint>")),
    }
}

fn parse_perturb(spec: &str, balance_s: f64) -> anyhow::Result<Option<Perturbation>> {
    let at_s = PERTURB_AT_S.min(balance_s / 2.0);
    match spec {
        "none" => Ok(None),
        s => match s.strip_suffix('g').and_then(|g| g.parse::<f64>().ok()).filter(|g| *g > 0.0) {
            Some(grams) => Ok(Some(Perturbation { grams, at_s })),
            None => usage(format!("perturbation {s:?}: expected none, 20g or 100g")),
        },
    }
}

pub fn run(a: GraspArgs) -> anyhow::Result<()> {
    let object = load_object(&a.object)?;
    let detector = load_detector(&a.detector)?;
    let cfg = EpisodeConfig {
        lift_s: a.lift_s,
        balance_s: a.balance_s,
        k_p: a.kp,
        open_loop: a.open_loop,
        perturbation: parse_perturb(&a.perturb, a.balance_s)?,
        seed: a.seed,
        keep_log: a.log.is_some(),
    };
    let r = run_episode(&object, &detector, &cfg)?;
    print!("{}", r.summary());
    if let Some(p) = r.latency_p99_us {
        println!("detector p99 {p:.0} us");
    }
    if let Some(p) = &a.log {
        write_text(p, &r.log_csv())?;
    }
    Ok(())
}
