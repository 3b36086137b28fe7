use std::path::Path;
use std::process::{Command, Output};

use evtac::force::{ForceDataset, ForceSample, ForceTrajectory};

fn evtac(args: &[&str], data_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evtac")).args(args).env("EVTAC_DATA_DIR", data_dir).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(evtac(&[], d.path()).status.code(), Some(2));
    assert_eq!(evtac(&["track", "--bogus"], d.path()).status.code(), Some(2));
    let missing = evtac(&["track", "--input", &p(d.path(), "nope.evtc"), "--out", &p(d.path(), "t.csv")], d.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error[usage]"));
    assert!(!d.path().join("t.csv").exists());
    let scene = evtac(&["simulate", "--scene", "no-such-scene", "--out", &p(d.path(), "x.evtc")], d.path());
    assert_eq!(scene.status.code(), Some(2));
    assert_eq!(evtac(&["slip-train", "--config", "hist-3", "--out", &p(d.path(), "m")], d.path()).status.code(), Some(2));
}

#[test]
fn corrupt_recording_is_a_schema_error() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("bad.evtc");
    std::fs::write(&f, b"EVTC\x09garbage").unwrap();
    let out = evtac(&["datarate", "--input", &f.to_string_lossy()], d.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vibration_recording_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let rec = p(d.path(), "vib.evtc");
    ok(&evtac(&["simulate", "--scene", "vibration-300", "--duration", "2", "--out", &rec, "--truth", &p(d.path(), "truth.csv")], d.path()));
    let report = ok(&evtac(
        &["vibration", "--input", &rec, "--window", "1", "--target", "300", "--spectrum", &p(d.path(), "spec.csv"), "--out", &p(d.path(), "seg.csv")],
        d.path(),
    ));
    assert!(report.contains("segment 0: 300 Hz"), "{report}");
    assert!(report.contains("2/2 segments"));
    assert!(std::fs::read_to_string(d.path().join("spec.csv")).unwrap().starts_with("frequency_hz,amplitude"));

    let rate = ok(&evtac(&["datarate", "--input", &rec, "--interval", "0.5,1.5", "--csv", &p(d.path(), "rate.csv")], d.path()));
    assert!(rate.contains("ratio"));

    ok(&evtac(&["track", "--input", &rec, "--grid", "vibration-300", "--out", &p(d.path(), "track.csv")], d.path()));
    let track = std::fs::read_to_string(d.path().join("track.csv")).unwrap();
    assert!(track.starts_with("tick,dot,x,y\n"));
    assert_eq!(track.lines().count(), 1 + 2000 * 56);
    ok(&evtac(&["features", "--input", &rec, "--grid", "plain", "--out", &p(d.path(), "feat.csv")], d.path()));
}

#[test]
fn seeded_simulation_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    for name in ["a.evtc", "b.evtc"] {
        ok(&evtac(&["simulate", "--scene", "distractor-0", "--duration", "0.3", "--seed", "3", "--out", &p(d.path(), name)], d.path()));
    }
    assert_eq!(std::fs::read(d.path().join("a.evtc")).unwrap(), std::fs::read(d.path().join("b.evtc")).unwrap());
}

#[test]
fn force_fit_and_eval() {
    let d = tempfile::tempdir().unwrap();
    let trajectories = (0..3)
        .map(|t| ForceTrajectory {
            samples: (0..40)
                .map(|k| {
                    let v = (k as f64 * 0.37 + t as f64).sin();
                    let w = (k as f64 * 0.11).cos();
                    ForceSample { disp: vec![v, w, v * w, (k as f64 * 0.05 + t as f64).sin()], force: (0.4 * v - 0.1 * w + 0.2, 0.3 * w) }
                })
                .collect(),
        })
        .collect();
    let data = p(d.path(), "force.csv");
    std::fs::write(&data, ForceDataset { trajectories }.to_csv()).unwrap();
    let fit = ok(&evtac(&["force-fit", "--data", &data, "--model", "linear", "--out", &p(d.path(), "lin.ckpt")], d.path()));
    assert!(fit.contains("held-out MAE"));
    ok(&evtac(&["force-eval", "--model", &p(d.path(), "lin.ckpt"), "--data", &data, "--out", &p(d.path(), "eval.csv")], d.path()));
    assert!(std::fs::read_to_string(d.path().join("eval.csv")).unwrap().starts_with("sample,fx_true"));
    ok(&evtac(&["force-fit", "--model", "nn", "--epochs", "2", "--seed", "1", "--out", &p(d.path(), "nn.ckpt")], d.path()));
    let a = std::fs::read(d.path().join("nn.ckpt")).unwrap();
    ok(&evtac(&["force-fit", "--model", "nn", "--epochs", "2", "--seed", "1", "--out", &p(d.path(), "nn2.ckpt")], d.path()));
    assert_eq!(a, std::fs::read(d.path().join("nn2.ckpt")).unwrap());
}

#[test]
fn grasp_episode_with_log() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&evtac(
        &["grasp-sim", "--object", "object-1", "--lift-s", "3", "--balance-s", "4", "--perturb", "20g", "--log", &p(d.path(), "ep.csv")],
        d.path(),
    ));
    assert!(out.contains("lift success true"), "{out}");
    let log = std::fs::read_to_string(d.path().join("ep.csv")).unwrap();
    assert!(log.starts_with("tick,x_g,x_ref,u_ff,u_c,slip,object_travel\n"));
    assert_eq!(evtac(&["grasp-sim", "--object", "object-1", "--perturb", "5kg?"], d.path()).status.code(), Some(2));
}

#[test]
fn bench_reports_percentiles() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&evtac(&["bench", "track", "--duration", "1", "--histogram", &p(d.path(), "h.csv")], d.path()));
    assert!(out.contains("1000 ticks") && out.contains("p99"), "{out}");
}

#[test]
fn slip_dataset_train_and_eval() {
    let d = tempfile::tempdir().unwrap();
    ok(&evtac(&["slip-label", "--dataset", &p(d.path(), "slip"), "--per-object", "2", "--test-per-object", "1", "--eval-per-object", "1"], d.path()));
    let one = std::fs::read_dir(d.path().join("slip/eval")).unwrap().filter_map(|e| e.ok()).find(|e| e.path().extension().is_some_and(|x| x == "evtc")).unwrap();
    let relabel = ok(&evtac(&["slip-label", "--input", &one.path().to_string_lossy(), "--out", &p(d.path(), "labels.csv")], d.path()));
    assert!(relabel.contains("slip from tick"), "{relabel}");
    let stored = one.path().with_extension("labels.csv");
    assert!(std::fs::read_to_string(stored).unwrap().starts_with(&std::fs::read_to_string(d.path().join("labels.csv")).unwrap()));

    let model = p(d.path(), "m.evsm");
    let args = ["slip-train", "--config", "fast-slow-hist-50", "--seed", "2", "--epochs", "2", "--max-batches", "2", "--out", &model];
    let trained = ok(&evtac(&args, d.path()));
    assert!(trained.contains("threshold"));
    let first = std::fs::read(&model).unwrap();
    ok(&evtac(&args, d.path()));
    assert_eq!(first, std::fs::read(&model).unwrap());
    let eval = ok(&evtac(&["slip-eval", "--model", &model, "--report", &p(d.path(), "r.csv"), "--cdf", &p(d.path(), "cdf.csv")], d.path()));
    assert!(eval.contains("timing correct"));
    assert!(std::fs::read_to_string(d.path().join("r.csv")).unwrap().starts_with("trajectory,object,onset"));
}
