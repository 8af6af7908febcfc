//! End-to-end runs of the `latentslam` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latentslam_core::latent::Checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentslam"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(dir: &Path, name: &str, seed: &str) {
    ok(
        dir,
        &["simulate", "--out", name, "--flights", "2", "--frames", "80", "--image", "16x16x1", "--seed", seed],
    );
}

fn tiny_train(dir: &Path, out: &str, epochs: &str, extra: &[&str]) {
    let mut args = vec![
        "train", "--dataset", "ds", "--out", out, "--epochs", epochs, "--sequence-length", "8",
        "--learning-rate", "1e-3",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

const TINY: [&str; 6] = ["--latent-dim", "4", "--hidden", "16", "--channels", "4,8"];

#[test]
fn exit_codes_separate_usage_validation_and_success() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["train", "--dataset", "missing", "--out", "m.ckpt"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["slam", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["simulate", "--out", "d", "--aliasing", "1.5"]).status.code(), Some(2));
    assert!(!dir.path().join("d").exists());
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn config_file_fills_unset_flags_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "ds", "1");
    fs::write(
        d.join("train.cfg"),
        "# tiny model\nepochs = 1\nlatent_dim = 4\nhidden = 16\nchannels = 4,8\nsequence_length = 8\n",
    )
    .unwrap();
    ok(d, &["train", "--config", "train.cfg", "--dataset", "ds", "--out", "a.ckpt"]);
    ok(d, &["train", "--config", "train.cfg", "--dataset", "ds", "--out", "b.ckpt", "--epochs", "2"]);
    assert_eq!(Checkpoint::load(&d.join("a.ckpt")).unwrap().epochs_done, 1);
    let b = Checkpoint::load(&d.join("b.ckpt")).unwrap();
    assert_eq!(b.epochs_done, 2);
    assert_eq!(b.params.architecture().latent_dim, 4);

    fs::write(d.join("bad.cfg"), "epochs = 1\nlearning_rat = 0.1\n").unwrap();
    let out = run(d, &["train", "--config", "bad.cfg", "--dataset", "ds", "--out", "c.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
    fs::write(d.join("nested.cfg"), "config = other.cfg\n").unwrap();
    assert_eq!(run(d, &["train", "--config", "nested.cfg", "--dataset", "ds", "--out", "c.ckpt"]).status.code(), Some(2));
    assert_eq!(run(d, &["train", "--config", "absent.cfg", "--dataset", "ds", "--out", "c.ckpt"]).status.code(), Some(2));
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "a", "7");
    simulate(d, "b", "7");
    simulate(d, "c", "8");
    let (a, b, c) = (tree_bytes(&d.join("a")), tree_bytes(&d.join("b")), tree_bytes(&d.join("c")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn resumed_training_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "ds", "2");
    tiny_train(d, "full.ckpt", "3", &TINY);
    tiny_train(d, "half.ckpt", "1", &TINY);
    tiny_train(d, "resumed.ckpt", "3", &["--resume", "half.ckpt"]);
    let full = Checkpoint::load(&d.join("full.ckpt")).unwrap();
    let resumed = Checkpoint::load(&d.join("resumed.ckpt")).unwrap();
    assert_eq!(resumed.epochs_done, 3);
    assert_eq!(full.params.values(), resumed.params.values());
    let log = fs::read_to_string(d.join("resumed.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "header plus epochs 2 and 3");
    assert_eq!(log, {
        let full_log = fs::read_to_string(d.join("full.loss.csv")).unwrap();
        let mut lines: Vec<&str> = full_log.lines().collect();
        lines.remove(1);
        lines.join("\n") + "\n"
    });
}

#[test]
fn slam_eval_and_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "ds", "3");
    tiny_train(d, "m.ckpt", "1", &TINY);
    let slam = ["slam", "--dataset", "ds", "--checkpoint", "m.ckpt", "--view-threshold", "0.01"];
    let first = ok(d, &[&slam[..], &["--out", "run1"]].concat());
    ok(d, &[&slam[..], &["--out", "run2"]].concat());
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("nodes") && stdout.contains("loop closures"), "{stdout}");
    for f in ["map.json", "reports.jsonl", "edges.csv", "summary.json"] {
        assert!(d.join("run1").join(f).is_file(), "{f}");
    }
    for f in ["map.json", "reports.jsonl", "edges.csv"] {
        assert_eq!(fs::read(d.join("run1").join(f)).unwrap(), fs::read(d.join("run2").join(f)).unwrap(), "{f}");
    }
    let reports = fs::read_to_string(d.join("run1/reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 80);

    let out = ok(d, &["eval", "--map", "run1/map.json", "--dataset", "ds"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["sequence", "frames", "topology", "dead_reckoning_endpoint_error", "aliasing"] {
        assert!(v.get(key).is_some(), "missing {key} in {v}");
    }
    for key in ["node_count", "link_count", "revisit_match_rate", "false_closure_rate", "mean_node_error"] {
        assert!(v["topology"].get(key).is_some(), "missing topology.{key}");
    }
    assert_eq!(v["frames"], 80);

    ok(d, &["plot", "--map", "run1/map.json", "--out", "map.svg"]);
    let svg = fs::read_to_string(d.join("map.svg")).unwrap();
    let map: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run1/map.json")).unwrap()).unwrap();
    assert_eq!(svg.matches("<circle").count(), map["map"]["experiences"].as_array().unwrap().len());
    ok(d, &["plot", "--reports", "run1/reports.jsonl", "--dataset", "ds", "--out", "trace.svg"]);
    assert_eq!(fs::read_to_string(d.join("trace.svg")).unwrap().matches("<polyline").count(), 2);
}

#[test]
fn slam_rejects_mismatched_checkpoint_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "ds", "4");
    tiny_train(d, "m.ckpt", "1", &TINY);
    ok(
        d,
        &["simulate", "--out", "rgb", "--flights", "1", "--frames", "20", "--image", "16x16x3"],
    );
    let out = run(d, &["slam", "--dataset", "rgb", "--checkpoint", "m.ckpt", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("run").exists());
}

#[test]
fn eval_without_ground_truth_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "ds", "5");
    tiny_train(d, "m.ckpt", "1", &TINY);
    ok(d, &["slam", "--dataset", "ds", "--checkpoint", "m.ckpt", "--out", "run"]);
    // strip the ground-truth columns from the first sequence
    let manifest_path = d.join("ds/manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_slice(&fs::read(&manifest_path).unwrap()).unwrap();
    let seq = &mut manifest["sequences"][0];
    seq["has_ground_truth"] = false.into();
    let csv_path = d.join("ds").join(seq["path"].as_str().unwrap()).join("odometry.csv");
    let stripped: String = fs::read_to_string(&csv_path)
        .unwrap()
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            cols[..cols.len() - 3].join(",") + "\n"
        })
        .collect();
    fs::write(&csv_path, stripped).unwrap();
    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
    let out = run(d, &["eval", "--map", "run/map.json", "--dataset", "ds"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
