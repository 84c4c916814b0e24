#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = r#"{
  "render": {
    "wall": {"extent": [2.0, 2.0], "resolution": [16, 16], "detector_origin": [0.0, 0.0, -2.0]},
    "time_axis": {"num_bins": 32, "bin_width": 4e-10},
    "gt_resolution": [16, 16]
  },
  "model": {
    "scan_res": 4, "time_bins": 32, "compress_dim": 16, "token_dim": 16,
    "blocks": 1, "heads": 2, "patch_out": 4, "mlp_ratio": 2, "init_seed": 1
  },
  "training": {
    "stage1": {"epochs": 6, "warmup_epochs": 1, "seed": 2},
    "stage2": {"epochs": 3, "warmup_epochs": 1, "lr_max": 1e-3, "lr_min": 2e-5, "mmd_n": 64, "mmd_m": 64, "seed": 3}
  },
  "dataset": {
    "plan": {"num_sequences": 2, "num_frames": 3, "seed": 4, "sample_density": 600.0}
  },
  "reconstruct": {
    "baseline": {"upsample_to": [16, 16], "image_resolution": [16, 16], "image_extent": [2.0, 2.0], "depth_voxels": 16}
  }
}"#;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nlos"));
    c.env("RUST_LOG", "warn").env_remove("TRANSIT_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nlos")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[track_caller]
pub fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr:\n{}", o.status.code(), stderr(o));
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// All regular files below `root`, relative paths sorted.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Generate the tiny dataset into `dir/data` and return (config, data dir).
pub fn tiny_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = write_config(dir, TINY_CONFIG);
    let data = dir.join("data");
    ok(&run(&["make-dataset", "--config", s(&cfg), "--out", s(&data)]));
    (cfg, data)
}
