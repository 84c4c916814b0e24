mod common;

use std::fs;
use std::path::Path;

use common::*;
use nlos_cli::store::read_manifest;
use nlos_cli::tcube::{read_tcube, write_tcube};
use nlos_core::{CubeKind, ReconImage, TimeAxis, TransientCube, WallGeometry};
use nlos_model::LossTrace;

fn train_stage1(cfg: &Path, data: &Path, out: &Path) {
    ok(&run(&["train", "--stage", "1", "--config", s(cfg), "--dataset", s(data), "--out", s(out)]));
}

#[test]
fn make_dataset_writes_the_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let m = read_manifest(&data).unwrap();
    assert_eq!(m.sequences.len(), 2);
    let files = tree(&data);
    let cubes = files.iter().filter(|(n, _)| n.ends_with(".tcube")).count();
    assert_eq!(cubes, 2 * 3 * 2);
    assert_eq!(files.iter().filter(|(n, _)| n.ends_with("_gt.pgm")).count(), 6);
    assert!(files.iter().any(|(n, _)| n == "seq_0001/frame_002_distorted.tcube"));

    let again = dir.path().join("again");
    ok(&run(&["make-dataset", "--config", s(&cfg), "--out", s(&again)]));
    assert_eq!(tree(&again), files);
    ok(&run(&["make-dataset", "--config", s(&cfg), "--out", s(&data)]));
    assert_eq!(tree(&data), files);

    let other = dir.path().join("other");
    ok(&run(&["make-dataset", "--config", s(&cfg), "--seed", "99", "--out", s(&other)]));
    assert_ne!(tree(&other), files);
}

#[test]
fn misspelled_config_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"dataset": {"plan": {"velocty": 0.2}}}"#);
    let o = run(&["make-dataset", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("dataset.plan"), "{err}");
    assert!(err.contains("did you mean `velocity`"), "{err}");
    assert!(!dir.path().join("d").exists());
}

#[test]
fn unreadable_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["info", "--config", s(&dir.path().join("none.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn distort_matches_the_dataset_cubes() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let out = dir.path().join("distorted");
    let dense = data.join("seq_0000/frame_001_dense.tcube");
    let before = fs::read(&dense).unwrap();
    ok(&run(&["distort", s(&dense), "--config", s(&cfg), "--out", s(&out)]));
    // The dataset distorts the unquantised dense cube, so agreement is at f32 level.
    let ours = read_tcube(&out.join("frame_001_distorted.tcube")).unwrap();
    let theirs = read_tcube(&data.join("seq_0000/frame_001_distorted.tcube")).unwrap();
    assert_eq!((ours.nx(), ours.ny(), ours.num_bins()), (theirs.nx(), theirs.ny(), theirs.num_bins()));
    let peak = theirs.max_value();
    assert!(peak > 0.0);
    for (a, b) in ours.data().iter().zip(theirs.data()) {
        assert!((a - b).abs() <= 1e-5 * peak, "{a} vs {b}");
    }
    assert_eq!(fs::read(&dense).unwrap(), before);
    let o = run(&["distort", s(&out.join("frame_001_distorted.tcube")), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn reconstruct_validates_methods_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let out = dir.path().join("r");
    let o = run(&["reconstruct", s(&data), "--method", "fk", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("supported: lct, backprojection, transit"), "{}", stderr(&o));
    let o = run(&["reconstruct", s(&data), "--method", "transit", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&[
        "reconstruct",
        s(&data),
        "--method",
        "transit",
        "--checkpoint",
        s(&dir.path().join("nope.ckpt")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let bad = dir.path().join("bad.tcube");
    fs::write(&bad, b"XCUB0000").unwrap();
    let o = run(&["reconstruct", s(&bad), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn lct_reconstruction_writes_one_image_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let out = dir.path().join("r");
    ok(&run(&["reconstruct", s(&data), "--method", "lct", "--config", s(&cfg), "--out", s(&out)]));
    let imgs = tree(&out);
    assert_eq!(imgs.len(), 6);
    assert_eq!(imgs[0].0, "seq_0000/frame_000.pgm");
    for (_, bytes) in &imgs {
        let img = ReconImage::from_pgm_bytes(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (16, 16));
        assert_eq!(img.max(), 1.0);
    }
    let csv = dir.path().join("m.csv");
    ok(&run(&["eval", s(&out), s(&data), "--method", "lct", "--csv", s(&csv)]));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "object,method,frame,ED,CS,SSIM,PSNR");
    assert_eq!(lines.len(), 1 + 2 * (3 + 1));
    assert!(lines.iter().any(|l| l.starts_with("seq_0001,lct,mean,")));
}

fn zero_cube(dir: &Path) -> std::path::PathBuf {
    let cube = TransientCube::zeros(
        WallGeometry::square(2.0, 4).unwrap(),
        TimeAxis::new(32, 4e-10).unwrap(),
        CubeKind::IdealDistorted,
    );
    let p = dir.join("zero.tcube");
    write_tcube(&p, &cube).unwrap();
    p
}

#[test]
fn zero_cube_gives_zero_image_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let model = dir.path().join("model");
    train_stage1(&cfg, &data, &model);
    let zero = zero_cube(dir.path());
    for method in ["lct", "backprojection", "transit"] {
        let out = dir.path().join(method);
        let ckpt = model.join("stage1.ckpt");
        let mut args = vec!["reconstruct", s(&zero), "--method", method, "--config", s(&cfg), "--out", s(&out)];
        if method == "transit" {
            args.extend(["--checkpoint", s(&ckpt)]);
        }
        ok(&run(&args));
        let img = ReconImage::from_pgm_bytes(&fs::read(out.join("input/zero.pgm")).unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), (16, 16), "{method}");
        assert!(img.pixels().iter().all(|&v| v == 0.0), "{method}");
    }
}

#[test]
fn training_writes_checkpoints_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let out = dir.path().join("m");
    train_stage1(&cfg, &data, &out);
    let trace = fs::read_to_string(out.join("stage1_trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    let info = run(&["info", s(&out.join("stage1.ckpt"))]);
    ok(&info);
    assert!(stdout(&info).contains("epochs completed: 6"), "{}", stdout(&info));

    let recon = dir.path().join("recon");
    ok(&run(&[
        "reconstruct",
        s(&data),
        "--method",
        "transit",
        "--checkpoint",
        s(&out.join("stage1.ckpt")),
        "--out",
        s(&recon),
    ]));
    assert_eq!(tree(&recon).len(), 6);

    let o = run(&["train", "--stage", "2", "--config", s(&cfg), "--dataset", s(&data), "--target", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "stage 2 without a checkpoint");
    let o = run(&[
        "train",
        "--stage",
        "2",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data),
        "--checkpoint",
        s(&out.join("stage1.ckpt")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "stage 2 without a target");
    ok(&run(&[
        "train",
        "--stage",
        "2",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data),
        "--checkpoint",
        s(&out.join("stage1.ckpt")),
        "--target",
        s(&data),
        "--out",
        s(&out),
    ]));
    let t2 = LossTrace::from_csv(&fs::read_to_string(out.join("stage2_trace.csv")).unwrap()).unwrap();
    assert_eq!(t2.records.len(), 3);
    for r in &t2.records {
        assert!(r.mmd < 0.05, "same-domain mmd {}", r.mmd);
    }
}

#[test]
fn interrupted_training_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let full = dir.path().join("full");
    train_stage1(&cfg, &data, &full);
    let part = dir.path().join("part");
    let base = ["train", "--stage", "1", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&part)];
    let mut first = base.to_vec();
    first.extend(["--stop-after", "2"]);
    ok(&run(&first));
    let early = LossTrace::from_csv(&fs::read_to_string(part.join("stage1_trace.csv")).unwrap()).unwrap();
    assert_eq!(early.records.len(), 2);
    let mut resume = base.to_vec();
    resume.push("--resume");
    ok(&run(&resume));
    assert_eq!(
        fs::read(part.join("stage1_trace.csv")).unwrap(),
        fs::read(full.join("stage1_trace.csv")).unwrap()
    );
    assert_eq!(fs::read(part.join("stage1.ckpt")).unwrap(), fs::read(full.join("stage1.ckpt")).unwrap());

    let fresh = dir.path().join("fresh");
    let o = run(&["train", "--stage", "1", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&fresh), "--resume"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn divergence_exits_five_and_keeps_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (_, data) = tiny_dataset(dir.path());
    let text = TINY_CONFIG.replace(
        r#""stage1": {"epochs": 6, "warmup_epochs": 1, "seed": 2}"#,
        r#""stage1": {"epochs": 6, "warmup_epochs": 1, "seed": 2, "lr_max": 1e300, "lr_min": 1e299, "weight_decay": 0.0}"#,
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("m");
    let o = run(&["train", "--stage", "1", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage1.ckpt"));
    assert!(out.join("stage1.ckpt").is_file());
    let info = run(&["info", s(&out.join("stage1.ckpt"))]);
    ok(&info);
}

#[test]
fn eval_identical_directories_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let (_, data) = tiny_dataset(dir.path());
    let csv = dir.path().join("m.csv");
    ok(&run(&["eval", s(&data), s(&data), "--csv", s(&csv)]));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 8);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(&f[3..], ["0.000000", "1.000000", "1.000000", "inf"], "{r}");
    }
}

#[test]
fn eval_reports_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let out = dir.path().join("r");
    ok(&run(&["reconstruct", s(&data), "--config", s(&cfg), "--out", s(&out)]));
    fs::remove_file(out.join("seq_0001/frame_002.pgm")).unwrap();
    let o = run(&["eval", s(&out), s(&data), "--csv", s(&dir.path().join("m.csv"))]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("seq_0001/frame_002"), "{}", stderr(&o));
    assert!(!dir.path().join("m.csv").exists());

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = run(&["eval", s(&empty), s(&empty), "--csv", s(&dir.path().join("e.csv"))]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn info_describes_each_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = tiny_dataset(dir.path());
    let o = run(&["info", s(&data)]);
    ok(&o);
    assert!(stdout(&o).contains("sequences: 2, frames: 6"), "{}", stdout(&o));
    let o = run(&["info", s(&data.join("seq_0000/frame_000_distorted.tcube"))]);
    ok(&o);
    assert!(stdout(&o).contains("IdealDistorted"));
    assert!(stdout(&o).contains("scan: 4x4, bins: 32 of 400 ps"), "{}", stdout(&o));
    let o = run(&["info", "--config", s(&cfg)]);
    ok(&o);
    let shown: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(shown["model"]["scan_res"], 4);
    let c = read_tcube(&data.join("seq_0000/frame_000_dense.tcube")).unwrap();
    assert_eq!(c.wall().resolution, [16, 16]);
}

#[test]
fn thread_settings() {
    let o = run(&["info", "--threads", "2"]);
    ok(&o);
    let o = run(&["info", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("info").env("TRANSIT_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("info").env("TRANSIT_THREADS", "3").output().unwrap();
    ok(&o);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--stage", "3", "--dataset", "x"]).status.code(), Some(2));
}
