use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use nlos_core::metrics::{FrameMetrics, MetricReport};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::store;

pub const EVAL_HEADER: &str = "object,method,frame,ED,CS,SSIM,PSNR";

fn num(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.digits$}")
    }
}

fn row(s: &mut String, object: &str, method: &str, frame: &str, m: &FrameMetrics) {
    let _ = writeln!(
        s,
        "{object},{method},{frame},{},{},{},{}",
        num(m.ed, 6),
        num(m.cs, 6),
        num(m.ssim, 6),
        num(m.psnr, 4)
    );
}

/// CSV text for a set of reports: optional per-frame rows followed by one
/// `mean` row per report.
pub fn write_report(reports: &[MetricReport], per_frame_rows: bool) -> String {
    let mut s = String::from("# metrics per frame; mean rows average the per-frame values\n");
    s.push_str(EVAL_HEADER);
    s.push('\n');
    for r in reports {
        if per_frame_rows {
            for (frame, m) in &r.frames {
                row(&mut s, &r.sequence, &r.method, frame, m);
            }
        }
        if let Some(m) = r.mean() {
            row(&mut s, &r.sequence, &r.method, "mean", &m);
        }
    }
    s
}

type Groups = BTreeMap<String, BTreeMap<String, PathBuf>>;

fn grouped(dir: &Path) -> Result<Groups> {
    if !dir.is_dir() {
        return Err(CliError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let groups = store::collect_images(dir)?;
    if groups.is_empty() {
        return Err(CliError::EvalMismatch(format!("{} holds no PGM images", dir.display())));
    }
    Ok(groups.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect())
}

pub fn eval(cfg: &RunConfig, recon: &Path, gt: &Path, method: &str, csv: &Path) -> Result<()> {
    let mut rec = grouped(recon)?;
    let truth = grouped(gt)?;
    // Two flat directories pair up regardless of their names.
    if rec.len() == 1 && truth.len() == 1 && rec.keys().ne(truth.keys()) {
        let (_, frames) = rec.pop_first().expect("one group");
        rec.insert(truth.keys().next().expect("one group").clone(), frames);
    }
    let mut missing = Vec::new();
    for (object, frames) in &truth {
        match rec.get(object) {
            None => missing.push(format!("{object} missing from {}", recon.display())),
            Some(r) => {
                for f in frames.keys().filter(|f| !r.contains_key(*f)) {
                    missing.push(format!("{object}/{f} missing from {}", recon.display()));
                }
                for f in r.keys().filter(|f| !frames.contains_key(*f)) {
                    missing.push(format!("{object}/{f} missing from {}", gt.display()));
                }
            }
        }
    }
    for object in rec.keys().filter(|o| !truth.contains_key(*o)) {
        missing.push(format!("{object} missing from {}", gt.display()));
    }
    if !missing.is_empty() {
        return Err(CliError::EvalMismatch(missing.join("; ")));
    }
    let mut reports = Vec::with_capacity(truth.len());
    for (object, frames) in &truth {
        let mut report = MetricReport::new(object.clone(), method);
        for (frame, gt_path) in frames {
            let image = store::load_image(&rec[object][frame])?;
            let truth = store::load_image(gt_path)?;
            report
                .push(frame.clone(), &image, &truth)
                .map_err(|e| e.context(format!("{object}/{frame}")))?;
        }
        if let Some(m) = report.mean() {
            info!(
                "{object} {method}: ED {} CS {} SSIM {} PSNR {}",
                num(m.ed, 4),
                num(m.cs, 4),
                num(m.ssim, 4),
                num(m.psnr, 2)
            );
        }
        reports.push(report);
    }
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        store::create_dir(parent)?;
    }
    store::write_bytes(csv, write_report(&reports, cfg.metrics.per_frame_rows).as_bytes())
}
