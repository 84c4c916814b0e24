use std::path::Path;
use std::time::Instant;

use log::info;
use nlos_core::dataset::generate_sequence;
use nlos_core::distortion::distort_cube;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::store::{self, Manifest, MANIFEST_VERSION};

pub fn make_dataset(cfg: &RunConfig, out: &Path) -> Result<()> {
    let specs = cfg.dataset.plan.specs()?;
    let seq_cfg = cfg.sequence_config();
    store::create_dir(out)?;
    let mut entries = Vec::with_capacity(specs.len());
    for (id, (shape, motion)) in specs.iter().enumerate() {
        let t = Instant::now();
        let seq = generate_sequence(id as u64, shape, motion, &seq_cfg)?;
        entries.push(store::write_sequence(out, &seq)?);
        info!(
            "{}: {} {} frames in {:.2?}",
            seq.name(),
            shape.kind.name(),
            seq.frames.len(),
            t.elapsed()
        );
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        plan: cfg.dataset.plan.clone(),
        config: seq_cfg,
        sequences: entries,
    };
    store::write_manifest(out, &manifest)?;
    info!("wrote {} sequences to {}", manifest.sequences.len(), out.display());
    Ok(())
}

/// `frame_000_dense` becomes `frame_000_distorted`; other stems get the
/// suffix appended.
pub fn distorted_name(stem: &str) -> String {
    match stem.strip_suffix("_dense") {
        Some(base) => format!("{base}_distorted.tcube"),
        None => format!("{stem}_distorted.tcube"),
    }
}

pub fn distort(cfg: &RunConfig, inputs: &[std::path::PathBuf], out: &Path) -> Result<()> {
    store::create_dir(out)?;
    let target = cfg.target_resolution();
    for input in inputs {
        let cube = store::load_cube(input)?;
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let dest = out.join(distorted_name(&stem));
        if dest.canonicalize().ok().is_some_and(|d| input.canonicalize().ok() == Some(d)) {
            return Err(CliError::Usage(format!("{} would overwrite its input", dest.display())));
        }
        let t = Instant::now();
        let distorted = distort_cube(&cube, target, &cfg.distortion)
            .map_err(|e| e.context(input.display().to_string()))?;
        store::save_cube(&dest, &distorted)?;
        info!("{} -> {} in {:.2?}", input.display(), dest.display(), t.elapsed());
    }
    Ok(())
}
