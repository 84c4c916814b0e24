use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nlos_core::recon::{baseline_image, Method};
use nlos_core::ReconImage;
use nlos_model::checkpoint;
use nlos_model::TransientTransformer;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::store::{self, CubeRole};
use crate::CubeChoice;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMethod {
    Classical(Method),
    Transit,
}

impl ReconMethod {
    pub const NAMES: [&'static str; 3] = ["lct", "backprojection", "transit"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "transit" => Ok(Self::Transit),
            other => Method::parse(other).map(Self::Classical).map_err(|_| {
                CliError::Usage(format!(
                    "unknown reconstruction method {other:?} (supported: {})",
                    Self::NAMES.join(", ")
                ))
            }),
        }
    }
}

pub fn load_model(path: Option<&Path>) -> Result<TransientTransformer> {
    let path = path.ok_or_else(|| CliError::MissingCheckpoint("--checkpoint is required".into()))?;
    if !path.is_file() || !checkpoint::sidecar_path(path).is_file() {
        return Err(CliError::MissingCheckpoint(path.display().to_string()));
    }
    Ok(checkpoint::load(path)
        .map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .model)
}

pub fn reconstruct(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    method: &str,
    checkpoint: Option<&Path>,
    cube: CubeChoice,
    out: &Path,
) -> Result<()> {
    let method = ReconMethod::parse(method)?;
    let model = match method {
        ReconMethod::Transit => Some(load_model(checkpoint)?),
        ReconMethod::Classical(_) => None,
    };
    let role = match cube {
        CubeChoice::Dense => CubeRole::Dense,
        CubeChoice::Distorted => CubeRole::Distorted,
    };
    let baseline = cfg.baseline();
    for seq in store::collect_cube_sequences(inputs, role)? {
        let dir = out.join(&seq.name);
        store::create_dir(&dir)?;
        let mut prev = None;
        for (k, (frame, path)) in seq.frames.iter().enumerate() {
            let cube = store::load_cube(path)?;
            let t = Instant::now();
            let zero = cube.max_value() == 0.0;
            let image = match (method, &model) {
                (ReconMethod::Transit, Some(m)) => {
                    let x = m.input_tensor(&cube)?;
                    let img = if zero {
                        let side = m.config().output_side();
                        ReconImage::zeros(side, side)
                    } else {
                        m.forward_frame(k, &x, prev.as_ref())?
                    };
                    prev = Some(x);
                    img
                }
                (ReconMethod::Classical(_), _) if zero => {
                    let [w, h] = baseline.image_resolution;
                    ReconImage::zeros(w, h)
                }
                (ReconMethod::Classical(method), _) => {
                    let b = nlos_core::recon::BaselineConfig { method, ..baseline };
                    baseline_image(&cube, &b)
                        .map_err(|e| e.context(path.display().to_string()))?
                        .normalized()
                }
                (ReconMethod::Transit, None) => unreachable!("model loaded above"),
            };
            let elapsed = t.elapsed();
            store::save_image(&dir.join(format!("{frame}.pgm")), &image)?;
            info!("{}/{frame}: {:.3} ms", seq.name, elapsed.as_secs_f64() * 1e3);
        }
    }
    Ok(())
}
