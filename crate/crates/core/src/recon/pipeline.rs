use serde::{Deserialize, Serialize};

use super::backproject::backproject;
use super::lct::{lct_reconstruct, LctConfig};
use super::upsample::upsample_cube;
use super::volume::{max_project, VolumeGrid};
use crate::error::{CoreError, Result};
use crate::image::ReconImage;
use crate::transient::{measured_to_ideal, TransientCube, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Lct,
    Backprojection,
}

impl Method {
    pub const NAMES: [&'static str; 2] = ["lct", "backprojection"];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lct => "lct",
            Self::Backprojection => "backprojection",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lct" => Ok(Self::Lct),
            "backprojection" | "bp" => Ok(Self::Backprojection),
            other => Err(CoreError::Config(format!(
                "unknown reconstruction method {other:?} (supported: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// Classical reconstruction of one cube into an image over the dense
/// wall frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub method: Method,
    pub lct: LctConfig,
    /// Scan grid the input is upsampled to first; `None` keeps it.
    pub upsample_to: Option<[usize; 2]>,
    pub image_resolution: [usize; 2],
    /// Lateral extent of the output image, meters.
    pub image_extent: [f64; 2],
    pub depth_voxels: usize,
    /// Depth range; defaults to the cube's time window.
    pub depth: Option<[f64; 2]>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Method::Lct,
            lct: LctConfig::default(),
            upsample_to: Some([64, 64]),
            image_resolution: [64, 64],
            image_extent: [2.0, 2.0],
            depth_voxels: 64,
            depth: None,
        }
    }
}

/// Upsample if needed, undo the round trip for measured cubes, reconstruct
/// and max-project. The volume is centred under the detector, which puts
/// sub-grid inputs back in the frame of the wall they were cut from.
pub fn baseline_image(cube: &TransientCube, config: &BaselineConfig) -> Result<ReconImage> {
    let mut cube = if cube.kind().is_ideal() {
        cube.clone()
    } else {
        measured_to_ideal(cube)?
    };
    if let Some(target) = config.upsample_to {
        if target != cube.wall().resolution {
            cube = upsample_cube(&cube, target)?;
        }
    }
    let axis = cube.time_axis();
    let depth = config.depth.unwrap_or([
        (0.5 * SPEED_OF_LIGHT * axis.origin).max(0.0),
        0.5 * SPEED_OF_LIGHT * (axis.origin + axis.span()),
    ]);
    let [w, h] = config.image_resolution;
    let d = cube.wall().detector_origin;
    let grid = VolumeGrid::new(config.image_extent, depth, [w, h, config.depth_voxels])?.with_center([d[0], d[1]]);
    let volume = match config.method {
        Method::Lct => lct_reconstruct(&cube, &grid, &config.lct)?,
        Method::Backprojection => backproject(&cube, &grid)?,
    };
    Ok(max_project(&volume))
}
