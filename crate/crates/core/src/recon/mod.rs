//! Classical confocal reconstruction baselines.

mod backproject;
mod fft3;
mod lct;
mod pipeline;
mod upsample;
mod volume;

pub use backproject::backproject;
pub use lct::{lct_reconstruct, resampling_operator, LctConfig};
pub use pipeline::{baseline_image, BaselineConfig, Method};
pub use upsample::upsample_cube;
pub use volume::{max_project, VolumeGrid};
