//! Confocal non-line-of-sight transient simulation and reconstruction.
//!
//! The crate is organised along the measurement pipeline:
//!
//! - [`transient`]: ideal confocal transients of a point-cloud scene, the
//!   wall-to-detector round trip and a photon noise model.
//! - [`distortion`]: the fast-scan galvanometer model that turns dense
//!   per-point transients into sparse, path-integrated ones.
//! - [`recon`]: classical baselines (brute-force backprojection and
//!   light-cone-transform deconvolution) plus scan-grid upsampling.
//! - [`dataset`]: parametric moving shapes and sequence generation.
//! - [`metrics`]: ED / CS / SSIM / PSNR image quality measures.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod distortion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod recon;
pub mod transient;

mod font;

pub use error::{CoreError, Result};
pub use image::ReconImage;
pub use transient::{
    CubeKind, HiddenScene, ScenePoint, TimeAxis, TransientCube, WallGeometry, SPEED_OF_LIGHT,
};
