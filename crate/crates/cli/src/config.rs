//! The run configuration file.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! anywhere are rejected with the offending path and, when a known key is
//! close, a suggestion.

use std::path::Path;

use nlos_core::dataset::{RenderConfig, SequenceConfig, SequencePlan};
use nlos_core::distortion::DistortionConfig;
use nlos_core::recon::BaselineConfig;
use nlos_core::transient::NoiseConfig;
use nlos_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub render: RenderConfig,
    pub distortion: DistortionConfig,
    pub model: ModelConfig,
    pub training: TrainingSection,
    pub dataset: DatasetSection,
    pub reconstruct: ReconstructSection,
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    /// Save the checkpoint every this many epochs (and after the last).
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            stage1: TrainConfig::default(),
            stage2: default_stage2(),
            checkpoint_every: 1,
        }
    }
}

pub fn default_stage2() -> TrainConfig {
    TrainConfig {
        lr_max: 1e-3,
        lr_min: 2e-5,
        warmup_epochs: 5,
        epochs: 50,
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub plan: SequencePlan,
    /// Fast-scan grid of the distorted cubes.
    pub target_resolution: Option<[usize; 2]>,
    /// Applied to the distorted cubes.
    pub noise: Option<NoiseConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    /// Classical pipeline settings; derived from `render` when absent.
    pub baseline: Option<BaselineConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Write one row per frame in addition to the per-sequence means.
    pub per_frame_rows: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { per_frame_rows: true }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Fast-scan grid; defaults to the model's scan resolution.
    pub fn target_resolution(&self) -> [usize; 2] {
        self.dataset
            .target_resolution
            .unwrap_or([self.model.scan_res, self.model.scan_res])
    }

    pub fn sequence_config(&self) -> SequenceConfig {
        SequenceConfig {
            render: self.render,
            target_resolution: self.target_resolution(),
            distortion: self.distortion,
            noise: self.dataset.noise,
        }
    }

    /// Classical reconstruction onto the ground-truth grid: inputs are
    /// upsampled to the dense scan and imaged over the wall extent.
    pub fn baseline(&self) -> BaselineConfig {
        self.reconstruct.baseline.unwrap_or_else(|| BaselineConfig {
            upsample_to: Some(self.render.wall.resolution),
            image_resolution: self.render.gt_resolution,
            image_extent: self.render.wall.extent,
            ..BaselineConfig::default()
        })
    }

    /// Replace every seed in the document.
    pub fn apply_seed(&mut self, seed: u64) {
        self.dataset.plan.seed = seed;
        self.model.init_seed = seed;
        self.training.stage1.seed = seed;
        self.training.stage2.seed = seed;
        if let Some(n) = &mut self.dataset.noise {
            n.seed = seed;
        }
    }

    /// Value checks that the type system cannot express.
    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, e: String| CliError::Schema {
            path: path.into(),
            message: e,
            suggestion: None,
        };
        self.render.wall.validate().map_err(|e| field("render.wall", e.to_string()))?;
        self.render
            .time_axis
            .validate()
            .map_err(|e| field("render.time_axis", e.to_string()))?;
        if self.render.gt_resolution.contains(&0) {
            return Err(field("render.gt_resolution", "must be positive".into()));
        }
        self.distortion
            .sampling()
            .map_err(|e| field("distortion.samples", e.to_string()))?;
        if !(self.distortion.exposure_per_point > 0.0) {
            return Err(field("distortion.exposure_per_point", "must be positive".into()));
        }
        self.model.validate().map_err(|e| field("model", e.to_string()))?;
        self.training
            .stage1
            .validate()
            .map_err(|e| field("training.stage1", e.to_string()))?;
        self.training
            .stage2
            .validate()
            .map_err(|e| field("training.stage2", e.to_string()))?;
        if self.training.checkpoint_every == 0 {
            return Err(field("training.checkpoint_every", "must be >= 1".into()));
        }
        self.dataset.plan.specs().map_err(|e| field("dataset.plan", e.to_string()))?;
        if self.target_resolution().contains(&0) {
            return Err(field("dataset.target_resolution", "must be positive".into()));
        }
        if let Some(n) = &self.dataset.noise {
            n.validate().map_err(|e| field("dataset.noise", e.to_string()))?;
        }
        let b = self.baseline();
        if b.image_resolution.contains(&0) || b.depth_voxels == 0 {
            return Err(field("reconstruct.baseline", "resolutions must be positive".into()));
        }
        Ok(())
    }
}

fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = err.path().to_string();
    let message = err.inner().to_string();
    let suggestion = suggest(&message);
    let message = match message.find(", expected") {
        Some(k) if suggestion.is_some() => message[..k].to_string(),
        _ => message,
    };
    CliError::Schema {
        path,
        message,
        suggestion,
    }
}

/// Closest known key for serde's "unknown field `x`, expected ..." message.
fn suggest(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    let (unknown, rest) = rest.split_once('`')?;
    let candidates: Vec<&str> = rest.split('`').skip(1).step_by(2).collect();
    candidates
        .into_iter()
        .map(|c| (strsim::normalized_damerau_levenshtein(unknown, c), c))
        .filter(|(score, _)| *score >= 0.6)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}
