use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Side of the input scan grid, `S`.
    pub scan_res: usize,
    /// Histogram length, `T`.
    pub time_bins: usize,
    pub compress_dim: usize,
    /// Token width, `D`.
    pub token_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Output patch side per token, `P`.
    pub patch_out: usize,
    pub mlp_ratio: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scan_res: 16,
            time_bins: 512,
            compress_dim: 32,
            token_dim: 128,
            blocks: 8,
            heads: 8,
            patch_out: 4,
            mlp_ratio: 4,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scan_res", self.scan_res),
            ("time_bins", self.time_bins),
            ("compress_dim", self.compress_dim),
            ("token_dim", self.token_dim),
            ("heads", self.heads),
            ("patch_out", self.patch_out),
            ("mlp_ratio", self.mlp_ratio),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "token_dim {} is not divisible by heads {}",
                self.token_dim, self.heads
            )));
        }
        if !self.token_dim.is_multiple_of(4) {
            return Err(ModelError::Config(format!(
                "token_dim {} must be a multiple of 4 for the 2D positional encoding",
                self.token_dim
            )));
        }
        if self.compress_dim > self.time_bins {
            return Err(ModelError::Config(format!(
                "compress_dim {} exceeds time_bins {}",
                self.compress_dim, self.time_bins
            )));
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        self.scan_res * self.scan_res
    }

    pub fn output_side(&self) -> usize {
        self.scan_res * self.patch_out
    }

    pub fn head_dim(&self) -> usize {
        self.token_dim / self.heads
    }

    pub fn fused_dim(&self) -> usize {
        2 * self.compress_dim
    }
}
