//! Named learnable tensors in a fixed order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

/// Positions of one block's tensors inside [`Params`].
#[derive(Clone, Copy, Debug)]
pub struct BlockIndex {
    pub norm1_gamma: usize,
    pub norm1_beta: usize,
    pub qkv_weight: usize,
    pub qkv_bias: usize,
    pub proj_weight: usize,
    pub proj_bias: usize,
    pub norm2_gamma: usize,
    pub norm2_beta: usize,
    pub fc1_weight: usize,
    pub fc1_bias: usize,
    pub fc2_weight: usize,
    pub fc2_bias: usize,
}

pub const COMPRESS_WEIGHT: usize = 0;
pub const COMPRESS_BIAS: usize = 1;
pub const EMBED_WEIGHT: usize = 2;
pub const EMBED_BIAS: usize = 3;
const PER_BLOCK: usize = 12;

pub fn block_index(b: usize) -> BlockIndex {
    let o = 4 + PER_BLOCK * b;
    BlockIndex {
        norm1_gamma: o,
        norm1_beta: o + 1,
        qkv_weight: o + 2,
        qkv_bias: o + 3,
        proj_weight: o + 4,
        proj_bias: o + 5,
        norm2_gamma: o + 6,
        norm2_beta: o + 7,
        fc1_weight: o + 8,
        fc1_bias: o + 9,
        fc2_weight: o + 10,
        fc2_bias: o + 11,
    }
}

pub fn head_index(blocks: usize) -> (usize, usize) {
    let o = 4 + PER_BLOCK * blocks;
    (o, o + 1)
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Zero,
    One,
}

fn layout(c: &ModelConfig) -> Vec<(String, [usize; 2], Init)> {
    let d = c.token_dim;
    let h = c.mlp_ratio * d;
    let p2 = c.patch_out * c.patch_out;
    let mut out = vec![
        ("compress.weight".to_string(), [c.time_bins, c.compress_dim], Init::Normal),
        ("compress.bias".to_string(), [1, c.compress_dim], Init::Zero),
        ("embed.weight".to_string(), [c.fused_dim(), d], Init::Normal),
        ("embed.bias".to_string(), [1, d], Init::Zero),
    ];
    for b in 0..c.blocks {
        let p = |s: &str| format!("blocks.{b}.{s}");
        out.extend([
            (p("norm1.gamma"), [1, d], Init::One),
            (p("norm1.beta"), [1, d], Init::Zero),
            (p("attn.qkv.weight"), [d, 3 * d], Init::Normal),
            (p("attn.qkv.bias"), [1, 3 * d], Init::Zero),
            (p("attn.proj.weight"), [d, d], Init::Normal),
            (p("attn.proj.bias"), [1, d], Init::Zero),
            (p("norm2.gamma"), [1, d], Init::One),
            (p("norm2.beta"), [1, d], Init::Zero),
            (p("mlp.fc1.weight"), [d, h], Init::Normal),
            (p("mlp.fc1.bias"), [1, h], Init::Zero),
            (p("mlp.fc2.weight"), [h, d], Init::Normal),
            (p("mlp.fc2.bias"), [1, d], Init::Zero),
        ]);
    }
    out.push(("head.weight".to_string(), [d, p2], Init::Normal));
    out.push(("head.bias".to_string(), [1, p2], Init::Zero));
    out
}

impl Params {
    /// Truncated-normal (±2σ) weights, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let entries = layout(config)
            .into_iter()
            .map(|(name, [r, c], init)| {
                let t = match init {
                    Init::Zero => Tensor::zeros(r, c),
                    Init::One => Tensor::filled(r, c, 1.0),
                    Init::Normal => {
                        let mut t = Tensor::zeros(r, c);
                        for v in t.data_mut() {
                            *v = loop {
                                let s: f64 = normal.sample(&mut rng);
                                if s.abs() <= 2.0 * INIT_STD {
                                    break s;
                                }
                            };
                        }
                        t
                    }
                };
                (name, t)
            })
            .collect();
        Ok(Self { entries })
    }

    /// Rebuilds from named tensors, checking names and shapes against `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let want = layout(config);
        if want.len() != named.len() {
            return Err(ModelError::Format(format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                named.len()
            )));
        }
        for ((wn, ws, _), (n, t)) in want.iter().zip(&named) {
            if wn != n {
                return Err(ModelError::Format(format!("expected parameter {wn}, found {n}")));
            }
            if *ws != t.shape() {
                return Err(ModelError::Shape(format!("{n}: expected {ws:?}, found {:?}", t.shape())));
            }
        }
        Ok(Self { entries: named })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| self.tensor(i))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| self.tensor_mut(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| Tensor::zeros(t.rows(), t.cols())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            scan_res: 4,
            time_bins: 32,
            token_dim: 16,
            blocks: 2,
            heads: 2,
            ..Default::default()
        }
    }

    #[test]
    fn layout_indices_match_names() {
        let c = tiny();
        let p = Params::init(&c).unwrap();
        assert_eq!(p.len(), 4 + 12 * 2 + 2);
        assert_eq!(p.name(COMPRESS_WEIGHT), "compress.weight");
        assert_eq!(p.name(EMBED_BIAS), "embed.bias");
        let b1 = block_index(1);
        assert_eq!(p.name(b1.qkv_weight), "blocks.1.attn.qkv.weight");
        assert_eq!(p.name(b1.fc2_bias), "blocks.1.mlp.fc2.bias");
        let (hw, hb) = head_index(2);
        assert_eq!(p.name(hw), "head.weight");
        assert_eq!(p.tensor(hb).shape(), [1, 16]);
    }

    #[test]
    fn init_is_seeded_and_truncated() {
        let c = tiny();
        let a = Params::init(&c).unwrap();
        assert_eq!(a, Params::init(&c).unwrap());
        let other = Params::init(&ModelConfig { init_seed: 1, ..c.clone() }).unwrap();
        assert_ne!(a, other);
        let w = a.get("compress.weight").unwrap();
        assert!(w.data().iter().all(|v| v.abs() <= 2.0 * INIT_STD));
        let var = w.sq_norm() / w.len() as f64;
        assert!(var > 0.5 * INIT_STD * INIT_STD && var < INIT_STD * INIT_STD);
        assert!(a.get("blocks.0.norm1.gamma").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(a.get("head.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_named_rejects_mismatches() {
        let c = tiny();
        let p = Params::init(&c).unwrap();
        let mut named: Vec<(String, Tensor)> = p.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert!(Params::from_named(&c, named.clone()).is_ok());
        named[3].1 = Tensor::zeros(1, 3);
        assert!(matches!(Params::from_named(&c, named), Err(ModelError::Shape(_))));
    }
}
