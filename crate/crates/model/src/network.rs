//! The transient transformer: per-frame compression, two-frame fusion,
//! positional encodings, pre-norm attention blocks and a patch head.

use nlos_core::{ReconImage, TransientCube};

use crate::config::ModelConfig;
use crate::encoding::{spatial_encoding, temporal_encoding};
use crate::error::{ModelError, Result};
use crate::graph::{Graph, Var};
use crate::params::{self, Params};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: Var,
    pub beta: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub qkv: Linear,
    pub proj: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub norm1: Norm,
    pub attn: AttentionVars,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Parameter handles for one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
    pub compress: Linear,
    pub embed: Linear,
    pub blocks: Vec<BlockVars>,
    pub head: Linear,
}

/// Graph handles produced for one frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameOutput {
    pub features: Var,
    pub fused: Var,
    /// `S² x P²` sigmoid outputs, one patch per token.
    pub patches: Var,
}

pub fn linear(g: &mut Graph, x: Var, l: Linear) -> Result<Var> {
    let y = g.matmul(x, l.weight)?;
    g.add_row(y, l.bias)
}

/// One shared affine map from each `T`-bin histogram row to the latent width.
pub fn compress(g: &mut Graph, histograms: Var, l: Linear) -> Result<Var> {
    linear(g, histograms, l)
}

/// `concat(f, f - prev)` per token.
pub fn fuse(g: &mut Graph, f: Var, prev: Var) -> Result<Var> {
    let diff = g.sub(f, prev)?;
    g.concat_cols(&[f, diff])
}

pub fn encode_positions(g: &mut Graph, fused: Var, embed: Linear, spatial: Var, temporal: Var) -> Result<Var> {
    let e = linear(g, fused, embed)?;
    let s = g.add(e, spatial)?;
    g.add_row(s, temporal)
}

/// Multi-head self-attention over the rows of `x`.
pub fn attention(g: &mut Graph, x: Var, a: AttentionVars, heads: usize) -> Result<Var> {
    let d = g.value(x).cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(ModelError::Config(format!("token width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let qkv = linear(g, x, a.qkv)?;
    if g.value(qkv).cols() != 3 * d {
        return Err(ModelError::Shape(format!("qkv width {} for tokens of width {d}", g.value(qkv).cols())));
    }
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = g.slice_cols(qkv, h * dh, dh)?;
        let k = g.slice_cols(qkv, d + h * dh, dh)?;
        let v = g.slice_cols(qkv, 2 * d + h * dh, dh)?;
        let s = g.matmul_nt(q, k)?;
        let s = g.scale(s, scale);
        let w = g.softmax_rows(s);
        outs.push(g.matmul(w, v)?);
    }
    let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    linear(g, cat, a.proj)
}

pub fn vit_block(g: &mut Graph, x: Var, b: BlockVars, heads: usize) -> Result<Var> {
    let n1 = g.layer_norm(x, b.norm1.gamma, b.norm1.beta)?;
    let a = attention(g, n1, b.attn, heads)?;
    let x = g.add(x, a)?;
    let n2 = g.layer_norm(x, b.norm2.gamma, b.norm2.beta)?;
    let h = linear(g, n2, b.fc1)?;
    let h = g.gelu(h);
    let m = linear(g, h, b.fc2)?;
    g.add(x, m)
}

pub fn output_head(g: &mut Graph, x: Var, head: Linear) -> Result<Var> {
    let y = linear(g, x, head)?;
    Ok(g.sigmoid(y))
}

/// Tiles an `S² x P²` patch tensor into an `(S·P) x (S·P)` image.
pub fn patches_to_image(patches: &Tensor, scan_res: usize, patch: usize) -> Result<ReconImage> {
    if patches.shape() != [scan_res * scan_res, patch * patch] {
        return Err(ModelError::Shape(format!(
            "patch tensor {:?} for S = {scan_res}, P = {patch}",
            patches.shape()
        )));
    }
    let side = scan_res * patch;
    let mut img = ReconImage::zeros(side, side);
    for i in 0..scan_res {
        for j in 0..scan_res {
            let row = patches.row(i * scan_res + j);
            for pi in 0..patch {
                for pj in 0..patch {
                    img.set(i * patch + pi, j * patch + pj, row[pi * patch + pj]);
                }
            }
        }
    }
    Ok(img)
}

/// Inverse of [`patches_to_image`].
pub fn image_to_patches(img: &ReconImage, scan_res: usize, patch: usize) -> Result<Tensor> {
    let side = scan_res * patch;
    if img.width() != side || img.height() != side {
        return Err(ModelError::Shape(format!(
            "image {}x{} for output side {side}",
            img.width(),
            img.height()
        )));
    }
    Ok(Tensor::from_fn(scan_res * scan_res, patch * patch, |t, k| {
        let (i, j) = (t / scan_res, t % scan_res);
        img.get(i * patch + k / patch, j * patch + k % patch)
    }))
}

#[derive(Clone, Debug)]
pub struct TransientTransformer {
    config: ModelConfig,
    params: Params,
    spatial: Tensor,
}

impl TransientTransformer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = Params::init(&config)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let check = Params::init(&config)?;
        if check.len() != params.len() || (0..params.len()).any(|i| check.tensor(i).shape() != params.tensor(i).shape()) {
            return Err(ModelError::Shape("parameters do not match the configuration".into()));
        }
        let spatial = spatial_encoding(config.scan_res, config.token_dim);
        Ok(Self { config, params, spatial })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn into_params(self) -> Params {
        self.params
    }

    /// Registers every parameter on `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars: Vec<Var> = (0..self.params.len())
            .map(|i| g.param(i, self.params.tensor(i).clone()))
            .collect();
        let lin = |w: usize, b: usize| Linear {
            weight: vars[w],
            bias: vars[b],
        };
        let blocks = (0..self.config.blocks)
            .map(|b| {
                let ix = params::block_index(b);
                BlockVars {
                    norm1: Norm {
                        gamma: vars[ix.norm1_gamma],
                        beta: vars[ix.norm1_beta],
                    },
                    attn: AttentionVars {
                        qkv: lin(ix.qkv_weight, ix.qkv_bias),
                        proj: lin(ix.proj_weight, ix.proj_bias),
                    },
                    norm2: Norm {
                        gamma: vars[ix.norm2_gamma],
                        beta: vars[ix.norm2_beta],
                    },
                    fc1: lin(ix.fc1_weight, ix.fc1_bias),
                    fc2: lin(ix.fc2_weight, ix.fc2_bias),
                }
            })
            .collect();
        let (hw, hb) = params::head_index(self.config.blocks);
        Bound {
            compress: lin(params::COMPRESS_WEIGHT, params::COMPRESS_BIAS),
            embed: lin(params::EMBED_WEIGHT, params::EMBED_BIAS),
            head: lin(hw, hb),
            blocks,
            vars,
        }
    }

    /// `S² x T` histogram rows scaled by the cube's global max.
    pub fn input_tensor(&self, cube: &TransientCube) -> Result<Tensor> {
        let c = &self.config;
        if cube.nx() != c.scan_res || cube.ny() != c.scan_res || cube.num_bins() != c.time_bins {
            return Err(ModelError::Shape(format!(
                "cube {}x{}x{} does not match model input {}x{}x{}",
                cube.nx(),
                cube.ny(),
                cube.num_bins(),
                c.scan_res,
                c.scan_res,
                c.time_bins
            )));
        }
        let max = cube.max_value();
        let scale = if max > 0.0 && max.is_finite() { 1.0 / max } else { 1.0 };
        Tensor::new(c.num_tokens(), c.time_bins, cube.data().iter().map(|v| v * scale).collect())
    }

    pub fn input_tensors(&self, cubes: &[TransientCube]) -> Result<Vec<Tensor>> {
        cubes.iter().map(|c| self.input_tensor(c)).collect()
    }

    /// Records the compression and fusion of every frame without running the blocks.
    pub fn record_features(&self, g: &mut Graph, bound: &Bound, inputs: &[Tensor]) -> Result<Vec<(Var, Var)>> {
        let want = [self.config.num_tokens(), self.config.time_bins];
        let mut out = Vec::with_capacity(inputs.len());
        let mut prev: Option<Var> = None;
        for (k, x) in inputs.iter().enumerate() {
            if x.shape() != want {
                return Err(ModelError::Shape(format!("frame {k}: input {:?}, expected {want:?}", x.shape())));
            }
            let xv = g.leaf(x.clone());
            let f = compress(g, xv, bound.compress)?;
            let fused = fuse(g, f, prev.unwrap_or(f))?;
            out.push((f, fused));
            prev = Some(f);
        }
        Ok(out)
    }

    /// Records the full forward pass of a sequence of normalised inputs.
    pub fn record(&self, g: &mut Graph, bound: &Bound, inputs: &[Tensor]) -> Result<Vec<FrameOutput>> {
        let feats = self.record_features(g, bound, inputs)?;
        let spatial = g.leaf(self.spatial.clone());
        let mut out = Vec::with_capacity(feats.len());
        for (k, (features, fused)) in feats.into_iter().enumerate() {
            out.push(self.record_head(g, bound, spatial, k, features, fused)?);
        }
        Ok(out)
    }

    fn record_head(&self, g: &mut Graph, bound: &Bound, spatial: Var, frame: usize, features: Var, fused: Var) -> Result<FrameOutput> {
        let temporal = g.leaf(temporal_encoding(frame, self.config.token_dim));
        let mut x = encode_positions(g, fused, bound.embed, spatial, temporal)?;
        for b in &bound.blocks {
            x = vit_block(g, x, *b, self.config.heads)?;
        }
        let patches = output_head(g, x, bound.head)?;
        Ok(FrameOutput {
            features,
            fused,
            patches,
        })
    }

    /// Output for frame `frame` of a sequence given its input and the
    /// previous frame's, without recomputing earlier outputs. Agrees with
    /// [`Self::forward_tensors`] on the whole sequence.
    pub fn forward_frame(&self, frame: usize, input: &Tensor, prev: Option<&Tensor>) -> Result<ReconImage> {
        if (frame == 0) != prev.is_none() {
            return Err(ModelError::State(format!(
                "frame {frame} needs {} previous input",
                if frame == 0 { "no" } else { "a" }
            )));
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let window: Vec<Tensor> = prev.into_iter().chain([input]).cloned().collect();
        let (features, fused) = *self.record_features(&mut g, &bound, &window)?.last().expect("non-empty window");
        let spatial = g.leaf(self.spatial.clone());
        let out = self.record_head(&mut g, &bound, spatial, frame, features, fused)?;
        patches_to_image(g.value(out.patches), self.config.scan_res, self.config.patch_out)
    }

    pub fn forward_tensors(&self, inputs: &[Tensor]) -> Result<Vec<ReconImage>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let frames = self.record(&mut g, &bound, inputs)?;
        frames
            .iter()
            .map(|f| patches_to_image(g.value(f.patches), self.config.scan_res, self.config.patch_out))
            .collect()
    }

    /// One reconstruction per input frame.
    pub fn forward(&self, cubes: &[TransientCube]) -> Result<Vec<ReconImage>> {
        self.forward_tensors(&self.input_tensors(cubes)?)
    }

    /// Gradients aligned with [`Params`]; parameters the loss does not reach get zeros.
    pub fn gradients(&self, g: &Graph, loss: Var) -> Result<Vec<Tensor>> {
        let mut out = self.params.zeros_like();
        for (k, t) in g.backward(loss)? {
            if !t.is_finite() {
                return Err(ModelError::NonFiniteGradient {
                    name: self.params.name(k).to_string(),
                });
            }
            out[k] = t;
        }
        Ok(out)
    }
}
