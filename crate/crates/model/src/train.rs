//! Two-stage fitting: pixel MSE first, then MSE plus a Gaussian-kernel MMD
//! between synthetic and unlabeled target-domain fused features.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use nlos_core::dataset::SequenceSample;
use nlos_core::ReconImage;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::graph::{Graph, Var};
use crate::network::{image_to_patches, Bound, TransientTransformer};
use crate::params::Params;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub betas: [f64; 2],
    pub eps: f64,
    pub weight_decay: f64,
    /// Sequences per optimizer step; gradients are averaged.
    pub batch_size: usize,
    pub lambda: f64,
    pub mmd_n: usize,
    pub mmd_m: usize,
    /// Fixed kernel bandwidth; `None` uses the per-batch median distance.
    pub kernel_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 5e-3,
            lr_min: 1e-4,
            warmup_epochs: 10,
            epochs: 100,
            betas: [0.9, 0.95],
            eps: 1e-8,
            weight_decay: 0.01,
            batch_size: 1,
            lambda: 0.01,
            mmd_n: 32,
            mmd_m: 64,
            kernel_sigma: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return err(format!("need 0 < lr_min <= lr_max, got {} and {}", self.lr_min, self.lr_max));
        }
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return err(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return err(format!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return err("eps must be positive and weight_decay non-negative".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return err(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.mmd_n < 2 || self.mmd_m < 2 {
            return err(format!("mmd_n and mmd_m must be at least 2, got {} and {}", self.mmd_n, self.mmd_m));
        }
        if let Some(s) = self.kernel_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return err(format!("kernel_sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0, then cosine decay that lands on `lr_min` at the last epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(ModelError::Config(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    let w = cfg.warmup_epochs;
    if epoch < w {
        return Ok(cfg.lr_max * epoch as f64 / w as f64);
    }
    let span = cfg.epochs - 1 - w;
    if span == 0 {
        return Ok(cfg.lr_min);
    }
    let progress = (epoch - w) as f64 / span as f64;
    if progress >= 1.0 {
        return Ok(cfg.lr_min);
    }
    Ok(cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// Decoupled weight decay, then the bias-corrected Adam update.
pub fn adamw_step(params: &mut Params, grads: &[Tensor], state: &mut AdamState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(ModelError::Shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(ModelError::Shape(format!("gradient for {}", params.name(i))));
        }
        if !g.is_finite() {
            return Err(ModelError::NonFiniteGradient {
                name: params.name(i).to_string(),
            });
        }
    }
    state.step += 1;
    let [b1, b2] = cfg.betas;
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    for (i, g) in grads.iter().enumerate() {
        let p = params.tensor_mut(i).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for k in 0..p.len() {
            p[k] -= lr * cfg.weight_decay * p[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g.data()[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g.data()[k] * g.data()[k];
            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Pixel-mean squared error.
pub fn imaging_loss(image: &ReconImage, truth: &ReconImage) -> Result<f64> {
    if !image.same_shape(truth) {
        return Err(ModelError::Shape(format!(
            "image {}x{} vs ground truth {}x{}",
            image.width(),
            image.height(),
            truth.width(),
            truth.height()
        )));
    }
    let s: f64 = image.pixels().iter().zip(truth.pixels()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / image.pixels().len() as f64)
}

pub fn total_loss(imaging: f64, mmd: f64, lambda: f64) -> f64 {
    imaging + lambda * mmd
}

/// Kernel-expanded squared MMD between the rows of `real` and `syn`.
pub fn mmd_graph(g: &mut Graph, real: Var, syn: Var, sigma: f64) -> Result<Var> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ModelError::Config(format!("kernel sigma must be positive, got {sigma}")));
    }
    let s = -1.0 / (2.0 * sigma * sigma);
    let kmean = |g: &mut Graph, a: Var, b: Var| -> Result<Var> {
        let d = g.pairwise_sq_dist(a, b)?;
        let d = g.scale(d, s);
        let k = g.exp(d);
        Ok(g.mean(k))
    };
    let rr = kmean(g, real, real)?;
    let ss = kmean(g, syn, syn)?;
    let rs = kmean(g, real, syn)?;
    let rs2 = g.scale(rs, 2.0);
    let a = g.add(rr, ss)?;
    g.sub(a, rs2)
}

pub fn mmd_loss(real: &Tensor, syn: &Tensor, sigma: f64) -> Result<f64> {
    let mut g = Graph::new();
    let r = g.leaf(real.clone());
    let s = g.leaf(syn.clone());
    let v = mmd_graph(&mut g, r, s, sigma)?;
    Ok(g.value(v).get(0, 0))
}

/// Median pairwise distance over the merged rows; 1 if every row coincides.
pub fn median_sigma(real: &Tensor, syn: &Tensor) -> f64 {
    let rows: Vec<&[f64]> = (0..real.rows()).map(|r| real.row(r)).chain((0..syn.rows()).map(|r| syn.row(r))).collect();
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// One labeled sequence: normalised inputs and patch-layout targets.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

impl TrainSample {
    /// Uses the distorted sub-grid cubes as inputs.
    pub fn from_sequence(model: &TransientTransformer, seq: &SequenceSample) -> Result<Self> {
        let c = model.config();
        let mut inputs = Vec::with_capacity(seq.frames.len());
        let mut targets = Vec::with_capacity(seq.frames.len());
        for f in &seq.frames {
            inputs.push(model.input_tensor(&f.distorted)?);
            targets.push(image_to_patches(&f.gt, c.scan_res, c.patch_out)?);
        }
        if inputs.is_empty() {
            return Err(ModelError::Shape(format!("sequence {} has no frames", seq.name())));
        }
        Ok(Self { inputs, targets })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub imaging: f64,
    pub mmd: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<EpochRecord>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,imaging,mmd,total\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", r.epoch, r.lr, r.imaging, r.mmd, r.total);
        }
        s
    }

    /// Parse the output of [`Self::to_csv`]; values round-trip exactly.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("epoch,lr,imaging,mmd,total") {
            return Err(ModelError::Format("loss trace: missing or unexpected header".into()));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let bad = || ModelError::Format(format!("loss trace row {}: {line:?}", k + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                lr: num(f[1])?,
                imaging: num(f[2])?,
                mmd: num(f[3])?,
                total: num(f[4])?,
            });
        }
        Ok(Self { records })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mean over frames of the per-frame pixel MSE.
fn sequence_imaging(model: &TransientTransformer, g: &mut Graph, bound: &Bound, sample: &TrainSample) -> Result<(Var, Vec<Var>)> {
    if sample.inputs.len() != sample.targets.len() {
        return Err(ModelError::Shape("inputs and targets differ in frame count".into()));
    }
    let frames = model.record(g, bound, &sample.inputs)?;
    let mut losses = Vec::with_capacity(frames.len());
    for (f, t) in frames.iter().zip(&sample.targets) {
        losses.push(g.mse(f.patches, t)?);
    }
    let cat = g.concat_cols(&losses)?;
    let fused = frames.iter().map(|f| f.fused).collect();
    Ok((g.mean(cat), fused))
}

/// Mean imaging loss over a dataset without updating anything.
pub fn evaluate_mse(model: &TransientTransformer, data: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let mut g = Graph::new();
        let b = model.bind(&mut g);
        let (l, _) = sequence_imaging(model, &mut g, &b, s)?;
        total += g.value(l).get(0, 0);
    }
    Ok(total / data.len().max(1) as f64)
}

fn average_into(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) {
    match acc {
        Some(a) => a.iter_mut().zip(&grads).for_each(|(x, y)| x.add_assign(y)),
        None => *acc = Some(grads),
    }
}

fn finish(acc: Option<Vec<Tensor>>, count: usize) -> Vec<Tensor> {
    let s = 1.0 / count as f64;
    acc.unwrap_or_default().into_iter().map(|t| t.map(|v| v * s)).collect()
}

fn restore_and_fail(model: &mut TransientTransformer, snapshot: Params, epoch: usize, loss: f64) -> ModelError {
    *model.params_mut() = snapshot;
    ModelError::Divergence { epoch, loss }
}

/// Called after every finished epoch with the updated model and optimizer.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochRecord, &TransientTransformer, &AdamState) -> Result<()>;

fn check_start(start_epoch: usize, cfg: &TrainConfig) -> Result<()> {
    if start_epoch > cfg.epochs {
        return Err(ModelError::Config(format!(
            "cannot resume at epoch {start_epoch} of a {}-epoch run",
            cfg.epochs
        )));
    }
    Ok(())
}

/// Stage one: minimise the imaging loss alone. On divergence the model is
/// rolled back to the start of the failing epoch.
pub fn train_stage1(
    model: &mut TransientTransformer,
    data: &[TrainSample],
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<LossTrace> {
    train_stage1_from(model, data, cfg, state, 0, &mut |_, _, _| Ok(()))
}

/// [`train_stage1`] starting at `start_epoch`. Given the model and optimizer
/// state saved after epoch `start_epoch - 1`, the remaining epochs are
/// identical to those of an uninterrupted run.
pub fn train_stage1_from(
    model: &mut TransientTransformer,
    data: &[TrainSample],
    cfg: &TrainConfig,
    state: &mut AdamState,
    start_epoch: usize,
    on_epoch: EpochHook,
) -> Result<LossTrace> {
    cfg.validate()?;
    check_start(start_epoch, cfg)?;
    if data.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let mut trace = LossTrace::default();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_at(epoch, cfg)?;
        let snapshot = model.params().clone();
        let mut sum = 0.0;
        for chunk in epoch_order(data.len(), cfg.seed, epoch).chunks(cfg.batch_size) {
            let mut acc = None;
            for &k in chunk {
                let mut g = Graph::new();
                let bound = model.bind(&mut g);
                let (loss, _) = sequence_imaging(model, &mut g, &bound, &data[k])?;
                let l = g.value(loss).get(0, 0);
                if !l.is_finite() {
                    return Err(restore_and_fail(model, snapshot, epoch, l));
                }
                sum += l;
                average_into(&mut acc, model.gradients(&g, loss)?);
            }
            let grads = finish(acc, chunk.len());
            adamw_step(model.params_mut(), &grads, state, lr, cfg)?;
        }
        let imaging = sum / data.len() as f64;
        let record = EpochRecord {
            epoch,
            lr,
            imaging,
            mmd: 0.0,
            total: imaging,
        };
        debug!("stage1 epoch {epoch} lr {lr:.3e} mse {imaging:.5e}");
        on_epoch(&record, model, state)?;
        trace.records.push(record);
    }
    if let Some(r) = trace.last() {
        info!("stage1 finished: epoch-mean mse {:.5e}", r.imaging);
    }
    Ok(trace)
}

fn draw_rows(rng: &mut ChaCha8Rng, available: usize, count: usize) -> Vec<usize> {
    if available >= count {
        index::sample(rng, available, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..available)).collect()
    }
}

pub struct Stage2Batch<'a> {
    /// Labeled sequence for the imaging term.
    pub synthetic: &'a TrainSample,
    /// Sequences the synthetic feature rows are drawn from.
    pub synthetic_pool: Vec<&'a [Tensor]>,
    /// Unlabeled target-domain sequences.
    pub target_pool: Vec<&'a [Tensor]>,
    /// Fixed `(target, synthetic)` flat token indices; drawn from `rng_seed` when `None`.
    pub picks: Option<(Vec<usize>, Vec<usize>)>,
    pub rng_seed: u64,
}

fn pool_tokens(pool: &[&[Tensor]], tokens: usize) -> usize {
    pool.iter().map(|s| s.len() * tokens).sum()
}

/// Fused-feature rows for flat token indices over `pool`, where index
/// `k` enumerates sequences, then frames, then tokens.
fn pooled_features(model: &TransientTransformer, g: &mut Graph, bound: &Bound, pool: &[&[Tensor]], picks: &[usize]) -> Result<Var> {
    let tokens = model.config().num_tokens();
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for &k in picks {
        let mut rest = k;
        let mut seq = 0;
        while seq < pool.len() && rest >= pool[seq].len() * tokens {
            rest -= pool[seq].len() * tokens;
            seq += 1;
        }
        if seq == pool.len() {
            return Err(ModelError::Shape(format!("token index {k} beyond the pool")));
        }
        groups.entry((seq, rest / tokens)).or_default().push(rest % tokens);
    }
    let mut parts = Vec::with_capacity(groups.len());
    for ((seq, frame), rows) in groups {
        let window = &pool[seq][frame.saturating_sub(1)..=frame];
        let feats = model.record_features(g, bound, window)?;
        let fused = feats.last().expect("non-empty window").1;
        parts.push(g.gather_rows(fused, &rows)?);
    }
    g.concat_rows(&parts)
}

/// Graph of the stage-two objective: imaging loss on one synthetic sequence
/// plus `lambda` times the MMD between token rows drawn uniformly from
/// the target and synthetic pools. Returns `(imaging, mmd, total)`.
pub fn stage2_loss(
    model: &TransientTransformer,
    g: &mut Graph,
    bound: &Bound,
    batch: &Stage2Batch,
    cfg: &TrainConfig,
) -> Result<(Var, Var, Var)> {
    let (imaging, _) = sequence_imaging(model, g, bound, batch.synthetic)?;
    let tokens = model.config().num_tokens();
    let (pt, ps) = match &batch.picks {
        Some(p) => p.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(batch.rng_seed);
            let pt = draw_rows(&mut rng, pool_tokens(&batch.target_pool, tokens), cfg.mmd_n);
            let ps = draw_rows(&mut rng, pool_tokens(&batch.synthetic_pool, tokens), cfg.mmd_m);
            (pt, ps)
        }
    };
    let real = pooled_features(model, g, bound, &batch.target_pool, &pt)?;
    let syn = pooled_features(model, g, bound, &batch.synthetic_pool, &ps)?;
    let sigma = cfg
        .kernel_sigma
        .unwrap_or_else(|| median_sigma(g.value(real), g.value(syn)));
    let mmd = mmd_graph(g, real, syn, sigma)?;
    let weighted = g.scale(mmd, cfg.lambda);
    let total = g.add(imaging, weighted)?;
    Ok((imaging, mmd, total))
}

/// Stage two: fine-tune on `synthetic` with MMD alignment toward unlabeled
/// `target` sequences (normalised inputs only).
pub fn train_stage2(
    model: &mut TransientTransformer,
    synthetic: &[TrainSample],
    target: &[Vec<Tensor>],
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<LossTrace> {
    train_stage2_from(model, synthetic, target, cfg, state, 0, &mut |_, _, _| Ok(()))
}

/// [`train_stage2`] starting at `start_epoch`; see [`train_stage1_from`].
pub fn train_stage2_from(
    model: &mut TransientTransformer,
    synthetic: &[TrainSample],
    target: &[Vec<Tensor>],
    cfg: &TrainConfig,
    state: &mut AdamState,
    start_epoch: usize,
    on_epoch: EpochHook,
) -> Result<LossTrace> {
    cfg.validate()?;
    check_start(start_epoch, cfg)?;
    if synthetic.is_empty() || target.is_empty() || target.iter().any(|t| t.is_empty()) {
        return Err(ModelError::Config("stage two needs synthetic and non-empty target sequences".into()));
    }
    let mut trace = LossTrace::default();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_at(epoch, cfg)?;
        let snapshot = model.params().clone();
        let (mut si, mut sm, mut st) = (0.0, 0.0, 0.0);
        let order = epoch_order(synthetic.len(), cfg.seed, epoch);
        let mut step = (epoch * synthetic.len()) as u64;
        for chunk in order.chunks(cfg.batch_size) {
            let mut acc = None;
            for &k in chunk {
                let batch = Stage2Batch {
                    synthetic: &synthetic[k],
                    synthetic_pool: synthetic.iter().map(|s| s.inputs.as_slice()).collect(),
                    target_pool: target.iter().map(|t| t.as_slice()).collect(),
                    picks: None,
                    rng_seed: cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step),
                };
                step += 1;
                let mut g = Graph::new();
                let bound = model.bind(&mut g);
                let (im, mmd, total) = stage2_loss(model, &mut g, &bound, &batch, cfg)?;
                let (im, mmd, tv) = (g.value(im).get(0, 0), g.value(mmd).get(0, 0), g.value(total).get(0, 0));
                if !tv.is_finite() {
                    return Err(restore_and_fail(model, snapshot, epoch, tv));
                }
                si += im;
                sm += mmd;
                st += tv;
                average_into(&mut acc, model.gradients(&g, total)?);
            }
            let grads = finish(acc, chunk.len());
            adamw_step(model.params_mut(), &grads, state, lr, cfg)?;
        }
        let n = synthetic.len() as f64;
        let record = EpochRecord {
            epoch,
            lr,
            imaging: si / n,
            mmd: sm / n,
            total: st / n,
        };
        debug!("stage2 epoch {epoch} lr {lr:.3e} mse {:.5e} mmd {:.5e}", si / n, sm / n);
        on_epoch(&record, model, state)?;
        trace.records.push(record);
    }
    Ok(trace)
}
