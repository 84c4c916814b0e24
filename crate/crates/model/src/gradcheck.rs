//! Central finite-difference verification of the model's gradients.

use serde::Serialize;

use crate::error::Result;
use crate::graph::Graph;
use crate::network::TransientTransformer;
use crate::tensor::Tensor;
use crate::train::{evaluate_mse, TrainSample};

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_gradient: f64,
}

/// `|a - n| / max(|a|, |n|)`, with pairs below `floor` in both magnitudes
/// compared absolutely against `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() / scale.max(floor)
}

/// Compares backward-mode gradients of the sequence imaging loss with
/// central differences of step `h` for every entry of every parameter.
pub fn check_gradients(model: &TransientTransformer, sample: &TrainSample, h: f64, floor: f64) -> Result<Vec<GroupReport>> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let frames = model.record(&mut g, &bound, &sample.inputs)?;
    let mut losses = Vec::new();
    for (f, t) in frames.iter().zip(&sample.targets) {
        losses.push(g.mse(f.patches, t)?);
    }
    let cat = g.concat_cols(&losses)?;
    let loss = g.mean(cat);
    let analytic = model.gradients(&g, loss)?;

    let data = std::slice::from_ref(sample);
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (i, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..grad.len() {
            let orig = probe.params().tensor(i).data()[k];
            probe.params_mut().tensor_mut(i).data_mut()[k] = orig + h;
            let up = evaluate_mse(&probe, data)?;
            probe.params_mut().tensor_mut(i).data_mut()[k] = orig - h;
            let down = evaluate_mse(&probe, data)?;
            probe.params_mut().tensor_mut(i).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grad.data()[k], numeric, floor));
        }
        out.push(GroupReport {
            name: model.params().name(i).to_string(),
            entries: grad.len(),
            max_rel_error: worst,
            max_abs_gradient: grad.data().iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        });
    }
    Ok(out)
}

/// Replaces every parameter with `base + scale * u`, `u` uniform in `[-1, 1)`,
/// where `base` is 1 for layer-norm gains and 0 otherwise.
pub fn randomize(model: &mut TransientTransformer, seed: u64, scale: f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in 0..model.params().len() {
        let base = if model.params().name(i).ends_with("gamma") { 1.0 } else { 0.0 };
        let t: &mut Tensor = model.params_mut().tensor_mut(i);
        for v in t.data_mut() {
            *v = base + scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}
