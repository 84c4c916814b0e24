use std::path::{Path, PathBuf};

use log::info;
use nlos_model::checkpoint::{self, Sidecar};
use nlos_model::network::image_to_patches;
use nlos_model::train::{
    evaluate_mse, train_stage1_from, train_stage2_from, AdamState, EpochRecord, TrainSample,
};
use nlos_model::{LossTrace, ModelError, Tensor, TransientTransformer};

use crate::commands::reconstruct::load_model;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::store::{self, CubeRole};

pub struct TrainArgs<'a> {
    pub stage: u8,
    pub dataset: &'a Path,
    pub checkpoint: Option<&'a Path>,
    pub target: &'a [PathBuf],
    pub resume: bool,
    pub stop_after: Option<usize>,
}

pub fn stage_name(stage: u8) -> String {
    format!("stage{stage}")
}

fn load_training_set(model: &TransientTransformer, root: &Path) -> Result<Vec<TrainSample>> {
    let manifest = store::read_manifest(root)?;
    if manifest.sequences.is_empty() {
        return Err(CliError::Usage(format!("{}: dataset has no sequences", root.display())));
    }
    let c = model.config().clone();
    let mut out = Vec::with_capacity(manifest.sequences.len());
    for e in &manifest.sequences {
        let mut inputs = Vec::with_capacity(e.frames.len());
        let mut targets = Vec::with_capacity(e.frames.len());
        for f in &e.frames {
            let cube = store::load_cube(&root.join(&f.distorted))?;
            inputs.push(model.input_tensor(&cube).map_err(|err| with_path(err, &root.join(&f.distorted)))?);
            let gt = store::load_image(&root.join(&f.gt))?;
            targets.push(image_to_patches(&gt, c.scan_res, c.patch_out).map_err(|err| with_path(err, &root.join(&f.gt)))?);
        }
        out.push(TrainSample { inputs, targets });
    }
    Ok(out)
}

fn with_path(err: ModelError, path: &Path) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn load_targets(model: &TransientTransformer, dirs: &[PathBuf]) -> Result<Vec<Vec<Tensor>>> {
    let mut out = Vec::new();
    for seq in store::collect_cube_sequences(dirs, CubeRole::Distorted)? {
        let mut frames = Vec::with_capacity(seq.frames.len());
        for (_, path) in &seq.frames {
            let cube = store::load_cube(path)?;
            frames.push(model.input_tensor(&cube).map_err(|e| with_path(e, path))?);
        }
        out.push(frames);
    }
    Ok(out)
}

fn save(path: &Path, model: &TransientTransformer, adam: &AdamState, stage: u8, epochs: usize) -> Result<()> {
    let side = Sidecar {
        format_version: checkpoint::VERSION,
        model: model.config().clone(),
        stage: Some(stage_name(stage)),
        epochs_completed: epochs,
        adam_step: adam.step,
    };
    checkpoint::save(path, model, Some(adam), &side).map_err(|e| match e {
        ModelError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

/// Model, optimizer, epochs already done and their trace rows.
fn resume_state(ckpt: &Path, trace_path: &Path, stage: u8) -> Result<(TransientTransformer, AdamState, usize, LossTrace)> {
    if !ckpt.is_file() {
        return Err(CliError::MissingCheckpoint(format!("{} (nothing to resume)", ckpt.display())));
    }
    let loaded = checkpoint::load(ckpt).map_err(|e| with_path(e, ckpt))?;
    if loaded.sidecar.stage.as_deref() != Some(stage_name(stage).as_str()) {
        return Err(CliError::Usage(format!(
            "{} holds {:?}, not {}",
            ckpt.display(),
            loaded.sidecar.stage,
            stage_name(stage)
        )));
    }
    let adam = loaded
        .adam
        .ok_or_else(|| with_path(ModelError::Format("no optimizer state to resume from".into()), ckpt))?;
    let done = loaded.sidecar.epochs_completed;
    let text = std::fs::read_to_string(trace_path).map_err(CliError::io(trace_path))?;
    let mut trace = LossTrace::from_csv(&text).map_err(|e| with_path(e, trace_path))?;
    if trace.records.len() < done {
        return Err(with_path(
            ModelError::Format(format!("trace has {} rows, checkpoint is at epoch {done}", trace.records.len())),
            trace_path,
        ));
    }
    trace.records.truncate(done);
    Ok((loaded.model, adam, done, trace))
}

pub fn train(cfg: &RunConfig, args: &TrainArgs, out: &Path) -> Result<()> {
    let stage = args.stage;
    let tcfg = match stage {
        1 => &cfg.training.stage1,
        2 => &cfg.training.stage2,
        s => return Err(CliError::Usage(format!("unknown stage {s} (supported: 1, 2)"))),
    };
    store::create_dir(out)?;
    let ckpt = out.join(format!("{}.ckpt", stage_name(stage)));
    let trace_path = out.join(format!("{}_trace.csv", stage_name(stage)));

    let (mut model, mut adam, start, mut trace) = if args.resume {
        resume_state(&ckpt, &trace_path, stage)?
    } else {
        let model = match (stage, args.checkpoint) {
            (2, None) => return Err(CliError::MissingCheckpoint("stage 2 needs --checkpoint from stage 1".into())),
            (_, Some(p)) => load_model(Some(p))?,
            (_, None) => TransientTransformer::new(cfg.model.clone())?,
        };
        let adam = AdamState::new(model.params());
        (model, adam, 0, LossTrace::default())
    };
    let data = load_training_set(&model, args.dataset)?;
    let target = if stage == 2 {
        if args.target.is_empty() {
            return Err(CliError::Usage("stage 2 needs --target cube directories".into()));
        }
        load_targets(&model, args.target)?
    } else {
        Vec::new()
    };
    info!(
        "{}: {} sequences, epochs {start}..{}, initial mse {:.5e}",
        stage_name(stage),
        data.len(),
        tcfg.epochs,
        evaluate_mse(&model, &data)?
    );
    if !args.resume {
        save(&ckpt, &model, &adam, stage, 0)?;
        trace.write_csv(&trace_path).map_err(|e| with_path(e, &trace_path))?;
    }

    let every = cfg.training.checkpoint_every;
    let last = tcfg.epochs;
    let mut io_error = None;
    let mut stopped = false;
    let mut hook = |r: &EpochRecord, m: &TransientTransformer, a: &AdamState| -> nlos_model::Result<()> {
        trace.records.push(*r);
        let done = r.epoch + 1;
        let stop = args.stop_after == Some(done);
        if done.is_multiple_of(every) || done == last || stop {
            let saved = save(&ckpt, m, a, stage, done)
                .and_then(|_| trace.write_csv(&trace_path).map_err(|e| with_path(e, &trace_path)));
            if let Err(e) = saved {
                io_error = Some(e);
                return Err(ModelError::State("checkpoint write failed".into()));
            }
        }
        if stop && done < last {
            stopped = true;
            return Err(ModelError::State("stopped".into()));
        }
        Ok(())
    };
    let result = match stage {
        1 => train_stage1_from(&mut model, &data, tcfg, &mut adam, start, &mut hook),
        _ => train_stage2_from(&mut model, &data, &target, tcfg, &mut adam, start, &mut hook),
    };
    if let Some(e) = io_error {
        return Err(e);
    }
    if stopped {
        info!("{} stopped after epoch {}; resume with --resume", stage_name(stage), trace.records.len());
        return Ok(());
    }
    match result {
        Ok(_) => {}
        Err(ModelError::Divergence { epoch, loss }) => {
            return Err(CliError::Divergence {
                epoch,
                loss,
                checkpoint: ckpt,
            })
        }
        Err(e) => return Err(e.into()),
    }
    info!(
        "{} done: final mse {:.5e}; checkpoint {}",
        stage_name(stage),
        evaluate_mse(&model, &data)?,
        ckpt.display()
    );
    Ok(())
}
