use nlos_core::dataset::{generate_sequence, RenderConfig, SequenceConfig, SequencePlan, SequenceSample};
use nlos_core::transient::{apply_noise, NoiseConfig};
use nlos_core::{TimeAxis, WallGeometry};
use nlos_model::train::{
    evaluate_mse, train_stage1, train_stage1_from, train_stage2, train_stage2_from, AdamState, EpochRecord, TrainConfig,
    TrainSample,
};
use nlos_model::{ModelConfig, Tensor, TransientTransformer};

fn small_model() -> ModelConfig {
    ModelConfig {
        scan_res: 4,
        time_bins: 32,
        compress_dim: 16,
        token_dim: 16,
        blocks: 1,
        heads: 2,
        patch_out: 4,
        mlp_ratio: 2,
        init_seed: 1,
    }
}

fn small_sequences() -> Vec<SequenceSample> {
    let plan = SequencePlan {
        num_sequences: 3,
        num_frames: 3,
        seed: 5,
        sample_density: 600.0,
        ..Default::default()
    };
    let config = SequenceConfig {
        render: RenderConfig {
            wall: WallGeometry::square(2.0, 16).unwrap(),
            time_axis: TimeAxis::new(32, 400e-12).unwrap(),
            gt_resolution: [16, 16],
        },
        target_resolution: [4, 4],
        ..Default::default()
    };
    plan.specs()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(id, (s, m))| generate_sequence(id as u64, s, m, &config).unwrap())
        .collect()
}

fn setup() -> (TransientTransformer, Vec<SequenceSample>, Vec<TrainSample>) {
    let model = TransientTransformer::new(small_model()).unwrap();
    let seqs = small_sequences();
    let data = seqs.iter().map(|s| TrainSample::from_sequence(&model, s).unwrap()).collect();
    (model, seqs, data)
}

fn noised_targets(model: &TransientTransformer, seqs: &[SequenceSample]) -> Vec<Vec<Tensor>> {
    let peak = seqs.iter().flat_map(|s| &s.frames).map(|f| f.distorted.max_value()).fold(0.0, f64::max);
    seqs.iter()
        .map(|s| {
            s.frames
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let scaled = f.distorted.scaled(20.0 / peak).unwrap();
                    let noise = NoiseConfig {
                        background_rate: 0.5,
                        jitter_sigma: 0.0,
                        seed: 11 + 10 * s.id + k as u64,
                    };
                    model.input_tensor(&apply_noise(&scaled, &noise).unwrap()).unwrap()
                })
                .collect()
        })
        .collect()
}

fn stage1_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        warmup_epochs: 2,
        seed: 9,
        ..Default::default()
    }
}

fn stage2_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        warmup_epochs: 2,
        lr_max: 1e-3,
        lr_min: 2e-5,
        lambda: 1.0,
        mmd_n: 96,
        mmd_m: 96,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn stage_one_reduces_the_loss_and_is_deterministic() {
    let (model, _, data) = setup();
    let before = evaluate_mse(&model, &data).unwrap();
    let run = || {
        let mut m = model.clone();
        let mut st = AdamState::new(m.params());
        let trace = train_stage1(&mut m, &data, &stage1_cfg(25), &mut st).unwrap();
        (m, trace)
    };
    let (m1, t1) = run();
    let (m2, t2) = run();
    assert_eq!(t1, t2);
    assert_eq!(m1.params(), m2.params());
    assert_eq!(t1.records.len(), 25);
    let after = evaluate_mse(&m1, &data).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert!(t1.records.iter().all(|r| r.mmd == 0.0 && r.total == r.imaging));
}

#[test]
fn lambda_has_no_effect_in_stage_one() {
    let (model, _, data) = setup();
    let mut a = model.clone();
    let mut b = model;
    let (mut sa, mut sb) = (AdamState::new(a.params()), AdamState::new(b.params()));
    let ta = train_stage1(&mut a, &data, &TrainConfig { lambda: 0.0, ..stage1_cfg(4) }, &mut sa).unwrap();
    let tb = train_stage1(&mut b, &data, &TrainConfig { lambda: 5.0, ..stage1_cfg(4) }, &mut sb).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.params(), b.params());
}

#[test]
fn different_seeds_give_different_orders() {
    let (model, _, data) = setup();
    let mut a = model.clone();
    let mut b = model;
    let (mut sa, mut sb) = (AdamState::new(a.params()), AdamState::new(b.params()));
    train_stage1(&mut a, &data, &stage1_cfg(4), &mut sa).unwrap();
    train_stage1(&mut b, &data, &TrainConfig { seed: 10, ..stage1_cfg(4) }, &mut sb).unwrap();
    assert_ne!(a.params(), b.params());
}

#[test]
fn stage_one_resume_reproduces_the_tail() {
    let (model, _, data) = setup();
    let cfg = stage1_cfg(8);
    let mut full = model.clone();
    let mut st = AdamState::new(full.params());
    let whole = train_stage1(&mut full, &data, &cfg, &mut st).unwrap();

    let mut saved = None;
    let mut part = model;
    let mut st2 = AdamState::new(part.params());
    let mut hook = |r: &EpochRecord, m: &TransientTransformer, s: &AdamState| {
        if r.epoch == 4 {
            saved = Some((m.clone(), s.clone()));
        }
        Ok(())
    };
    train_stage1_from(&mut part, &data, &cfg, &mut st2, 0, &mut hook).unwrap();
    let (mut resumed, mut rs) = saved.unwrap();
    let tail = train_stage1_from(&mut resumed, &data, &cfg, &mut rs, 5, &mut |_, _, _| Ok(())).unwrap();
    assert_eq!(tail.records, whole.records[5..]);
    assert_eq!(resumed.params(), full.params());
    assert!(train_stage1_from(&mut resumed, &data, &cfg, &mut rs, 9, &mut |_, _, _| Ok(())).is_err());
}

#[test]
fn hook_errors_stop_training() {
    let (mut model, _, data) = setup();
    let mut st = AdamState::new(model.params());
    let mut calls = 0;
    let mut hook = |_: &EpochRecord, _: &TransientTransformer, _: &AdamState| {
        calls += 1;
        Err(nlos_model::ModelError::State("stop".into()))
    };
    assert!(train_stage1_from(&mut model, &data, &stage1_cfg(5), &mut st, 0, &mut hook).is_err());
    assert_eq!(calls, 1);
}

#[test]
fn same_domain_mmd_stays_near_zero() {
    let (model, _, data) = setup();
    let target: Vec<Vec<Tensor>> = data.iter().map(|d| d.inputs.clone()).collect();
    let mut m = model;
    let mut st = AdamState::new(m.params());
    let trace = train_stage2(&mut m, &data, &target, &stage2_cfg(3), &mut st).unwrap();
    for r in &trace.records {
        assert!(r.mmd >= -1e-12 && r.mmd < 0.05, "epoch {} mmd {}", r.epoch, r.mmd);
        assert!((r.total - (r.imaging + r.mmd)).abs() < 1e-12);
    }
}

#[test]
fn noised_domain_mmd_decreases() {
    let (mut model, seqs, data) = setup();
    let mut st = AdamState::new(model.params());
    train_stage1(&mut model, &data, &stage1_cfg(30), &mut st).unwrap();
    let target = noised_targets(&model, &seqs);
    let mut st2 = AdamState::new(model.params());
    let trace = train_stage2(&mut model, &data, &target, &stage2_cfg(20), &mut st2).unwrap();
    let first = trace.first().unwrap().mmd;
    let last = trace.last().unwrap().mmd;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn stage_two_resume_reproduces_the_tail() {
    let (model, seqs, data) = setup();
    let target = noised_targets(&model, &seqs);
    let cfg = stage2_cfg(5);
    let mut full = model.clone();
    let mut st = AdamState::new(full.params());
    let whole = train_stage2(&mut full, &data, &target, &cfg, &mut st).unwrap();

    let mut saved = None;
    let mut part = model;
    let mut st2 = AdamState::new(part.params());
    let mut hook = |r: &EpochRecord, m: &TransientTransformer, s: &AdamState| {
        if r.epoch == 1 {
            saved = Some((m.clone(), s.clone()));
        }
        Ok(())
    };
    train_stage2_from(&mut part, &data, &target, &cfg, &mut st2, 0, &mut hook).unwrap();
    let (mut resumed, mut rs) = saved.unwrap();
    let tail = train_stage2_from(&mut resumed, &data, &target, &cfg, &mut rs, 2, &mut |_, _, _| Ok(())).unwrap();
    assert_eq!(tail.records, whole.records[2..]);
    assert_eq!(resumed.params(), full.params());
}

#[test]
fn stage_two_rejects_empty_targets() {
    let (mut model, _, data) = setup();
    let mut st = AdamState::new(model.params());
    assert!(train_stage2(&mut model, &data, &[], &stage2_cfg(1), &mut st).is_err());
    assert!(train_stage2(&mut model, &data, &[vec![]], &stage2_cfg(1), &mut st).is_err());
}
