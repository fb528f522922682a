mod common;

use common::{tiny_data, tiny_model, train_batch, words_config};
use primfuse_core::params::Params;
use primfuse_core::training::{epoch_order, train_epoch, Checkpoint, StepRecord, TrainConfig, Trainer};
use primfuse_core::{Error, ModelKind};

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_parameters() {
    let (manifest, _) = tiny_data(16, 1);
    let run = || {
        let mut model = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
        let mut trainer = Trainer::new(config(2), &model).unwrap();
        let mut log = Vec::new();
        trainer
            .fit(&mut model, &manifest, &mut |r| {
                log.push(*r);
                Ok(())
            })
            .unwrap();
        (model.params.to_flat(), log)
    };
    let (a, log_a) = run();
    let (b, log_b) = run();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.len(), 2 * 5);
}

#[test]
fn frozen_stores_are_bitwise_unchanged() {
    let (manifest, _) = tiny_data(16, 1);
    let mut cfg = words_config();
    cfg.backbone.embed_dim = Some(12);
    let mut model = tiny_model(&manifest, &cfg, ModelKind::DualBranch);
    let embeddings = model.embeddings.clone();
    let projection = model.backbone.projection().cloned();
    let fingerprint = model.frozen_fingerprint();
    let before = model.params.to_flat();
    let mut trainer = Trainer::new(config(1), &model).unwrap();
    train_epoch(&mut model, &manifest, &mut trainer).unwrap();
    assert_eq!(model.embeddings, embeddings);
    assert_eq!(model.backbone.projection().cloned(), projection);
    assert_eq!(model.frozen_fingerprint(), fingerprint);
    assert_ne!(model.params.to_flat(), before);
}

#[test]
fn one_small_step_lowers_the_batch_loss() {
    let (manifest, _) = tiny_data(16, 2);
    for kind in [ModelKind::DualBranch, ModelKind::CompositionBranch] {
        let mut model = tiny_model(&manifest, &words_config(), kind);
        let batch = train_batch(&manifest, 16);
        let mut trainer = Trainer::new(
            TrainConfig {
                lr: 1e-4,
                ..config(1)
            },
            &model,
        )
        .unwrap();
        let tau = trainer.logit_scale(&model);
        let before = model.batch_losses(&batch, tau).unwrap().total();
        let record = trainer.step_batch(&mut model, &batch).unwrap();
        let after = model.batch_losses(&batch, tau).unwrap().total();
        assert!((record.loss_total - before).abs() < 1e-12);
        assert!(after < before, "{kind:?}: {after} !< {before}");
    }
}

#[test]
fn log_records_sum_branch_losses() {
    let (manifest, _) = tiny_data(16, 2);
    let mut model = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
    let mut trainer = Trainer::new(config(1), &model).unwrap();
    let (summary, records) = train_epoch(&mut model, &manifest, &mut trainer).unwrap();
    assert_eq!(summary.steps, records.len());
    let steps: Vec<u64> = records.iter().map(|r| r.step).collect();
    assert_eq!(steps, (1..=records.len() as u64).collect::<Vec<_>>());
    for r in &records {
        assert_eq!(r.loss_total, r.loss_a + r.loss_o);
        let json = serde_json::to_value(r).unwrap();
        for key in ["epoch", "step", "loss_a", "loss_o", "loss_total"] {
            assert!(json.get(key).is_some());
        }
    }
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let (manifest, _) = tiny_data(16, 4);
    let mut straight = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
    let mut t1 = Trainer::new(config(2), &straight).unwrap();
    t1.fit(&mut straight, &manifest, &mut |_| Ok(())).unwrap();

    let mut first = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
    let mut t2 = Trainer::new(config(1), &first).unwrap();
    t2.fit(&mut first, &manifest, &mut |_| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::new("hash".into(), first, t2).save(&path).unwrap();

    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt.config_hash, "hash");
    let mut resumed = ckpt.model;
    let mut trainer = ckpt.trainer;
    trainer.config.epochs = 2;
    let mut steps: Vec<StepRecord> = Vec::new();
    trainer
        .fit(&mut resumed, &manifest, &mut |r| {
            steps.push(*r);
            Ok(())
        })
        .unwrap();
    assert_eq!(steps.first().unwrap().step, t1.step / 2 + 1);
    assert_eq!(trainer.step, t1.step);
    assert_eq!(resumed.params.to_flat(), straight.params.to_flat());
}

#[test]
fn non_finite_parameters_abort_with_numeric_error() {
    let (manifest, _) = tiny_data(16, 4);
    let mut model = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
    model.params.attribute_context.as_mut().unwrap().context[[0, 0]] = f64::NAN;
    let mut trainer = Trainer::new(config(1), &model).unwrap();
    let err = train_epoch(&mut model, &manifest, &mut trainer).unwrap_err();
    assert!(err.is_numeric(), "{err}");
}

#[test]
fn empty_batch_is_rejected() {
    let (manifest, _) = tiny_data(16, 4);
    let mut model = tiny_model(&manifest, &words_config(), ModelKind::DualBranch);
    let mut trainer = Trainer::new(config(1), &model).unwrap();
    assert!(matches!(trainer.step_batch(&mut model, &[]), Err(Error::EmptyInput(_))));
}

#[test]
fn epoch_order_is_a_seeded_permutation() {
    let a = epoch_order(50, 3, 0);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    assert_eq!(a, epoch_order(50, 3, 0));
    assert_ne!(a, epoch_order(50, 3, 1));
    assert_ne!(a, epoch_order(50, 4, 0));
}
