mod support;

use kgmm_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind};
use kgmm_core::nn::Params;
use kgmm_core::{Classifier, Error, ModelConfig, PretrainModel};

#[test]
fn toy_parameter_count_is_pinned() {
    let model = PretrainModel::<f32>::new(&ModelConfig::toy(), 0).unwrap();
    assert_eq!(model.num_params(), TOY_PARAMS);
    assert_eq!(Checkpoint::from_pretrain(&model, 0, 0).param_count(), TOY_PARAMS);
}

/// Encoder 212,416 + image decoder 154,240 + text decoder 172,352, counted by hand.
const TOY_PARAMS: usize = 539_008;

#[test]
fn pretrain_checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::toy();
    let model = PretrainModel::<f32>::new(&cfg, 7).unwrap();
    let mut ck = Checkpoint::from_pretrain(&model, 120, 3);
    ck.meta.insert("seed".into(), "7".into());
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path, Some(&cfg)).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.kind, CheckpointKind::Pretrain);
    assert_eq!(back.restore_pretrain::<f32>().unwrap(), model);
    assert_eq!(back.restore_encoder::<f32>().unwrap(), model.encoder);
}

#[test]
fn classifier_checkpoint_restores_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::toy();
    let encoder = PretrainModel::<f32>::new(&cfg, 1).unwrap().encoder;
    let clf = Classifier::new(&cfg, encoder, 4, 2).unwrap();
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&Checkpoint::from_classifier(&clf, 10, 2), &path).unwrap();
    let back = load_checkpoint(&path, None).unwrap();
    assert_eq!(back.num_classes, 4);
    assert_eq!(back.restore_classifier::<f32>().unwrap(), clf);
    assert_eq!(back.restore_encoder::<f32>().unwrap(), clf.encoder);
}

#[test]
fn architecture_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::toy();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&Checkpoint::from_pretrain(&PretrainModel::<f32>::new(&cfg, 0).unwrap(), 0, 0), &path).unwrap();
    let mut other = cfg.clone();
    other.encoder_depth += 1;
    let err = load_checkpoint(&path, Some(&other)).unwrap_err();
    assert!(matches!(err, Error::FingerprintMismatch { .. }), "{err}");
    assert!(err.is_validation());
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(
        &Checkpoint::from_pretrain(&PretrainModel::<f32>::new(&ModelConfig::micro(), 0).unwrap(), 0, 0),
        &path,
    )
    .unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint(&path, None), Err(Error::CheckpointFormat(_))));
    let mut bumped = bytes.clone();
    bumped[8] = bumped[8].wrapping_add(1);
    std::fs::write(&path, &bumped).unwrap();
    assert!(matches!(load_checkpoint(&path, None), Err(Error::CheckpointVersion { .. })));
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(load_checkpoint(&path, None).is_err());
}
