use mrc::synth::{self, SynthConfig};
use mrc::{dataset, model_file, MrcError};
use mrc_core::filterbank::bands_between;
use mrc_core::model::SvmConfig;
use mrc_core::pipeline::{infer_batch, train, Sequential, TrainConfig};
use mrc_core::{Mode, ModelParams, TrialWindow};

fn small_set(seed: u64) -> Vec<TrialWindow> {
    synth::generate(&SynthConfig { n_trials: 16, n_channels: 6, n_samples: 300, seed, ..SynthConfig::default() }).unwrap()
}

fn small_model() -> ModelParams {
    let cfg = TrainConfig {
        bands: bands_between(8.0, 32.0, 6.0, 250.0),
        svm: SvmConfig { epochs: 50, ..SvmConfig::default() },
        ..TrainConfig::default()
    };
    train(&small_set(3), &cfg, &Sequential).unwrap()
}

#[test]
fn model_round_trip_is_exact() {
    let m = small_model();
    let bytes = model_file::encode(&m).unwrap();
    let back = model_file::decode(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(model_file::encode(&back).unwrap(), bytes);
}

#[test]
fn decoded_model_predicts_identically() {
    let m = small_model();
    let back = model_file::decode(&model_file::encode(&m).unwrap()).unwrap();
    let trials = small_set(9);
    for mode in [Mode::Float, Mode::Quant] {
        assert_eq!(infer_batch(&trials, &m, mode, &Sequential).unwrap(), infer_batch(&trials, &back, mode, &Sequential).unwrap());
    }
}

#[test]
fn model_file_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mrcm");
    let m = small_model();
    model_file::write(&path, &m).unwrap();
    assert_eq!(model_file::read(&path).unwrap(), m);
}

#[test]
fn truncated_model_reports_offset() {
    let bytes = model_file::encode(&small_model()).unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        match model_file::decode(&bytes[..cut]) {
            Err(MrcError::Truncated { offset, .. }) => assert!(offset <= cut),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn corrupt_models_are_rejected() {
    let bytes = model_file::encode(&small_model()).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(model_file::decode(&bad), Err(MrcError::Format { offset: 0, .. })));

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(model_file::decode(&bad), Err(MrcError::Format { offset: 4, .. })));

    let mut bad = bytes.clone();
    bad.push(0);
    assert!(matches!(model_file::decode(&bad), Err(MrcError::Format { .. })));

    // feature count field disagrees with the band and channel counts
    let mut bad = bytes;
    bad[10] ^= 1;
    assert!(matches!(model_file::decode(&bad), Err(MrcError::Format { offset: 10, .. })));
}

#[test]
fn dataset_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mrcd");
    let mut trials = small_set(4);
    trials[2].label = None;
    dataset::write(&path, &trials).unwrap();
    let back = dataset::read(&path).unwrap();
    assert_eq!(back, trials);
    assert_eq!(dataset::encode(&back).unwrap(), std::fs::read(&path).unwrap());
}
