//! Frozen tiny checkpoint. Rebuild with
//! `cargo test -p glance-core --test golden -- --ignored regenerate`
//! and commit the result only when a format or model change is intended.

use std::path::PathBuf;

use glance_core::corpus::{self, generate, CorpusConfig};
use glance_core::eval::{evaluate_model, EvalConfig, RecallTable};
use glance_core::model::{load_params, save_params};
use glance_core::trainer::{train, TrainConfig};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn eval_config() -> EvalConfig {
    EvalConfig {
        n_list: vec![1, 5],
        m_list: vec![0.3, 0.5, 0.7],
        nms_threshold: Some(0.5),
    }
}

#[test]
#[ignore]
fn regenerate() {
    let dir = fixture_dir();
    let cfg = CorpusConfig {
        num_videos: 6,
        test_videos: 2,
        clips_per_video: 8,
        feature_dim: 4,
        query_dim: 4,
        num_event_prototypes: 6,
        seed: 21,
        ..CorpusConfig::default()
    };
    let c = generate(&cfg).unwrap();
    corpus::save(&c, &dir.join("data")).unwrap();
    let tc = TrainConfig {
        epochs: 4,
        batch_size: 4,
        k: 3,
        reduced_dim: 4,
        joint_dim: 6,
        seed: 21,
        ..TrainConfig::default()
    };
    let state = train(&c.train_views(), &tc).unwrap();
    let mut params = state.params;
    params.round_to_f32();
    save_params(&params, &state.options, &dir.join("model")).unwrap();
    let table = evaluate_model(&params, &state.options, &c.test_samples(), &eval_config()).unwrap();
    std::fs::write(dir.join("recall.csv"), table.to_csv()).unwrap();
}

#[test]
fn golden_checkpoint_reproduces_recall_table() {
    let dir = fixture_dir();
    let c = corpus::load(&dir.join("data")).unwrap();
    let (params, opts) = load_params(&dir.join("model")).unwrap();
    let expected =
        RecallTable::from_csv(&std::fs::read_to_string(dir.join("recall.csv")).unwrap()).unwrap();
    let got = evaluate_model(&params, &opts, &c.test_samples(), &eval_config()).unwrap();
    assert_eq!(got, expected);
    assert_eq!(got.to_csv(), expected.to_csv());
}
