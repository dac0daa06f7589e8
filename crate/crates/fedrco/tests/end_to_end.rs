//! End-to-end runs through surfaces the unit tests don't cross: the conv
//! stack under the second-order optimizer, file-backed datasets, anomaly
//! event logging, and the method matrix.

#![allow(clippy::field_reassign_with_default)]

use fedrco::data::{make_synthetic_images, save_dataset};
use fedrco::federation::{FaultInjection, FaultKind};
use fedrco::harness::*;
use fedrco::model::FeatureShape;
use fedrco::numerics::Matrix;
use fedrco::seeding::{stream_rng, Purpose};

#[test]
fn cnn_model_trains_under_the_second_order_optimizer() {
    let mut cfg = ExperimentConfig::default();
    cfg.method = Method::Fedrco;
    cfg.clients = 3;
    cfg.ratio = 1.0;
    cfg.rounds = 2;
    cfg.local_epochs = 4;
    cfg.batch_size = 16;
    cfg.dataset = DatasetSpec::SyntheticImages {
        height: 6,
        width: 6,
        classes: 3,
        samples: 240,
        separation: 4.0,
    };
    cfg.partition = PartitionSpec::Iid;
    cfg.model = ModelSpec::Cnn {
        filters: (4, 4),
        fc: (16, 16),
    };
    cfg.kfac.t_inv = 4;
    cfg.seed = 31;
    let artifacts = run_experiment(&cfg, None).unwrap();
    assert_eq!(artifacts.metrics.len(), 2);
    assert!(artifacts.final_params.iter().all(Matrix::is_finite));
    assert!(
        artifacts
            .metrics
            .iter()
            .map(|m| m.inversions)
            .sum::<usize>()
            > 0
    );
    // Image shape survives the pipeline.
    assert!(matches!(
        artifacts.template.input_shape(),
        FeatureShape::Image {
            channels: 1,
            height: 6,
            width: 6
        }
    ));
}

#[test]
fn cnn_model_on_flat_data_is_a_config_error() {
    let mut cfg = ExperimentConfig::default();
    cfg.model = ModelSpec::Cnn {
        filters: (4, 4),
        fc: (16, 16),
    };
    cfg.rounds = 1;
    let Err(err) = run_experiment(&cfg, None) else {
        panic!("cnn on flat data must be rejected")
    };
    assert!(matches!(err, fedrco::Error::ConfigInvalid { .. }));
}

#[test]
fn file_backed_datasets_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(5, 0, 0, Purpose::DataGen);
    let train = make_synthetic_images(4, 4, 3, 300, 3.0, &mut rng);
    let test = make_synthetic_images(4, 4, 3, 60, 3.0, &mut rng);
    let train_path = dir.path().join("train.fds");
    let test_path = dir.path().join("test.fds");
    save_dataset(&train, &train_path).unwrap();
    save_dataset(&test, &test_path).unwrap();

    let mut cfg = ExperimentConfig::default();
    cfg.method = Method::Fedavg;
    cfg.clients = 3;
    cfg.rounds = 2;
    cfg.local_epochs = 3;
    cfg.partition = PartitionSpec::Iid;
    cfg.model = ModelSpec::Dense { hidden: vec![8] };
    cfg.dataset = DatasetSpec::File {
        path: train_path,
        test_path: Some(test_path),
    };
    let artifacts = run_experiment(&cfg, None).unwrap();
    assert_eq!(artifacts.metrics.len(), 2);
}

#[test]
fn anomaly_events_reach_the_events_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.method = Method::Fedrco;
    cfg.clients = 4;
    cfg.ratio = 1.0;
    cfg.rounds = 2;
    cfg.local_epochs = 8;
    cfg.dataset = DatasetSpec::Synthetic {
        features: 10,
        classes: 3,
        samples: 400,
        separation: 2.5,
    };
    cfg.model = ModelSpec::Dense { hidden: vec![10] };
    cfg.seed = 33;
    let options = RunOptions {
        fault: Some(FaultInjection {
            round: 1,
            client: 1,
            epoch: 5,
            kind: FaultKind::ScaleGradient(1e5),
        }),
        track_spectrum: false,
    };
    run_experiment_with(&cfg, Some(dir.path()), &options).unwrap();
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let mut lines = events.lines();
    assert_eq!(lines.next(), Some(EVENTS_HEADER));
    let explosion = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[4] == "sudden_explosion")
        .expect("an explosion event row");
    assert_eq!(explosion[0], "1"); // round
    assert_eq!(explosion[1], "1"); // client
    assert_eq!(explosion[2], "5"); // epoch
}

#[test]
fn every_method_runs_the_shared_loop() {
    for method in [
        Method::Fedavg,
        Method::Fedprox,
        Method::Fedavgm,
        Method::Fedadam,
        Method::Fedrco,
        Method::FedrcoOri,
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.method = method;
        cfg.clients = 4;
        cfg.rounds = 2;
        cfg.local_epochs = 3;
        cfg.dataset = DatasetSpec::Synthetic {
            features: 8,
            classes: 3,
            samples: 300,
            separation: 3.0,
        };
        cfg.model = ModelSpec::Dense { hidden: vec![8] };
        cfg.seed = 35;
        let artifacts = run_experiment(&cfg, None).unwrap();
        assert_eq!(artifacts.metrics.len(), 2, "{method:?}");
        assert!(
            artifacts.final_params.iter().all(Matrix::is_finite),
            "{method:?}"
        );
    }
}
