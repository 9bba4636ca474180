use kge_core::dataset::synthetic::uniform_graph;
use kge_core::models::{init_model, EnergyConfig, ModelKind, Norm, ParamName};
use kge_core::training::{train, train_from, EarlyStopping, Phase, TrainConfig, TrainError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        pretrain_epochs: 4,
        batch_size: 200,
        seed: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn pretraining_phase_matches_a_plain_transe_run() {
    let ds = uniform_graph(50, 4, 800, 5);
    let energy = EnergyConfig::new(Norm::L1, 6, 6, 2);
    let cfg = small_config();
    let pipeline = train(&ds, ModelKind::TransF, &energy, &cfg).unwrap();
    let transe = train(
        &ds,
        ModelKind::TransE,
        &energy,
        &TrainConfig {
            epochs: cfg.pretrain_epochs,
            ..cfg.clone()
        },
    )
    .unwrap();
    let pre: Vec<_> = pipeline.log.without_timing()[..4].to_vec();
    assert_eq!(pre, transe.log.without_timing());
    assert!(pipeline.log.records[..4]
        .iter()
        .all(|r| r.phase == Phase::Pretrain && r.model == ModelKind::TransE));
    assert!(pipeline.log.records[4..]
        .iter()
        .all(|r| r.phase == Phase::Main && r.model == ModelKind::TransF));
    assert_eq!(
        pipeline
            .log
            .records
            .iter()
            .map(|r| r.epoch)
            .collect::<Vec<_>>(),
        (1..=7).collect::<Vec<_>>()
    );
    // the transferred model starts from the pretrained entities
    assert_eq!(pipeline.model.kind(), ModelKind::TransF);
}

#[test]
fn constraints_hold_after_training() {
    let ds = uniform_graph(40, 3, 500, 6);
    for kind in ModelKind::ALL {
        let dr = if matches!(kind, ModelKind::TransR | ModelKind::TransF) {
            5
        } else {
            6
        };
        let energy = EnergyConfig::new(Norm::L2, 6, dr, 2);
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            adam: kge_core::training::AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
            ..small_config()
        };
        let out = train(&ds, kind, &energy, &cfg).unwrap();
        assert_eq!(out.model.constraint_violation(), None, "{kind}");
        for row in out
            .model
            .params()
            .table(ParamName::Relation)
            .unwrap()
            .data()
            .chunks(dr)
        {
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn non_finite_parameters_are_reported_with_position() {
    let ds = uniform_graph(30, 2, 300, 7);
    let energy = EnergyConfig::square(Norm::L1, 4, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = init_model(ModelKind::TransE, &energy, 30, 2, &mut rng).unwrap();
    model
        .params_mut()
        .table_mut(ParamName::Relation)
        .unwrap()
        .data_mut()[0] = f64::NAN;
    match train_from(model, &ds, &small_config()) {
        Err(TrainError::NonFiniteLoss {
            epoch,
            batch,
            triple,
        }) => {
            assert_eq!(epoch, 1);
            assert!(batch >= 1);
            assert_eq!(triple.relation, 0);
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn early_stopping_keeps_the_best_validation_model() {
    let mut ds = uniform_graph(40, 3, 900, 4);
    ds.valid = ds.test.clone();
    let energy = EnergyConfig::square(Norm::L1, 6, 0);
    let cfg = TrainConfig {
        epochs: 40,
        pretrain_epochs: 0,
        early_stopping: Some(EarlyStopping {
            every: 2,
            patience: 1,
        }),
        ..small_config()
    };
    let out = train(&ds, ModelKind::TransE, &energy, &cfg).unwrap();
    assert!(!out.log.records.is_empty() && out.log.records.len() <= 40);
    assert_eq!(out.log.records.len() % 2, 0);
}

#[test]
fn invalid_configurations_are_rejected() {
    let ds = uniform_graph(10, 1, 50, 0);
    let energy = EnergyConfig::square(Norm::L1, 4, 2);
    let bad = TrainConfig {
        negatives_per_positive: 0,
        ..small_config()
    };
    assert!(matches!(
        train(&ds, ModelKind::TransE, &energy, &bad),
        Err(TrainError::InvalidConfig(_))
    ));
    let rect = EnergyConfig::new(Norm::L1, 4, 3, 2);
    assert!(train(&ds, ModelKind::TransF, &rect, &small_config()).is_err());
}

#[test]
fn more_negatives_per_positive_are_counted_in_the_loss() {
    let ds = uniform_graph(30, 2, 400, 2);
    let energy = EnergyConfig::square(Norm::L1, 4, 0);
    let cfg = TrainConfig {
        negatives_per_positive: 3,
        pretrain_epochs: 0,
        epochs: 2,
        ..small_config()
    };
    let out = train(&ds, ModelKind::TransE, &energy, &cfg).unwrap();
    assert_eq!(out.log.records.len(), 2);
    assert!(out.log.records.iter().all(|r| r.mean_loss.is_finite()));
}
