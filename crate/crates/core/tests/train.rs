use nunet_core::arch::{build_nunet, NuNetConfig};
use nunet_core::data::{ingest_flat, make_folds, preprocess_all, synth, IngestOptions, Prepared};
use nunet_core::train::{
    bce_loss, cross_validate, external_validate, train_fold, Checkpoint, EvalReport, RunOptions,
    TrainConfig, BCE_EPS,
};
use nunet_core::{Error, Shape4, Tensor};
use tempfile::TempDir;

fn tensor(v: Vec<f32>) -> Tensor {
    Tensor::from_vec(Shape4::new(1, 1, 1, v.len()), v).unwrap()
}

#[test]
fn bce_closed_forms() {
    let eps = BCE_EPS as f32;
    let perfect = bce_loss(
        &tensor(vec![eps, 1.0 - eps, 1.0 - eps, eps]),
        &tensor(vec![0.0, 1.0, 1.0, 0.0]),
    )
    .unwrap();
    assert!(perfect < 1e-6, "{perfect}");
    let half = bce_loss(
        &tensor(vec![0.5; 5]),
        &tensor(vec![0.0, 1.0, 1.0, 0.0, 1.0]),
    )
    .unwrap();
    assert!((half - std::f64::consts::LN_2).abs() < 1e-9);
    let worst = bce_loss(&tensor(vec![1.0]), &tensor(vec![0.0])).unwrap();
    assert!((worst - 16.118).abs() < 1e-2, "{worst}");
    assert!((worst + (BCE_EPS).ln()).abs() < 1e-6);
    assert!(bce_loss(&tensor(vec![0.5; 2]), &tensor(vec![0.0; 3])).is_err());
}

fn tiny_arch() -> NuNetConfig {
    let mut cfg = NuNetConfig::backbone(7);
    cfg.backbone.channels.base_width = 4;
    cfg.backbone.channels.cap = 16;
    cfg.set_default_mous().unwrap();
    cfg.set_default_mdscs();
    cfg.input_size = 16;
    cfg.seed = 5;
    cfg
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        input_size: 16,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}

fn toy_data(n: usize, seed: u64) -> (TempDir, nunet_core::data::DatasetManifest) {
    let dir = TempDir::new().unwrap();
    synth::write_flat(dir.path(), n, 24, seed).unwrap();
    let m = ingest_flat(
        dir.path(),
        &IngestOptions {
            source: Some("toy".into()),
            ..IngestOptions::default()
        },
    )
    .unwrap();
    (dir, m)
}

fn prepared(n: usize) -> Vec<Prepared> {
    let (_dir, m) = toy_data(n, 3);
    preprocess_all(&m.samples, 16, 8).unwrap()
}

#[test]
fn zero_epochs_rejected() {
    let mut model = build_nunet(&tiny_arch()).unwrap();
    let err = train_fold(
        &mut model,
        &prepared(2),
        &tiny_train(0),
        None,
        &mut std::io::sink(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn identical_seeds_give_identical_traces() {
    let data = prepared(6);
    let run = || {
        let mut model = build_nunet(&tiny_arch()).unwrap();
        let mut log = Vec::new();
        let out = train_fold(&mut model, &data, &tiny_train(3), Some(1), &mut log).unwrap();
        (out.step_losses, String::from_utf8(log).unwrap())
    };
    let (a, log) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    assert!(a.iter().all(|l| l.is_finite()));
    assert!(log
        .lines()
        .next()
        .unwrap()
        .starts_with("epoch=1 step=1 loss="));
    assert_eq!(log.lines().count(), 6);
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let mut data = prepared(2);
    data[0].input.data_mut()[0] = f32::NAN;
    data[1].input.data_mut()[0] = f32::NAN;
    let mut model = build_nunet(&tiny_arch()).unwrap();
    let err = train_fold(
        &mut model,
        &data,
        &tiny_train(2),
        None,
        &mut std::io::sink(),
    )
    .unwrap_err();
    match err {
        Error::NonFiniteLoss { epoch, batch, loss } => {
            assert_eq!((epoch, batch), (1, 1));
            assert!(!loss.is_finite());
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn max_steps_caps_training() {
    let mut model = build_nunet(&tiny_arch()).unwrap();
    let cfg = TrainConfig {
        max_steps: Some(3),
        batch_size: 2,
        ..tiny_train(10)
    };
    let out = train_fold(&mut model, &prepared(4), &cfg, None, &mut std::io::sink()).unwrap();
    assert_eq!(out.step_losses.len(), 3);
    assert_eq!(out.checkpoint.epoch, 2);
}

#[test]
fn checkpoint_roundtrip_is_bit_identical() {
    let data = prepared(4);
    let mut model = build_nunet(&tiny_arch()).unwrap();
    let out = train_fold(
        &mut model,
        &data,
        &tiny_train(2),
        Some(0),
        &mut std::io::sink(),
    )
    .unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.ckpt");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    let restored = loaded.restore().unwrap();
    let probe = Tensor::stack(&data.iter().map(|p| p.input.clone()).collect::<Vec<_>>()).unwrap();
    let a = model.forward(&probe).unwrap();
    let b = restored.forward(&probe).unwrap();
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));

    // running statistics are part of the container
    assert!(loaded
        .tensors
        .iter()
        .any(|t| t.name.ends_with("running_var")));

    std::fs::write(&path, b"garbage!").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn cross_validation_bookkeeping_and_determinism() {
    let (_data_dir, manifest) = toy_data(16, 9);
    let plan = make_folds(&manifest, 4, 1, None).unwrap();
    let out = TempDir::new().unwrap();
    let run = |name: &str| {
        let opts = RunOptions {
            label: "tiny".into(),
            out_dir: Some(out.path().join(name)),
            save_predictions: true,
        };
        cross_validate(&tiny_arch(), &manifest, &plan, &tiny_train(2), &opts).unwrap()
    };
    let report = run("a");
    assert_eq!(report.records.len(), 16);
    assert_eq!(report.per_fold.folds, 4);
    assert_eq!(report.per_fold.fold_means.len(), 4);
    assert_eq!(report.loss_traces.len(), 4);
    assert_eq!(report.model_selection, "last_epoch");

    for f in 0..4 {
        let d = out.path().join("a").join(format!("fold_{f}"));
        let read = |n: &str| std::fs::read_to_string(d.join(n)).unwrap();
        let train = read("train_ids.txt");
        let test = read("test_ids.txt");
        let test_ids: Vec<&str> = test.lines().collect();
        assert!(train.lines().all(|id| !test_ids.contains(&id)));
        assert_eq!(train.lines().count() + test_ids.len(), 16);
        assert!(d.join("checkpoint.ckpt").exists());
        assert!(d.join("train.log").exists());
        assert_eq!(
            std::fs::read_dir(d.join("predictions")).unwrap().count(),
            test_ids.len()
        );
    }

    let again = run("b");
    assert_eq!(again.records, report.records);
    let csv = |n: &str| std::fs::read(out.path().join(n).join("records.csv")).unwrap();
    assert_eq!(csv("a"), csv("b"));

    let loaded = EvalReport::load(&out.path().join("a")).unwrap();
    assert_eq!(loaded.per_fold, report.per_fold);
    assert_eq!(loaded.records.len(), 16);
}

#[test]
fn external_validation_shapes_and_warnings() {
    let data = prepared(4);
    let mut checkpoints = Vec::new();
    for fold in 0..2 {
        let mut arch = tiny_arch();
        arch.seed += fold as u64;
        let mut model = build_nunet(&arch).unwrap();
        checkpoints.push(
            train_fold(
                &mut model,
                &data,
                &tiny_train(1),
                Some(fold),
                &mut std::io::sink(),
            )
            .unwrap()
            .checkpoint,
        );
    }
    let (_dir, external) = toy_data(5, 21);
    let cfg = tiny_train(1);
    let report = external_validate(&checkpoints, &external, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(report.records.len(), 10);
    assert_eq!(report.per_fold.folds, 2);
    assert!(report.warnings.is_empty());

    let (_d1, single) = toy_data(1, 4);
    let one = external_validate(&checkpoints[..1], &single, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(one.records.len(), 1);

    let larger = TrainConfig {
        input_size: 32,
        ..cfg.clone()
    };
    let r = external_validate(&checkpoints[..1], &single, &larger, &RunOptions::default()).unwrap();
    assert_eq!(r.warnings.len(), 1, "{:?}", r.warnings);
    assert!(r.warnings[0].contains("fingerprint"));

    let bad = TrainConfig {
        input_size: 20,
        ..cfg
    };
    let err = external_validate(&checkpoints[..1], &single, &bad, &RunOptions::default())
        .unwrap_err()
        .to_string();
    assert!(err.contains("divisible by 8"), "{err}");
    assert!(external_validate(&[], &single, &tiny_train(1), &RunOptions::default()).is_err());
}
