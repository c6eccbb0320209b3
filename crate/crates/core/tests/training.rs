use exprfuse::checkpoint::Checkpoint;
use exprfuse::model::{Batch, FusionModel, Mode, ModelConfig};
use exprfuse::nn::{RecurrentKind, RmsProp, RmsPropConfig};
use exprfuse::sequencing::{Dataset, SequenceWindow};
use exprfuse::synthetic::{synthetic_dataset, SyntheticSpec};
use exprfuse::training::{TrainConfig, Trainer};

fn small_spec(windows: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        windows,
        video_dim: 24,
        seed,
        ..Default::default()
    }
}

fn small_model(mode: Mode, kind: RecurrentKind) -> ModelConfig {
    ModelConfig {
        audio_units: vec![16, 8],
        video_units: vec![16, 8],
        head_units: 8,
        ..ModelConfig::new(mode, kind, 24)
    }
}

fn batch_of(ds: &Dataset, mode: Mode) -> Batch<f32> {
    let windows: Vec<&SequenceWindow> = ds.windows.iter().collect();
    Batch::from_windows(&windows, mode).unwrap()
}

#[test]
fn single_batch_loss_mostly_decreases() {
    for kind in [RecurrentKind::Gru, RecurrentKind::Lstm] {
        let ds = synthetic_dataset(&small_spec(16, 4)).unwrap();
        let cfg = small_model(Mode::Fused, kind);
        let mut model = FusionModel::<f32>::new(cfg, 2).unwrap();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &model.param_shapes());
        let batch = batch_of(&ds, Mode::Fused);
        // a fixed dropout seed makes the batch loss a function of the parameters alone
        let loss = |m: &FusionModel<f32>| m.loss_and_grads(&batch, 0, true).unwrap().loss as f64;
        let mut losses = vec![loss(&model)];
        for _ in 0..50 {
            model.train_step(&batch, &mut opt, 0, true).unwrap();
            losses.push(loss(&model));
        }
        let rises = losses.windows(2).filter(|p| p[1] > p[0]).count();
        assert!(rises <= 5, "{kind:?}: {rises} non-monotone steps in {losses:?}");
        assert!(losses[50] < losses[0]);
    }
}

fn config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed,
        learning_rate: 1e-3,
        patience: None,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    let train = synthetic_dataset(&small_spec(24, 1)).unwrap();
    let val = synthetic_dataset(&small_spec(8, 2)).unwrap();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let mut t = Trainer::new(small_model(Mode::Fused, RecurrentKind::Gru), config(3, 3), &train, &val).unwrap();
        t.run(None).unwrap();
        t.checkpoint().write(d.path()).unwrap();
    }
    let files = |root: &std::path::Path| {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    out.push((e.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&e).unwrap()));
                }
            }
        }
        out.sort();
        out
    };
    assert_eq!(files(dirs[0].path()), files(dirs[1].path()));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let train = synthetic_dataset(&small_spec(24, 5)).unwrap();
    let val = synthetic_dataset(&small_spec(8, 6)).unwrap();
    let cfg = small_model(Mode::Fused, RecurrentKind::Lstm);

    let mut full = Trainer::new(cfg.clone(), config(9, 4), &train, &val).unwrap();
    full.run(None).unwrap();

    let mut first = Trainer::new(cfg, config(9, 4), &train, &val).unwrap();
    first.run_epoch().unwrap();
    first.run_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    first.checkpoint().write(dir.path()).unwrap();
    let mut resumed = Trainer::resume(Checkpoint::read(dir.path()).unwrap(), &train, &val).unwrap();
    resumed.run(None).unwrap();

    assert_eq!(resumed.state, full.state);
    assert_eq!(resumed.model.params(), full.model.params());
    assert_eq!(resumed.model.buffers(), full.model.buffers());
}

#[test]
fn dataset_round_trip_is_lossless() {
    let ds = synthetic_dataset(&small_spec(10, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    assert_eq!(Dataset::read(dir.path()).unwrap(), ds);
}
