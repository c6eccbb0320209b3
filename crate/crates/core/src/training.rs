//! Epoch loop: seeded shuffling, mini-batch RMSProp steps, validation after
//! every epoch, best-model tracking, early stopping and resumable
//! checkpoints.
//!
//! Randomness is a pure function of the seed: epoch `e` shuffles with a
//! stream derived from `(seed, e)` and step `s` of that epoch draws its
//! dropout masks from `(seed, e, s)`. A run resumed from the end-of-epoch
//! checkpoint therefore replays the uninterrupted run bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::container::{create_dir, write_file, write_json};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_confusion, Confusion, EvalOptions, EvalReport, MetricWeights};
use crate::model::{Batch, FusionModel, ModelConfig, VideoPrediction};
use crate::nn::{RmsProp, RmsPropConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::sequencing::{Dataset, SequenceWindow, WindowSpec};
use crate::standardize::FeatureStats;

const STREAM_SHUFFLE: u64 = 31;
const STREAM_DROPOUT: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Re-cut both splits with this spec before training.
    pub window: Option<WindowSpec>,
    /// Let unannotated timesteps contribute to the loss.
    pub include_class7: bool,
    pub standardize: bool,
    /// Stop after this many consecutive epochs without a better validation
    /// metric; `None` never stops early.
    pub patience: Option<usize>,
    /// Weights of the validation metric.
    pub weights: MetricWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = RmsPropConfig::default();
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 0,
            learning_rate: opt.learning_rate,
            rho: opt.rho,
            epsilon: opt.epsilon,
            window: None,
            include_class7: true,
            standardize: false,
            patience: Some(5),
            weights: MetricWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Domain(format!(
                "rmsprop needs 0 ≤ rho < 1 and epsilon > 0, got {} / {}",
                self.rho, self.epsilon
            )));
        }
        if let Some(w) = self.window {
            w.validate()?;
        }
        Ok(())
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            weights: self.weights,
            ..EvalOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub val_combined: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    /// Epochs completed so far.
    pub epochs_done: usize,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub stale_epochs: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedState {
    train: TrainConfig,
    trainer: TrainerState,
}

/// Standardizes (if `stats`) and re-windows (if `window`) a dataset the
/// way the trainer does.
pub fn prepare_dataset(ds: &Dataset, window: Option<WindowSpec>, stats: Option<&FeatureStats>) -> Result<Dataset> {
    let ds = match window {
        Some(spec) if spec != ds.spec => ds.rewindow(spec)?,
        _ => ds.clone(),
    };
    match stats {
        Some(s) => s.apply(&ds),
        None => Ok(ds),
    }
}

/// Per-frame predictions for every video of `ds`, in dataset order.
pub fn predict_dataset(model: &FusionModel<f32>, ds: &Dataset, batch_size: usize) -> Result<Vec<VideoPrediction>> {
    ds.videos
        .iter()
        .map(|v| {
            let windows: Vec<&SequenceWindow> = ds.video_windows(v).iter().collect();
            model.predict_video(&windows, v.n_frames, batch_size)
        })
        .collect()
}

/// Frame-level evaluation of `model` on `ds` (already prepared).
pub fn evaluate_dataset(model: &FusionModel<f32>, ds: &Dataset, options: EvalOptions, batch_size: usize) -> Result<EvalReport> {
    let mut confusion = Confusion::default();
    for (v, pred) in ds.videos.iter().zip(predict_dataset(model, ds, batch_size)?) {
        confusion.merge(&Confusion::from_labels(&pred.labels, &ds.frame_labels(v)?)?);
    }
    Ok(evaluate_confusion(confusion, options))
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: FusionModel<f32>,
    pub optimizer: RmsProp<f32>,
    pub best: Option<FusionModel<f32>>,
    pub stats: Option<FeatureStats>,
    pub state: TrainerState,
    train: Dataset,
    val: Dataset,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig, train: &Dataset, val: &Dataset) -> Result<Self> {
        config.validate()?;
        let model = FusionModel::new(model_config, config.seed)?;
        let optimizer = RmsProp::new(config.optimizer(), &model.param_shapes());
        let stats = if config.standardize {
            Some(FeatureStats::fit(&prepare_dataset(train, config.window, None)?)?)
        } else {
            None
        };
        Self::assemble(config, model, optimizer, None, stats, TrainerState::default(), train, val)
    }

    /// Continues the run saved in `checkpoint`.
    pub fn resume(checkpoint: Checkpoint, train: &Dataset, val: &Dataset) -> Result<Self> {
        let saved: SavedState = serde_json::from_value(checkpoint.state)
            .map_err(|e| Error::Schema(format!("checkpoint holds no trainer state: {e}")))?;
        let optimizer = checkpoint
            .optimizer
            .ok_or_else(|| Error::Schema("checkpoint holds no optimizer state".into()))?;
        Self::assemble(
            saved.train,
            checkpoint.model,
            optimizer,
            checkpoint.best,
            checkpoint.stats,
            saved.trainer,
            train,
            val,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: TrainConfig,
        model: FusionModel<f32>,
        optimizer: RmsProp<f32>,
        best: Option<FusionModel<f32>>,
        stats: Option<FeatureStats>,
        state: TrainerState,
        train: &Dataset,
        val: &Dataset,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Domain("training and validation sets must be nonempty".into()));
        }
        for (name, ds) in [("train", train), ("validation", val)] {
            let cfg = &model.config;
            let bad_audio = cfg.mode.uses_audio() && ds.audio_dim != cfg.audio_dim;
            let bad_video = cfg.mode.uses_video() && ds.video_dim != cfg.video_dim;
            if bad_audio || bad_video {
                return Err(Error::Shape(format!(
                    "{name} set dims ({}, {}) do not match model ({}, {})",
                    ds.audio_dim, ds.video_dim, cfg.audio_dim, cfg.video_dim
                )));
            }
        }
        let train = prepare_dataset(train, config.window, stats.as_ref())?;
        let val = prepare_dataset(val, config.window, stats.as_ref())?;
        Ok(Self {
            config,
            model,
            optimizer,
            best,
            stats,
            state,
            train,
            val,
        })
    }

    /// Prepared (re-windowed, standardized) training split.
    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn val_set(&self) -> &Dataset {
        &self.val
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped_early || self.state.epochs_done >= self.config.epochs
    }

    /// Window order for `epoch` (0-based).
    pub fn permutation(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut stream_rng(derive_seed(self.config.seed, STREAM_SHUFFLE), epoch as u64));
        order
    }

    fn step_seed(&self, epoch: usize, step: usize) -> u64 {
        let per_epoch = derive_seed(derive_seed(self.config.seed, STREAM_DROPOUT), epoch as u64);
        derive_seed(per_epoch, step as u64)
    }

    /// One pass over the training split followed by validation.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::State("training already finished".into()));
        }
        let epoch = self.state.epochs_done;
        let order = self.permutation(epoch);
        let mut loss_sum = 0.0f64;
        let mut steps = 0usize;
        for (step, idx) in order.chunks(self.config.batch_size).enumerate() {
            let windows: Vec<&SequenceWindow> = idx.iter().map(|&i| &self.train.windows[i]).collect();
            let batch = Batch::from_windows(&windows, self.model.mode())?;
            let seed = self.step_seed(epoch, step);
            let loss = self
                .model
                .train_step(&batch, &mut self.optimizer, seed, self.config.include_class7)
                .map_err(|e| match e {
                    Error::Divergence { loss, .. } => Error::Divergence {
                        epoch: epoch + 1,
                        step,
                        loss,
                    },
                    other => other,
                })?;
            loss_sum += loss as f64;
            steps += 1;
        }
        let report = self.validate()?;
        let metric = report.combined();
        let improved = match (metric, self.state.best_metric) {
            (Some(m), Some(b)) => m > b,
            (Some(_), None) => true,
            (None, _) => self.best.is_none(),
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / steps as f64,
            val_accuracy: report.metrics.as_ref().map(|m| m.accuracy_f64()),
            val_macro_f1: report.metrics.as_ref().map(|m| m.macro_f1_f64()),
            val_combined: metric,
            improved,
        };
        self.state.epochs_done += 1;
        if improved {
            self.state.best_epoch = Some(epoch + 1);
            self.state.best_metric = metric;
            self.state.stale_epochs = 0;
            self.best = Some(self.model.clone());
        } else {
            self.state.stale_epochs += 1;
            if self.config.patience.is_some_and(|p| self.state.stale_epochs >= p) {
                self.state.stopped_early = true;
            }
        }
        self.state.history.push(record.clone());
        Ok(record)
    }

    /// Frame-level metrics on the validation split. Read-only.
    pub fn validate(&self) -> Result<EvalReport> {
        evaluate_dataset(&self.model, &self.val, self.config.eval_options(), self.config.batch_size)
    }

    /// Frame-level metrics of the current model on any dataset, after the
    /// trainer's own preparation.
    pub fn evaluate(&self, ds: &Dataset, options: EvalOptions) -> Result<EvalReport> {
        let ds = prepare_dataset(ds, self.config.window, self.stats.as_ref())?;
        evaluate_dataset(&self.model, &ds, options, self.config.batch_size)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
            best: self.best.clone(),
            stats: self.stats.clone(),
            state: serde_json::to_value(SavedState {
                train: self.config.clone(),
                trainer: self.state.clone(),
            })
            .expect("plain data serializes"),
        }
    }

    /// Checkpoint of the best model alone, for evaluation.
    pub fn best_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.best.clone().unwrap_or_else(|| self.model.clone()),
            optimizer: None,
            best: None,
            stats: self.stats.clone(),
            state: json!({
                "best_epoch": self.state.best_epoch,
                "best_metric": self.state.best_metric,
                "train": self.config,
            }),
        }
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            model: self.model.config.clone(),
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    /// Trains to completion. With `out`, every epoch leaves
    /// `out/last` (resumable), `out/best`, `out/train.log` and
    /// `out/summary.json`; after a divergence the files from the last good
    /// epoch remain.
    pub fn run(&mut self, out: Option<&Path>) -> Result<TrainReport> {
        if let Some(dir) = out {
            create_dir(dir)?;
        }
        while !self.is_finished() {
            let record = self.run_epoch()?;
            log::info!("{}", format_record(&record));
            if let Some(dir) = out {
                self.save(dir)?;
            }
        }
        Ok(self.report())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.checkpoint().write(&dir.join("last"))?;
        self.best_checkpoint().write(&dir.join("best"))?;
        let report = self.report();
        write_file(&dir.join("train.log"), report.log_text().as_bytes())?;
        write_json(&dir.join("summary.json"), &report.summary())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub config: TrainConfig,
    pub state: TrainerState,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.6}"))
}

pub fn format_record(r: &EpochRecord) -> String {
    format!(
        "epoch {:>4}  train_loss {:.6}  val_acc {}  val_f1 {}  val_combined {}{}",
        r.epoch,
        r.train_loss,
        fmt_opt(r.val_accuracy),
        fmt_opt(r.val_macro_f1),
        fmt_opt(r.val_combined),
        if r.improved { "  *" } else { "" }
    )
}

impl TrainReport {
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for r in &self.state.history {
            let _ = writeln!(s, "{}", format_record(r));
        }
        if self.state.stopped_early {
            let _ = writeln!(
                s,
                "stopped early after {} epochs without improvement",
                self.state.stale_epochs
            );
        }
        s
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "train": self.config,
            "epochs_run": self.state.epochs_done,
            "best_epoch": self.state.best_epoch,
            "best_val_combined": self.state.best_metric,
            "stopped_early": self.state.stopped_early,
            "epochs": self.state.history,
        })
    }
}

/// Trains on `train`, validating on `val`, and returns the report together
/// with the best checkpoint.
pub fn run_training(
    model_config: ModelConfig,
    config: TrainConfig,
    train: &Dataset,
    val: &Dataset,
    out: Option<&Path>,
) -> Result<(TrainReport, Checkpoint)> {
    let mut trainer = Trainer::new(model_config, config, train, val)?;
    let report = trainer.run(out)?;
    Ok((report, trainer.best_checkpoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use crate::nn::RecurrentKind;
    use crate::sequencing::{cut_windows, FrameFeatures};

    fn tiny_dataset(videos: usize, seed: u64) -> Dataset {
        let mut ds = Dataset::new(WindowSpec::default(), 3, 2);
        for v in 0..videos {
            let n = 20 + v * 7;
            let frames: Vec<FrameFeatures> = (0..n)
                .map(|i| {
                    let c = ((i / 5 + v) % 3) as u8;
                    let x = (seed as f32 + i as f32 * 0.37).sin() * 0.1;
                    FrameFeatures {
                        frame_index: i,
                        audio: vec![c as f32 + x, -x, 1.0],
                        video: vec![x, c as f32 * 0.5],
                        label: c,
                    }
                })
                .collect();
            let id = format!("v{v}");
            ds.push_video(&id, n, cut_windows(&id, &frames, ds.spec).unwrap()).unwrap();
        }
        ds
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            audio_dim: 3,
            audio_units: vec![6, 4],
            video_units: vec![5, 4],
            head_units: 4,
            ..ModelConfig::new(Mode::Fused, RecurrentKind::Gru, 2)
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 3,
            seed: 7,
            learning_rate: 3e-3,
            patience: None,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let (train, val) = (tiny_dataset(4, 0), tiny_dataset(2, 1));
        let run = || {
            let mut t = Trainer::new(tiny_model(), tiny_config(), &train, &val).unwrap();
            t.run(None).unwrap();
            t
        };
        let (a, b) = (run(), run());
        assert_eq!(a.state, b.state);
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.state.history.len(), 4);
    }

    #[test]
    fn permutations_differ_by_epoch_and_are_complete() {
        let (train, val) = (tiny_dataset(4, 0), tiny_dataset(1, 1));
        let t = Trainer::new(tiny_model(), tiny_config(), &train, &val).unwrap();
        let (p0, p1) = (t.permutation(0), t.permutation(1));
        assert_ne!(p0, p1);
        assert_eq!(p0, t.permutation(0));
        let mut s = p0.clone();
        s.sort();
        assert_eq!(s, (0..train.len()).collect::<Vec<_>>());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (train, val) = (tiny_dataset(3, 0), tiny_dataset(2, 1));
        let mut full = Trainer::new(tiny_model(), tiny_config(), &train, &val).unwrap();
        full.run(None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut first = Trainer::new(tiny_model(), tiny_config(), &train, &val).unwrap();
        first.run_epoch().unwrap();
        first.run_epoch().unwrap();
        first.checkpoint().write(dir.path()).unwrap();
        let mut resumed = Trainer::resume(Checkpoint::read(dir.path()).unwrap(), &train, &val).unwrap();
        resumed.run(None).unwrap();

        assert_eq!(resumed.state, full.state);
        assert_eq!(resumed.model.params(), full.model.params());
        assert_eq!(resumed.model.buffers(), full.model.buffers());
        assert_eq!(resumed.optimizer, full.optimizer);
    }

    #[test]
    fn patience_stops_stagnant_runs() {
        let (train, val) = (tiny_dataset(2, 0), tiny_dataset(1, 1));
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e-12,
            patience: Some(3),
            ..tiny_config()
        };
        let mut t = Trainer::new(tiny_model(), cfg, &train, &val).unwrap();
        t.run(None).unwrap();
        assert!(t.state.stopped_early);
        let stale = t.state.history.iter().rev().take_while(|r| !r.improved).count();
        assert_eq!(stale, 3);
        assert!(t.state.epochs_done < 50);
    }

    #[test]
    fn validation_leaves_state_untouched() {
        let (train, val) = (tiny_dataset(2, 0), tiny_dataset(1, 1));
        let t = Trainer::new(tiny_model(), tiny_config(), &train, &val).unwrap();
        let (params, opt) = (t.model.params().into_iter().cloned().collect::<Vec<_>>(), t.optimizer.clone());
        let a = t.validate().unwrap();
        let b = t.validate().unwrap();
        assert_eq!(a, b);
        assert_eq!(t.model.params().into_iter().cloned().collect::<Vec<_>>(), params);
        assert_eq!(t.optimizer, opt);
    }

    #[test]
    fn standardization_stats_come_from_train_only() {
        let (train, val) = (tiny_dataset(2, 0), tiny_dataset(2, 5));
        let cfg = TrainConfig {
            standardize: true,
            ..tiny_config()
        };
        let t = Trainer::new(tiny_model(), cfg, &train, &val).unwrap();
        let stats = t.stats.clone().unwrap();
        assert_eq!(stats, FeatureStats::fit(&train).unwrap());
        assert_eq!(t.val_set(), &stats.apply(&val).unwrap());
    }

    #[test]
    fn bad_config_rejected() {
        let (train, val) = (tiny_dataset(1, 0), tiny_dataset(1, 1));
        for cfg in [
            TrainConfig { epochs: 0, ..tiny_config() },
            TrainConfig { learning_rate: 0.0, ..tiny_config() },
            TrainConfig { batch_size: 0, ..tiny_config() },
        ] {
            assert!(Trainer::new(tiny_model(), cfg, &train, &val).is_err());
        }
        let empty = Dataset::new(WindowSpec::default(), 3, 2);
        assert!(Trainer::new(tiny_model(), tiny_config(), &empty, &val).is_err());
    }
}
