//! Two-branch recurrent fusion network.
//!
//! ```text
//! audio [B,T,168] → block(128) → block(64) ─┐
//!                                           ├─ concat(128) → dense(64) → PReLU → dense(8) → softmax
//! video [B,T,D]   → block(256) → block(64) ─┘
//! ```
//!
//! A block is a recurrent layer followed by batch norm, PReLU and dropout
//! (order configurable). Single-modality variants drop one branch and feed
//! the remaining 64-wide sequence straight into the head.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::batchnorm::BatchNormCache;
use crate::nn::recurrent::RecurrentCache;
use crate::nn::{
    softmax_cross_entropy, softmax_rows, BatchNorm, DenseLayer, Dropout, PRelu, Parameterized,
    Recurrent, RecurrentKind, RmsProp, Scalar, Tensor,
};
use crate::rng::stream_rng;
use crate::sequencing::{SequenceWindow, NUM_CLASSES, UNANNOTATED_CLASS};

pub const AUDIO_FEATURE_DIM: usize = 168;
pub const BLOCK_DROPOUT: f64 = 0.25;

const STREAM_AUDIO_INIT: u64 = 11;
const STREAM_VIDEO_INIT: u64 = 12;
const STREAM_HEAD_INIT: u64 = 13;
const STREAM_AUDIO_DROPOUT: u64 = 21;
const STREAM_VIDEO_DROPOUT: u64 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Audio,
    Video,
    Fused,
}

impl Mode {
    pub fn uses_audio(self) -> bool {
        matches!(self, Mode::Audio | Mode::Fused)
    }

    pub fn uses_video(self) -> bool {
        matches!(self, Mode::Video | Mode::Fused)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Audio => "audio",
            Mode::Video => "video",
            Mode::Fused => "fused",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "audio" | "audio_only" => Ok(Mode::Audio),
            "video" | "video_only" => Ok(Mode::Video),
            "fused" | "fusion" => Ok(Mode::Fused),
            _ => Err(Error::Usage(format!("unknown mode '{s}' (audio|video|fused)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostStage {
    BatchNorm,
    PRelu,
    Dropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub recurrent: RecurrentKind,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub audio_units: Vec<usize>,
    pub video_units: Vec<usize>,
    pub head_units: usize,
    pub classes: usize,
    pub dropout: f64,
    /// Order of the three stages after each recurrent layer.
    pub post_order: Vec<PostStage>,
}

impl ModelConfig {
    pub fn new(mode: Mode, recurrent: RecurrentKind, video_dim: usize) -> Self {
        Self {
            mode,
            recurrent,
            audio_dim: AUDIO_FEATURE_DIM,
            video_dim,
            audio_units: vec![128, 64],
            video_units: vec![256, 64],
            head_units: 64,
            classes: NUM_CLASSES,
            dropout: BLOCK_DROPOUT,
            post_order: vec![PostStage::BatchNorm, PostStage::PRelu, PostStage::Dropout],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut order = self.post_order.clone();
        order.sort_by_key(|s| *s as u8);
        if order != [PostStage::BatchNorm, PostStage::PRelu, PostStage::Dropout] {
            return Err(Error::Domain(format!(
                "post-recurrent order {:?} must list batchnorm, prelu and dropout once each",
                self.post_order
            )));
        }
        let branches = [
            (self.mode.uses_audio(), self.audio_dim, &self.audio_units),
            (self.mode.uses_video(), self.video_dim, &self.video_units),
        ];
        for (used, dim, units) in branches {
            if used && (dim == 0 || units.is_empty() || units.contains(&0)) {
                return Err(Error::Domain(format!(
                    "branch needs a positive input dim and layer widths, got {dim} / {units:?}"
                )));
            }
        }
        if self.head_units == 0 || self.classes < 2 {
            return Err(Error::Domain("head needs units > 0 and at least 2 classes".into()));
        }
        Dropout::new(self.dropout).map(|_| ())
    }

    fn branch_out(&self, used: bool, units: &[usize]) -> usize {
        if used {
            *units.last().expect("validated")
        } else {
            0
        }
    }

    pub fn audio_out(&self) -> usize {
        self.branch_out(self.mode.uses_audio(), &self.audio_units)
    }

    pub fn video_out(&self) -> usize {
        self.branch_out(self.mode.uses_video(), &self.video_units)
    }

    /// Width of the per-timestep concatenation fed to the head.
    pub fn head_input(&self) -> usize {
        self.audio_out() + self.video_out()
    }
}

/// Trainable parameter count of the default fused GRU model for video
/// width `d`: `768·d + 420488`.
pub fn fused_gru_param_count(d: usize) -> usize {
    let gru = |i: usize, h: usize| 3 * (i * h + h * h + h);
    let block = |i: usize, h: usize| gru(i, h) + 2 * h + h;
    block(AUDIO_FEATURE_DIM, 128)
        + block(128, 64)
        + block(d, 256)
        + block(256, 64)
        + (128 * 64 + 64)
        + 64
        + (64 * NUM_CLASSES + NUM_CLASSES)
}

#[derive(Debug, Clone)]
pub struct RecurrentBlock<T> {
    pub rnn: Recurrent<T>,
    pub norm: BatchNorm<T>,
    pub act: PRelu<T>,
    pub dropout: Dropout,
}

#[derive(Debug, Clone)]
enum StageCache<T> {
    Norm(BatchNormCache<T>),
    /// PReLU input.
    Act(Tensor<T>),
    Drop(Option<Tensor<T>>),
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    rnn: RecurrentCache<T>,
    stages: Vec<StageCache<T>>,
}

impl<T: Scalar> RecurrentBlock<T> {
    fn init<R: Rng>(kind: RecurrentKind, input: usize, hidden: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            rnn: Recurrent::init(kind, input, hidden, rng),
            norm: BatchNorm::new(hidden),
            act: PRelu::new(hidden),
            dropout: Dropout::new(dropout)?,
        })
    }

    fn forward<R: Rng>(
        &self,
        x: &Tensor<T>,
        order: &[PostStage],
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, BlockCache<T>)> {
        let (mut y, rnn) = self.rnn.forward(x)?;
        let mut stages = Vec::with_capacity(order.len());
        for stage in order {
            match stage {
                PostStage::BatchNorm => {
                    let (out, c) = self.norm.forward(&y, training)?;
                    stages.push(StageCache::Norm(c));
                    y = out;
                }
                PostStage::PRelu => {
                    let out = self.act.forward(&y)?;
                    stages.push(StageCache::Act(y));
                    y = out;
                }
                PostStage::Dropout => {
                    let (out, mask) = self.dropout.forward(&y, training, rng);
                    stages.push(StageCache::Drop(mask));
                    y = out;
                }
            }
        }
        Ok((y, BlockCache { rnn, stages }))
    }

    /// Returns grads in [`RecurrentBlock::params`] order and the input grad.
    fn backward(&self, cache: &BlockCache<T>, dy: Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let mut dy = dy;
        let (mut norm_grads, mut act_grads) = (Vec::new(), Vec::new());
        for stage in cache.stages.iter().rev() {
            dy = match stage {
                StageCache::Norm(c) => {
                    let (g, dx) = self.norm.backward(c, &dy)?;
                    norm_grads = g;
                    dx
                }
                StageCache::Act(x) => {
                    let (g, dx) = self.act.backward(x, &dy)?;
                    act_grads = g;
                    dx
                }
                StageCache::Drop(mask) => self.dropout.backward(mask.as_ref(), &dy),
            };
        }
        let rg = self.rnn.backward(&cache.rnn, &dy)?;
        let mut grads = rg.params;
        grads.extend(norm_grads);
        grads.extend(act_grads);
        Ok((grads, rg.dx))
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.rnn.params();
        p.extend(self.norm.params());
        p.extend(self.act.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.rnn.params_mut();
        p.extend(self.norm.params_mut());
        p.extend(self.act.params_mut());
        p
    }

    fn param_names(&self, prefix: &str) -> Vec<String> {
        let kind = match self.rnn.kind() {
            RecurrentKind::Gru => "gru",
            RecurrentKind::Lstm => "lstm",
        };
        let rnn = self.rnn.param_names().into_iter().map(|n| format!("{prefix}.{kind}.{n}"));
        let norm = self.norm.param_names().into_iter().map(|n| format!("{prefix}.bn.{n}"));
        let act = self.act.param_names().into_iter().map(|n| format!("{prefix}.prelu.{n}"));
        rnn.chain(norm).chain(act).collect()
    }
}

/// Inputs and targets for a batch of equal-length windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub size: usize,
    pub steps: usize,
    /// `[B, T, audio_dim]`, present when the model uses audio.
    pub audio: Option<Tensor<T>>,
    /// `[B, T, video_dim]`, present when the model uses video.
    pub video: Option<Tensor<T>>,
    /// Row-major `[B × T]`.
    pub labels: Vec<u8>,
    /// `false` at padded timesteps.
    pub valid: Vec<bool>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_windows(windows: &[&SequenceWindow], mode: Mode) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Domain("empty batch".into()))?;
        let (steps, da, dv) = (first.length, first.audio_dim, first.video_dim);
        if let Some(w) = windows
            .iter()
            .find(|w| (w.length, w.audio_dim, w.video_dim) != (steps, da, dv))
        {
            return Err(Error::Shape(format!(
                "window {}@{} is {}×({}, {}), batch expects {steps}×({da}, {dv})",
                w.video_id, w.start_frame, w.length, w.audio_dim, w.video_dim
            )));
        }
        let size = windows.len();
        let gather = |pick: fn(&SequenceWindow) -> &[f32], dim: usize| -> Result<Tensor<T>> {
            let data = windows
                .iter()
                .flat_map(|w| pick(w).iter().map(|&v| T::lit(v as f64)))
                .collect();
            Tensor::from_vec(&[size, steps, dim], data)
        };
        let audio = mode
            .uses_audio()
            .then(|| gather(|w| &w.audio, da))
            .transpose()?;
        let video = mode
            .uses_video()
            .then(|| gather(|w| &w.video, dv))
            .transpose()?;
        let labels = windows.iter().flat_map(|w| w.labels.iter().copied()).collect();
        let valid = windows
            .iter()
            .flat_map(|w| (0..steps).map(move |t| t < w.real_len()))
            .collect();
        Ok(Self {
            size,
            steps,
            audio,
            video,
            labels,
            valid,
        })
    }

    /// Timesteps that count toward the loss.
    pub fn loss_mask(&self, include_class7: bool) -> Vec<bool> {
        self.valid
            .iter()
            .zip(&self.labels)
            .map(|(&v, &l)| v && (include_class7 || l != UNANNOTATED_CLASS))
            .collect()
    }
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    audio: Vec<BlockCache<T>>,
    video: Vec<BlockCache<T>>,
    /// Branch outputs, kept for inspection.
    pub audio_out: Option<Tensor<T>>,
    pub video_out: Option<Tensor<T>>,
    concat: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[B, T, classes]`.
    pub logits: Tensor<T>,
    /// Row-wise softmax of `logits`.
    pub probs: Tensor<T>,
    pub cache: ForwardCache<T>,
}

#[derive(Debug, Clone)]
pub struct LossAndGrads<T> {
    pub loss: T,
    /// Number of timesteps that entered the loss.
    pub counted: usize,
    /// In [`FusionModel::params`] order.
    pub grads: Vec<Tensor<T>>,
    pub output: ForwardOutput<T>,
}

/// Per-frame labels and averaged class probabilities for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub labels: Vec<u8>,
    /// `[n_frames][classes]`.
    pub probs: Vec<Vec<f64>>,
}

/// One window's softmax rows, `[length × classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowProbs {
    pub start: usize,
    pub pad_count: usize,
    pub length: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FusionModel<T> {
    pub config: ModelConfig,
    pub audio: Vec<RecurrentBlock<T>>,
    pub video: Vec<RecurrentBlock<T>>,
    pub dense: DenseLayer<T>,
    pub act: PRelu<T>,
    pub output: DenseLayer<T>,
}

fn build_branch<T: Scalar>(
    cfg: &ModelConfig,
    input: usize,
    units: &[usize],
    stream: u64,
    seed: u64,
) -> Result<Vec<RecurrentBlock<T>>> {
    let mut rng = stream_rng(seed, stream);
    let mut prev = input;
    units
        .iter()
        .map(|&h| {
            let b = RecurrentBlock::init(cfg.recurrent, prev, h, cfg.dropout, &mut rng);
            prev = h;
            b
        })
        .collect()
}

fn run_branch<T: Scalar, R: Rng>(
    blocks: &[RecurrentBlock<T>],
    x: &Tensor<T>,
    order: &[PostStage],
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Vec<BlockCache<T>>)> {
    let mut caches = Vec::with_capacity(blocks.len());
    let mut y = x.clone();
    for b in blocks {
        let (out, c) = b.forward(&y, order, training, rng)?;
        caches.push(c);
        y = out;
    }
    Ok((y, caches))
}

fn branch_backward<T: Scalar>(
    blocks: &[RecurrentBlock<T>],
    caches: &[BlockCache<T>],
    dy: Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    let mut per_block = Vec::with_capacity(blocks.len());
    let mut dy = dy;
    for (b, c) in blocks.iter().zip(caches).rev() {
        let (g, dx) = b.backward(c, dy)?;
        per_block.push(g);
        dy = dx;
    }
    Ok(per_block.into_iter().rev().flatten().collect())
}

/// Concatenates `[.., a]` and `[.., b]` along the last axis.
fn concat_last<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (wa, wb) = (a.last_dim(), b.last_dim());
    let mut data = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data().chunks_exact(wa).zip(b.data().chunks_exact(wb)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    let mut shape = a.shape().to_vec();
    *shape.last_mut().expect("rank ≥ 1") = wa + wb;
    Tensor::from_vec(&shape, data).expect("sizes add up")
}

/// Inverse of [`concat_last`].
fn split_last<T: Scalar>(x: &Tensor<T>, wa: usize) -> (Tensor<T>, Tensor<T>) {
    let w = x.last_dim();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for row in x.data().chunks_exact(w) {
        a.extend_from_slice(&row[..wa]);
        b.extend_from_slice(&row[wa..]);
    }
    let mut sa = x.shape().to_vec();
    let mut sb = sa.clone();
    *sa.last_mut().expect("rank ≥ 1") = wa;
    *sb.last_mut().expect("rank ≥ 1") = w - wa;
    (
        Tensor::from_vec(&sa, a).expect("split sizes"),
        Tensor::from_vec(&sb, b).expect("split sizes"),
    )
}

impl<T: Scalar> FusionModel<T> {
    /// Builds and initializes a model. Each branch and the head draw from
    /// their own seed stream, so a branch's weights depend only on `seed`
    /// and its own shape.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let audio = if config.mode.uses_audio() {
            build_branch(&config, config.audio_dim, &config.audio_units, STREAM_AUDIO_INIT, seed)?
        } else {
            Vec::new()
        };
        let video = if config.mode.uses_video() {
            build_branch(&config, config.video_dim, &config.video_units, STREAM_VIDEO_INIT, seed)?
        } else {
            Vec::new()
        };
        let mut rng = stream_rng(seed, STREAM_HEAD_INIT);
        let dense = DenseLayer::init(config.head_input(), config.head_units, &mut rng);
        let act = PRelu::new(config.head_units);
        let output = DenseLayer::init(config.head_units, config.classes, &mut rng);
        Ok(Self {
            config,
            audio,
            video,
            dense,
            act,
            output,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Copy of the model in another precision.
    pub fn cast<U: Scalar>(&self) -> FusionModel<U> {
        let mut m = FusionModel::<U>::new(self.config.clone(), 0).expect("config already validated");
        for (dst, src) in m.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        for (dst, src) in m.buffers_mut().into_iter().zip(self.buffers()) {
            *dst = src.cast();
        }
        m
    }

    fn check_input(&self, x: Option<&Tensor<T>>, dim: usize, what: &str, batch: &Batch<T>) -> Result<()> {
        let x = x.ok_or_else(|| Error::Shape(format!("{} model needs {what} input", self.mode().as_str())))?;
        x.expect_shape(&[batch.size, batch.steps, dim], what)
    }

    pub fn forward(&self, batch: &Batch<T>, training: bool, seed: u64) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        let order = &cfg.post_order;
        let (audio_out, audio) = if cfg.mode.uses_audio() {
            self.check_input(batch.audio.as_ref(), cfg.audio_dim, "audio", batch)?;
            let x = batch.audio.as_ref().expect("checked");
            let (y, c) = run_branch(&self.audio, x, order, training, &mut stream_rng(seed, STREAM_AUDIO_DROPOUT))?;
            (Some(y), c)
        } else {
            (None, Vec::new())
        };
        let (video_out, video) = if cfg.mode.uses_video() {
            self.check_input(batch.video.as_ref(), cfg.video_dim, "video", batch)?;
            let x = batch.video.as_ref().expect("checked");
            let (y, c) = run_branch(&self.video, x, order, training, &mut stream_rng(seed, STREAM_VIDEO_DROPOUT))?;
            (Some(y), c)
        } else {
            (None, Vec::new())
        };
        let concat = match (&audio_out, &video_out) {
            (Some(a), Some(v)) => concat_last(a, v),
            (Some(a), None) => a.clone(),
            (None, Some(v)) => v.clone(),
            (None, None) => unreachable!("validated mode uses a branch"),
        };
        let hidden_pre = self.dense.forward(&concat)?;
        let hidden = self.act.forward(&hidden_pre)?;
        let logits = self.output.forward(&hidden)?;
        let probs = softmax_rows(&logits);
        Ok(ForwardOutput {
            logits,
            probs,
            cache: ForwardCache {
                audio,
                video,
                audio_out,
                video_out,
                concat,
                hidden_pre,
                hidden,
            },
        })
    }

    /// Inference-mode class probabilities, `[B, T, classes]`.
    pub fn predict_proba(&self, batch: &Batch<T>) -> Result<Tensor<T>> {
        Ok(self.forward(batch, false, 0)?.probs)
    }

    /// Gradients of the loss w.r.t. every parameter given `dlogits`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (out_grads, dhidden) = self.output.backward(&cache.hidden, dlogits)?;
        let (act_grads, dpre) = self.act.backward(&cache.hidden_pre, &dhidden)?;
        let (dense_grads, dconcat) = self.dense.backward(&cache.concat, &dpre)?;
        let (da, dv) = match (self.config.mode.uses_audio(), self.config.mode.uses_video()) {
            (true, true) => {
                let (a, v) = split_last(&dconcat, self.config.audio_out());
                (Some(a), Some(v))
            }
            (true, false) => (Some(dconcat), None),
            (false, _) => (None, Some(dconcat)),
        };
        let mut grads = Vec::new();
        if let Some(da) = da {
            grads.extend(branch_backward(&self.audio, &cache.audio, da)?);
        }
        if let Some(dv) = dv {
            grads.extend(branch_backward(&self.video, &cache.video, dv)?);
        }
        grads.extend(dense_grads);
        grads.extend(act_grads);
        grads.extend(out_grads);
        Ok(grads)
    }

    /// Training-mode forward, masked mean cross-entropy over timesteps, and
    /// full backpropagation. Does not touch the model.
    pub fn loss_and_grads(&self, batch: &Batch<T>, seed: u64, include_class7: bool) -> Result<LossAndGrads<T>> {
        let output = self.forward(batch, true, seed)?;
        let rows = batch.size * batch.steps;
        let logits = output.logits.clone().reshape(&[rows, self.config.classes])?;
        let ce = softmax_cross_entropy(&logits, &batch.labels, &batch.loss_mask(include_class7))?;
        let dlogits = ce.dlogits.reshape(output.logits.shape())?;
        let grads = self.backward(&output.cache, &dlogits)?;
        Ok(LossAndGrads {
            loss: ce.loss,
            counted: ce.counted,
            grads,
            output,
        })
    }

    /// One optimizer step on `batch`. A non-finite loss or gradient leaves
    /// the model and optimizer untouched and reports divergence (with
    /// epoch/step left for the caller to fill in).
    pub fn train_step(
        &mut self,
        batch: &Batch<T>,
        optimizer: &mut RmsProp<T>,
        seed: u64,
        include_class7: bool,
    ) -> Result<T> {
        let step = self.loss_and_grads(batch, seed, include_class7)?;
        if !step.loss.is_finite() || !step.grads.iter().all(Tensor::all_finite) {
            return Err(Error::Divergence {
                epoch: 0,
                step: 0,
                loss: step.loss.as_f64(),
            });
        }
        optimizer.step(self.params_mut(), &step.grads)?;
        self.commit_running_stats(&step.output.cache);
        Ok(step.loss)
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// batch-norm running estimates.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache<T>) {
        let pairs = self
            .audio
            .iter_mut()
            .zip(&cache.audio)
            .chain(self.video.iter_mut().zip(&cache.video));
        for (block, c) in pairs {
            for stage in &c.stages {
                if let StageCache::Norm(nc) = stage {
                    block.norm.update_running(nc);
                }
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p: Vec<&Tensor<T>> = self.audio.iter().chain(&self.video).flat_map(|b| b.params()).collect();
        p.extend(self.dense.params());
        p.extend(self.act.params());
        p.extend(self.output.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p: Vec<&mut Tensor<T>> = self
            .audio
            .iter_mut()
            .chain(&mut self.video)
            .flat_map(|b| b.params_mut())
            .collect();
        p.extend(self.dense.params_mut());
        p.extend(self.act.params_mut());
        p.extend(self.output.params_mut());
        p
    }

    /// Dotted names aligned with [`FusionModel::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, blocks) in [("audio", &self.audio), ("video", &self.video)] {
            for (i, b) in blocks.iter().enumerate() {
                names.extend(b.param_names(&format!("{prefix}.{i}")));
            }
        }
        names.extend(self.dense.param_names().into_iter().map(|n| format!("head.dense.{n}")));
        names.extend(self.act.param_names().into_iter().map(|n| format!("head.prelu.{n}")));
        names.extend(self.output.param_names().into_iter().map(|n| format!("head.output.{n}")));
        names
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|p| p.shape().to_vec()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Batch-norm running statistics (non-trainable state).
    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        self.audio
            .iter()
            .chain(&self.video)
            .flat_map(|b| b.norm.buffers())
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.audio
            .iter_mut()
            .chain(&mut self.video)
            .flat_map(|b| b.norm.buffers_mut())
            .collect()
    }

    pub fn buffer_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, blocks) in [("audio", &self.audio), ("video", &self.video)] {
            for i in 0..blocks.len() {
                names.push(format!("{prefix}.{i}.bn.running_mean"));
                names.push(format!("{prefix}.{i}.bn.running_var"));
            }
        }
        names
    }

    /// Per-frame prediction for one video from the windows cut for it.
    /// Windows are batched in start order, so the result does not depend on
    /// the order they are passed in.
    pub fn predict_video(&self, windows: &[&SequenceWindow], n_frames: usize, batch_size: usize) -> Result<VideoPrediction> {
        let mut ordered = windows.to_vec();
        ordered.sort_by_key(|w| (w.start_frame, w.pad_count));
        let classes = self.config.classes;
        let mut items = Vec::with_capacity(ordered.len());
        for chunk in ordered.chunks(batch_size.max(1)) {
            let batch = Batch::from_windows(chunk, self.mode())?;
            let probs = self.predict_proba(&batch)?;
            let per_window = batch.steps * classes;
            for (w, p) in chunk.iter().zip(probs.data().chunks_exact(per_window)) {
                items.push(WindowProbs {
                    start: w.start_frame,
                    pad_count: w.pad_count,
                    length: w.length,
                    probs: p.iter().map(|v| v.as_f64()).collect(),
                });
            }
        }
        aggregate_windows(&items, n_frames, classes)
    }
}

/// Mean of the softmax rows covering each frame, then argmax with ties
/// going to the lowest class index. Padded positions are ignored.
pub fn aggregate_windows(windows: &[WindowProbs], n_frames: usize, classes: usize) -> Result<VideoPrediction> {
    if n_frames == 0 || windows.is_empty() {
        return Err(Error::Coverage(format!(
            "{} windows for {n_frames} frames",
            windows.len()
        )));
    }
    let mut ordered: Vec<&WindowProbs> = windows.iter().collect();
    ordered.sort_by_key(|w| (w.start, w.pad_count));
    let mut sums = vec![vec![0.0f64; classes]; n_frames];
    let mut counts = vec![0usize; n_frames];
    for w in ordered {
        let real = w.length.saturating_sub(w.pad_count);
        if real == 0 || w.start + real > n_frames || w.probs.len() != w.length * classes {
            return Err(Error::Coverage(format!(
                "window at {} ({} real of {} steps, {} probs) does not fit {n_frames} frames",
                w.start,
                real,
                w.length,
                w.probs.len()
            )));
        }
        for t in 0..real {
            let row = &w.probs[t * classes..(t + 1) * classes];
            sums[w.start + t].iter_mut().zip(row).for_each(|(s, &p)| *s += p);
            counts[w.start + t] += 1;
        }
    }
    if let Some(f) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!("frame {f} of {n_frames} is not covered by any window")));
    }
    let probs: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let labels = probs.iter().map(|p| argmax(p) as u8).collect();
    Ok(VideoPrediction { labels, probs })
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
