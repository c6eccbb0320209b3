//! Generated data with a known class structure.
//!
//! [`synthetic_dataset`] builds windowed data where the audio features
//! encode `class mod 4` (a sinusoid whose frequency depends on it) and the
//! video features encode `class / 2` (a step over one quarter of the
//! dimensions) plus a weak, noisy hint of `class mod 2`. Neither modality
//! alone separates all 8 classes; together they do.
//!
//! [`write_raw_video`] writes the raw inputs the command-line pipeline
//! consumes (WAV, OpenFace-style CSV, annotation file) for one video.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::AUDIO_FEATURE_DIM;
use crate::rng::stream_rng;
use crate::sequencing::{cut_windows, Dataset, FrameFeatures, WindowSpec, NUM_CLASSES};
use crate::video::full_row_selection;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub windows: usize,
    pub video_dim: usize,
    /// Per-value Gaussian noise on every feature.
    pub noise: f64,
    /// Amplitude of the `class mod 2` hint in the video features.
    pub video_hint: f64,
    /// Standard deviation of the per-window noise on that hint.
    pub hint_noise: f64,
    pub seed: u64,
    pub window: WindowSpec,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            windows: 200,
            video_dim: 714,
            noise: 0.3,
            video_hint: 0.5,
            hint_noise: 1.0,
            seed: 0,
            window: WindowSpec::default(),
        }
    }
}

/// Audio frame for class `c` at timestep `t`.
fn audio_frame<R: Rng>(c: usize, t: usize, noise: &Normal<f64>, rng: &mut R) -> Vec<f32> {
    let freq = (c % 4 + 1) as f64;
    (0..AUDIO_FEATURE_DIM)
        .map(|k| {
            let phase = 2.0 * PI * freq * k as f64 / AUDIO_FEATURE_DIM as f64 + 0.2 * t as f64;
            (phase.sin() + noise.sample(rng)) as f32
        })
        .collect()
}

/// Video frame: ones over quarter `c / 2`, the hint on the last dimension.
fn video_frame<R: Rng>(c: usize, dim: usize, hint: f64, noise: &Normal<f64>, rng: &mut R) -> Vec<f32> {
    let quarter = c / 2;
    let mut v: Vec<f32> = (0..dim)
        .map(|k| {
            let on = (k * 4 / dim) == quarter;
            (if on { 1.0 } else { 0.0 } + noise.sample(rng)) as f32
        })
        .collect();
    if let Some(last) = v.last_mut() {
        *last = hint as f32;
    }
    v
}

/// `spec.windows` single-window videos, class `i mod 8` for window `i`,
/// constant over the window.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.video_dim < 4 || spec.windows == 0 {
        return Err(Error::Domain("synthetic data needs ≥ 4 video dims and ≥ 1 window".into()));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Domain(e.to_string()))?;
    let hint_noise = Normal::new(0.0, spec.hint_noise).map_err(|e| Error::Domain(e.to_string()))?;
    let len = spec.window.length;
    let mut ds = Dataset::new(spec.window, AUDIO_FEATURE_DIM, spec.video_dim);
    for i in 0..spec.windows {
        let c = i % NUM_CLASSES;
        let sign = if c % 2 == 1 { 1.0 } else { -1.0 };
        let hint = sign * spec.video_hint + hint_noise.sample(&mut rng);
        let frames: Vec<FrameFeatures> = (0..len)
            .map(|t| FrameFeatures {
                frame_index: t,
                audio: audio_frame(c, t, &noise, &mut rng),
                video: video_frame(c, spec.video_dim, hint, &noise, &mut rng),
                label: c as u8,
            })
            .collect();
        let id = format!("syn{i:05}");
        ds.push_video(&id, len, cut_windows(&id, &frames, spec.window)?)?;
    }
    ds.provenance = serde_json::json!({ "synthetic": { "seed": spec.seed, "windows": spec.windows } });
    Ok(ds)
}

/// Paths of one generated video's raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub id: String,
    pub wav: PathBuf,
    pub csv: PathBuf,
    pub annotations: PathBuf,
    /// Raw annotation values (−1 for unannotated).
    pub labels: Vec<i8>,
}

/// Writes `<dir>/<id>.wav`, `<dir>/<id>.csv` and `<dir>/<id>.txt` for a
/// video of `n_frames` frames at `fps`. Labels change every 12 frames and
/// every 9th frame is unannotated; the tone and the facial features follow
/// the label.
pub fn write_raw_video(dir: &Path, id: &str, n_frames: usize, fps: f64, sample_rate: u32, seed: u64) -> Result<RawVideo> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = stream_rng(seed, 1);
    let first: usize = rng.random_range(0..7);
    let labels: Vec<i8> = (0..n_frames)
        .map(|i| if i % 9 == 8 { -1 } else { ((first + i / 12) % 7) as i8 })
        .collect();

    let wav = dir.join(format!("{id}.wav"));
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&wav, spec).map_err(|e| Error::Format(format!("{}: {e}", wav.display())))?;
    let n_samples = (n_frames as f64 / fps * sample_rate as f64).round() as usize;
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    for s in 0..n_samples {
        let frame = ((s as f64 / sample_rate as f64) * fps) as usize;
        let label = labels[frame.min(n_frames - 1)].max(0) as f64;
        let f = 220.0 * (1.0 + label * 0.5);
        let x = 0.4 * (2.0 * PI * f * s as f64 / sample_rate as f64).sin() + noise.sample(&mut rng);
        w.write_sample((x.clamp(-1.0, 1.0) * 32767.0) as i16)
            .map_err(|e| Error::Format(format!("{}: {e}", wav.display())))?;
    }
    w.finalize().map_err(|e| Error::Format(format!("{}: {e}", wav.display())))?;

    let csv = dir.join(format!("{id}.csv"));
    let cols = full_row_selection();
    let mut text = cols.columns().join(", ");
    text.push('\n');
    let feature_cols = cols.expected_dim() - 5;
    for (i, &l) in labels.iter().enumerate() {
        let success = i % 17 != 16;
        let _ = write!(
            text,
            "{}, 0, {:.3}, {}, {}",
            i + 1,
            i as f64 / fps,
            if success { "0.98" } else { "0" },
            u8::from(success)
        );
        for k in 0..feature_cols {
            let v = if success {
                let on = l >= 0 && k % 7 == l as usize;
                f64::from(u8::from(on)) + 0.1 * rng.random::<f64>()
            } else {
                0.0
            };
            let _ = write!(text, ", {v:.4}");
        }
        text.push('\n');
    }
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;

    let annotations = dir.join(format!("{id}.txt"));
    let mut ann = String::from("Neutral,Anger,Disgust,Fear,Happiness,Sadness,Surprise\n");
    for l in &labels {
        let _ = writeln!(ann, "{l}");
    }
    std::fs::write(&annotations, ann).map_err(|e| Error::io(&annotations, e))?;

    Ok(RawVideo {
        id: id.to_string(),
        wav,
        csv,
        annotations,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencing::AnnotationTrack;
    use crate::video::parse_openface_csv;

    #[test]
    fn dataset_shape_and_balance() {
        let spec = SyntheticSpec {
            windows: 24,
            video_dim: 20,
            ..Default::default()
        };
        let ds = synthetic_dataset(&spec).unwrap();
        assert_eq!(ds.len(), 24);
        assert_eq!(ds.videos.len(), 24);
        for (i, w) in ds.windows.iter().enumerate() {
            assert!(w.labels.iter().all(|&l| l as usize == i % 8));
            assert_eq!(w.audio.len(), 15 * 168);
            assert_eq!(w.video.len(), 15 * 20);
        }
        assert_eq!(synthetic_dataset(&spec).unwrap(), ds);
    }

    #[test]
    fn raw_files_parse() {
        let dir = tempfile::tempdir().unwrap();
        let v = write_raw_video(dir.path(), "clip", 40, 30.0, 16_000, 3).unwrap();
        let track = AnnotationTrack::read(&v.annotations).unwrap();
        assert_eq!(track.labels, v.labels);
        assert_eq!(track.video_id, "clip");
        let frames = parse_openface_csv(&v.csv, &full_row_selection()).unwrap();
        assert_eq!(frames.len(), 40);
        assert_eq!(frames[0].features.len(), 714);
        assert!(!frames[16].valid);
        let reader = hound::WavReader::open(&v.wav).unwrap();
        assert_eq!(reader.duration(), 21_333);
    }
}
