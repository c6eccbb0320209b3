use serde::{Deserialize, Serialize};

use super::labels::{remap_label, AnnotationTrack};
use crate::error::{Error, Result};

/// Per-frame fused record of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frame_index: usize,
    pub audio: Vec<f32>,
    pub video: Vec<f32>,
    /// Remapped label in `0..=7`.
    pub label: u8,
}

/// Zips annotations, audio chunks and video frames. All three counts must
/// agree; nothing is truncated or padded to force a match.
pub fn align_modalities(
    track: &AnnotationTrack,
    audio: &[Vec<f32>],
    video: &[Vec<f32>],
) -> Result<Vec<FrameFeatures>> {
    if track.len() != audio.len() || track.len() != video.len() {
        return Err(Error::Alignment {
            video_id: track.video_id.clone(),
            labels: track.len(),
            audio: audio.len(),
            video: video.len(),
        });
    }
    track
        .labels
        .iter()
        .zip(audio.iter().zip(video))
        .enumerate()
        .map(|(frame_index, (&raw, (a, v)))| {
            Ok(FrameFeatures {
                frame_index,
                audio: a.clone(),
                video: v.clone(),
                label: remap_label(raw)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    /// 15 frames, 5 shared between neighbours.
    fn default() -> Self {
        Self {
            length: 15,
            stride: 10,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.stride == 0 {
            return Err(Error::Domain("window length and stride must be positive".into()));
        }
        if self.stride > self.length {
            return Err(Error::Domain(format!(
                "stride {} exceeds window length {}; frames between windows would go unpredicted",
                self.stride, self.length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowStart {
    pub start: usize,
    pub pad_count: usize,
}

/// Start offsets on the stride grid, plus an end-anchored tail window when
/// the grid leaves trailing frames uncovered. Videos shorter than one window
/// get a single padded window.
pub fn window_starts(n_frames: usize, spec: WindowSpec) -> Result<Vec<WindowStart>> {
    spec.validate()?;
    if n_frames == 0 {
        return Err(Error::Domain("cannot window a video with 0 frames".into()));
    }
    let len = spec.length;
    if n_frames < len {
        return Ok(vec![WindowStart {
            start: 0,
            pad_count: len - n_frames,
        }]);
    }
    let mut starts: Vec<WindowStart> = (0..)
        .map(|k| k * spec.stride)
        .take_while(|s| s + len <= n_frames)
        .map(|start| WindowStart { start, pad_count: 0 })
        .collect();
    let covered = starts.last().map_or(0, |w| w.start + len);
    if covered < n_frames {
        starts.push(WindowStart {
            start: n_frames - len,
            pad_count: 0,
        });
    }
    Ok(starts)
}

/// A fixed-length slice of one video's aligned frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub video_id: String,
    pub start_frame: usize,
    pub pad_count: usize,
    pub length: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    /// Row-major `[length × audio_dim]`.
    pub audio: Vec<f32>,
    /// Row-major `[length × video_dim]`.
    pub video: Vec<f32>,
    pub labels: Vec<u8>,
}

impl SequenceWindow {
    pub fn audio_row(&self, t: usize) -> &[f32] {
        &self.audio[t * self.audio_dim..(t + 1) * self.audio_dim]
    }

    pub fn video_row(&self, t: usize) -> &[f32] {
        &self.video[t * self.video_dim..(t + 1) * self.video_dim]
    }

    /// Number of real (non-padded) timesteps.
    pub fn real_len(&self) -> usize {
        self.length - self.pad_count
    }
}

pub fn cut_windows(
    video_id: &str,
    frames: &[FrameFeatures],
    spec: WindowSpec,
) -> Result<Vec<SequenceWindow>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Domain(format!("video '{video_id}' has no frames")))?;
    let (audio_dim, video_dim) = (first.audio.len(), first.video.len());
    if let Some(f) = frames
        .iter()
        .find(|f| f.audio.len() != audio_dim || f.video.len() != video_dim)
    {
        return Err(Error::Shape(format!(
            "video '{video_id}' frame {} has dims ({}, {}), expected ({audio_dim}, {video_dim})",
            f.frame_index,
            f.audio.len(),
            f.video.len()
        )));
    }
    let starts = window_starts(frames.len(), spec)?;
    Ok(starts
        .into_iter()
        .map(|ws| {
            let mut w = SequenceWindow {
                video_id: video_id.to_string(),
                start_frame: ws.start,
                pad_count: ws.pad_count,
                length: spec.length,
                audio_dim,
                video_dim,
                audio: Vec::with_capacity(spec.length * audio_dim),
                video: Vec::with_capacity(spec.length * video_dim),
                labels: Vec::with_capacity(spec.length),
            };
            for t in 0..spec.length {
                let f = &frames[(ws.start + t).min(frames.len() - 1)];
                w.audio.extend_from_slice(&f.audio);
                w.video.extend_from_slice(&f.video);
                w.labels.push(f.label);
            }
            w
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn starts(n: usize) -> Vec<usize> {
        window_starts(n, WindowSpec::default())
            .unwrap()
            .iter()
            .map(|w| w.start)
            .collect()
    }

    fn frames(n: usize) -> Vec<FrameFeatures> {
        (0..n)
            .map(|i| FrameFeatures {
                frame_index: i,
                audio: vec![i as f32; 3],
                video: vec![-(i as f32); 2],
                label: (i % 8) as u8,
            })
            .collect()
    }

    #[test]
    fn start_examples() {
        assert_eq!(starts(15), vec![0]);
        assert_eq!(starts(25), vec![0, 10]);
        assert_eq!(starts(27), vec![0, 10, 12]);
        let w = window_starts(7, WindowSpec::default()).unwrap();
        assert_eq!(w, vec![WindowStart { start: 0, pad_count: 8 }]);
        assert_eq!(window_starts(0, WindowSpec::default()).unwrap_err().category(), "domain");
    }

    #[test]
    fn alignment_requires_parity() {
        let track = AnnotationTrack::new("v1", vec![0, -1, 3]).unwrap();
        let a = vec![vec![0.0f32; 2]; 3];
        let v = vec![vec![1.0f32; 4]; 3];
        let out = align_modalities(&track, &a, &v).unwrap();
        assert_eq!(out.iter().map(|f| f.label).collect::<Vec<_>>(), vec![0, 7, 3]);

        let err = align_modalities(&track, &a[..2], &v).unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.category(), "alignment");
        assert!(msg.contains("v1") && msg.contains("annotations=3") && msg.contains("audio=2"));
    }

    #[test]
    fn single_window_is_verbatim() {
        let f = frames(15);
        let w = cut_windows("v", &f, WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 1);
        for (t, frame) in f.iter().enumerate() {
            assert_eq!(w[0].audio_row(t), &frame.audio[..]);
            assert_eq!(w[0].video_row(t), &frame.video[..]);
            assert_eq!(w[0].labels[t], frame.label);
        }
    }

    #[test]
    fn consecutive_windows_share_five_rows() {
        let w = cut_windows("v", &frames(25), WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 2);
        for k in 0..5 {
            assert_eq!(w[0].audio_row(10 + k), w[1].audio_row(k));
        }
    }

    #[test]
    fn short_video_replicates_last_frame() {
        let f = frames(7);
        let w = &cut_windows("v", &f, WindowSpec::default()).unwrap()[0];
        assert_eq!(w.pad_count, 8);
        assert_eq!(w.real_len(), 7);
        for t in 7..15 {
            assert_eq!(w.audio_row(t), &f[6].audio[..]);
            assert_eq!(w.labels[t], f[6].label);
        }
    }
}
