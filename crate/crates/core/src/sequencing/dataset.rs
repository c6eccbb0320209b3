//! Windowed dataset container.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json   dims, window spec, per-video index, columns, provenance, checksum
//! audio.f32       [n_windows × length × audio_dim]  float32 LE
//! video.f32       [n_windows × length × video_dim]  float32 LE
//! labels.u8       [n_windows × length]              remapped labels
//! index.u32       [n_windows × 3]                   (video ordinal, start frame, pad count) LE
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::windows::{cut_windows, FrameFeatures, SequenceWindow, WindowSpec};
use crate::container::{
    bytes_to_f32, bytes_to_u32, checksum, create_dir, f32_to_bytes, read_file, read_json,
    u32_to_bytes, write_file, write_json, MANIFEST_FILE,
};
use crate::error::{Error, Result};

const FORMAT: &str = "exprfuse-dataset";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub n_frames: usize,
    pub first_window: usize,
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: WindowSpec,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub videos: Vec<VideoEntry>,
    pub windows: Vec<SequenceWindow>,
    /// Video feature column names, in feature order.
    pub columns: Vec<String>,
    /// Audio extraction settings (DSP config, sample rates) echoed from inputs.
    pub provenance: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    window: WindowSpec,
    audio_dim: usize,
    video_dim: usize,
    n_windows: usize,
    videos: Vec<VideoEntry>,
    columns: Vec<String>,
    provenance: serde_json::Value,
    checksum: String,
}

const BLOBS: [&str; 4] = ["audio.f32", "video.f32", "labels.u8", "index.u32"];

impl Dataset {
    pub fn new(spec: WindowSpec, audio_dim: usize, video_dim: usize) -> Self {
        Self {
            spec,
            audio_dim,
            video_dim,
            videos: Vec::new(),
            windows: Vec::new(),
            columns: Vec::new(),
            provenance: serde_json::Value::Null,
        }
    }

    /// Appends all windows of one video. Windows must come from
    /// [`cut_windows`](super::cut_windows) over exactly `n_frames` frames.
    pub fn push_video(
        &mut self,
        id: &str,
        n_frames: usize,
        windows: Vec<SequenceWindow>,
    ) -> Result<()> {
        if self.videos.iter().any(|v| v.id == id) {
            return Err(Error::Schema(format!("video '{id}' added twice")));
        }
        for w in &windows {
            if w.audio_dim != self.audio_dim
                || w.video_dim != self.video_dim
                || w.length != self.spec.length
            {
                return Err(Error::Shape(format!(
                    "window of '{id}' is {}×({}, {}), dataset expects {}×({}, {})",
                    w.length, w.audio_dim, w.video_dim, self.spec.length, self.audio_dim, self.video_dim
                )));
            }
        }
        self.videos.push(VideoEntry {
            id: id.to_string(),
            n_frames,
            first_window: self.windows.len(),
            n_windows: windows.len(),
        });
        self.windows.extend(windows);
        Ok(())
    }

    pub fn video_windows(&self, entry: &VideoEntry) -> &[SequenceWindow] {
        &self.windows[entry.first_window..entry.first_window + entry.n_windows]
    }

    /// Rebuilds a video's aligned frames from the real (non-padded)
    /// positions of its windows.
    pub fn video_frames(&self, entry: &VideoEntry) -> Result<Vec<FrameFeatures>> {
        let mut frames: Vec<Option<FrameFeatures>> = vec![None; entry.n_frames];
        for w in self.video_windows(entry) {
            for t in 0..w.real_len() {
                let slot = frames.get_mut(w.start_frame + t).ok_or_else(|| {
                    Error::Coverage(format!(
                        "window at {} of '{}' runs past {} frames",
                        w.start_frame, entry.id, entry.n_frames
                    ))
                })?;
                slot.get_or_insert_with(|| FrameFeatures {
                    frame_index: w.start_frame + t,
                    audio: w.audio_row(t).to_vec(),
                    video: w.video_row(t).to_vec(),
                    label: w.labels[t],
                });
            }
        }
        frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.ok_or_else(|| Error::Coverage(format!("frame {i} of '{}' is in no window", entry.id)))
            })
            .collect()
    }

    /// Per-frame ground truth of one video.
    pub fn frame_labels(&self, entry: &VideoEntry) -> Result<Vec<u8>> {
        Ok(self.video_frames(entry)?.into_iter().map(|f| f.label).collect())
    }

    /// Same frames cut with a different window spec.
    pub fn rewindow(&self, spec: WindowSpec) -> Result<Dataset> {
        let mut out = Dataset::new(spec, self.audio_dim, self.video_dim);
        out.columns = self.columns.clone();
        out.provenance = self.provenance.clone();
        for entry in &self.videos {
            let frames = self.video_frames(entry)?;
            out.push_video(&entry.id, entry.n_frames, cut_windows(&entry.id, &frames, spec)?)?;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    fn encode(&self) -> [Vec<u8>; 4] {
        let audio: Vec<f32> = self.windows.iter().flat_map(|w| w.audio.iter().copied()).collect();
        let video: Vec<f32> = self.windows.iter().flat_map(|w| w.video.iter().copied()).collect();
        let labels: Vec<u8> = self.windows.iter().flat_map(|w| w.labels.iter().copied()).collect();
        let mut index = Vec::with_capacity(self.windows.len() * 3);
        for (ordinal, v) in self.videos.iter().enumerate() {
            for w in self.video_windows(v) {
                index.extend([ordinal as u32, w.start_frame as u32, w.pad_count as u32]);
            }
        }
        [f32_to_bytes(&audio), f32_to_bytes(&video), labels, u32_to_bytes(&index)]
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let blobs = self.encode();
        for (name, bytes) in BLOBS.iter().zip(&blobs) {
            write_file(&dir.join(name), bytes)?;
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: 1,
            window: self.spec,
            audio_dim: self.audio_dim,
            video_dim: self.video_dim,
            n_windows: self.windows.len(),
            videos: self.videos.clone(),
            columns: self.columns.clone(),
            provenance: self.provenance.clone(),
            checksum: checksum(BLOBS.iter().copied().zip(blobs.iter().map(Vec::as_slice))),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if m.format != FORMAT {
            return Err(Error::Format(format!(
                "{}: not a dataset container (format '{}')",
                dir.display(),
                m.format
            )));
        }
        m.window.validate()?;
        let blobs: Vec<Vec<u8>> = BLOBS
            .iter()
            .map(|name| read_file(&dir.join(name)))
            .collect::<Result<_>>()?;
        let sum = checksum(BLOBS.iter().copied().zip(blobs.iter().map(Vec::as_slice)));
        if sum != m.checksum {
            return Err(Error::Corruption(format!(
                "{}: blob checksum mismatch",
                dir.display()
            )));
        }

        let len = m.window.length;
        let n = m.n_windows;
        let audio = bytes_to_f32(&blobs[0], "audio.f32")?;
        let video = bytes_to_f32(&blobs[1], "video.f32")?;
        let labels = &blobs[2];
        let index = bytes_to_u32(&blobs[3], "index.u32")?;
        let expect = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::Schema(format!(
                    "{}: {what} holds {got} values, manifest dims imply {want}",
                    dir.display()
                )));
            }
            Ok(())
        };
        expect("audio.f32", audio.len(), n * len * m.audio_dim)?;
        expect("video.f32", video.len(), n * len * m.video_dim)?;
        expect("labels.u8", labels.len(), n * len)?;
        expect("index.u32", index.len(), n * 3)?;
        if m.videos.iter().map(|v| v.n_windows).sum::<usize>() != n {
            return Err(Error::Schema("video index does not account for every window".into()));
        }
        if labels.iter().any(|&l| l > 7) {
            return Err(Error::Corruption("label outside 0..=7".into()));
        }

        let mut windows = Vec::with_capacity(n);
        for i in 0..n {
            let ordinal = index[3 * i] as usize;
            let entry = m.videos.get(ordinal).ok_or_else(|| {
                Error::Corruption(format!("window {i} references unknown video {ordinal}"))
            })?;
            if !(entry.first_window..entry.first_window + entry.n_windows).contains(&i) {
                return Err(Error::Corruption(format!(
                    "window {i} lies outside the range of video '{}'",
                    entry.id
                )));
            }
            let (a, v) = (len * m.audio_dim, len * m.video_dim);
            windows.push(SequenceWindow {
                video_id: entry.id.clone(),
                start_frame: index[3 * i + 1] as usize,
                pad_count: index[3 * i + 2] as usize,
                length: len,
                audio_dim: m.audio_dim,
                video_dim: m.video_dim,
                audio: audio[i * a..(i + 1) * a].to_vec(),
                video: video[i * v..(i + 1) * v].to_vec(),
                labels: labels[i * len..(i + 1) * len].to_vec(),
            });
        }
        Ok(Self {
            spec: m.window,
            audio_dim: m.audio_dim,
            video_dim: m.video_dim,
            videos: m.videos,
            windows,
            columns: m.columns,
            provenance: m.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let mut ds = Dataset::new(WindowSpec::default(), 4, 3);
        ds.columns = vec!["a".into(), "b".into(), "c".into()];
        ds.provenance = serde_json::json!({"dsp": {"n_fft": 2048}});
        for (id, n) in [("v1", 27usize), ("v2", 7)] {
            let frames: Vec<FrameFeatures> = (0..n)
                .map(|i| FrameFeatures {
                    frame_index: i,
                    audio: (0..4).map(|k| (i * 4 + k) as f32 * 0.1 + 1e-7).collect(),
                    video: (0..3).map(|k| -((i * 3 + k) as f32) / 3.0).collect(),
                    label: (i % 8) as u8,
                })
                .collect();
            let w = cut_windows(id, &frames, ds.spec).unwrap();
            ds.push_video(id, n, w).unwrap();
        }
        ds
    }

    #[test]
    fn frames_rebuild_and_rewindow() {
        let ds = sample();
        let v1 = &ds.videos[0];
        let frames = ds.video_frames(v1).unwrap();
        assert_eq!(frames.len(), 27);
        assert!(frames.iter().enumerate().all(|(i, f)| f.frame_index == i && f.label == (i % 8) as u8));
        let again = ds.rewindow(ds.spec).unwrap();
        assert_eq!(again, ds);
        let wide = ds.rewindow(WindowSpec { length: 15, stride: 5 }).unwrap();
        assert_eq!(wide.video_windows(&wide.videos[0]).len(), 4);
        assert_eq!(wide.video_frames(&wide.videos[1]).unwrap(), ds.video_frames(&ds.videos[1]).unwrap());
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        assert_eq!(ds.len(), 4);
        ds.write(dir.path()).unwrap();
        assert_eq!(Dataset::read(dir.path()).unwrap(), ds);
    }

    #[test]
    fn truncated_blob_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        let p = dir.path().join("video.f32");
        let mut b = std::fs::read(&p).unwrap();
        b.truncate(b.len() / 2);
        std::fs::write(&p, b).unwrap();
        assert_eq!(Dataset::read(dir.path()).unwrap_err().category(), "corruption");
    }

    #[test]
    fn dim_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"video_dim\": 3", "\"video_dim\": 4")).unwrap();
        assert_eq!(Dataset::read(dir.path()).unwrap_err().category(), "schema");
    }

    #[test]
    fn duplicate_video_rejected() {
        let mut ds = sample();
        let w = ds.video_windows(&ds.videos[1].clone()).to_vec();
        assert!(ds.push_video("v2", 7, w).is_err());
    }
}
