use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequencing::{Dataset, SequenceWindow};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension `(x − μ) / σ` with `σ ≥ 1e-8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    /// Fits on `rows`, each of length `dim`. A constant dimension gets its
    /// value as the mean, so it maps to exactly 0.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Result<Self> {
        let mut n = 0usize;
        // running mean and sum of squared deviations (Welford)
        let mut mu = vec![0.0f64; dim];
        let mut m2 = vec![0.0f64; dim];
        let mut lo = vec![f32::INFINITY; dim];
        let mut hi = vec![f32::NEG_INFINITY; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape(format!("row of width {} for {dim}-dim stats", row.len())));
            }
            n += 1;
            for (k, &v) in row.iter().enumerate() {
                let d = v as f64 - mu[k];
                mu[k] += d / n as f64;
                m2[k] += d * (v as f64 - mu[k]);
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        if n == 0 {
            return Err(Error::Domain("cannot fit feature statistics on zero rows".into()));
        }
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for k in 0..dim {
            if lo[k] == hi[k] {
                mean.push(lo[k]);
                std.push(STD_FLOOR as f32);
                continue;
            }
            let var = m2[k] / n as f64;
            mean.push(mu[k] as f32);
            std.push(var.sqrt().max(STD_FLOOR) as f32);
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &mut [f32]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = ((*v as f64 - m as f64) / s as f64) as f32;
        }
    }

    pub fn invert_row(&self, row: &mut [f32]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v as f64 * s as f64 + m as f64) as f32;
        }
    }
}

/// Statistics for both modalities, fit on the real timesteps of a
/// training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub audio: Standardizer,
    pub video: Standardizer,
}

fn real_rows(
    windows: &[SequenceWindow],
    pick: fn(&SequenceWindow, usize) -> &[f32],
) -> impl Iterator<Item = &[f32]> {
    windows
        .iter()
        .flat_map(move |w| (0..w.real_len()).map(move |t| pick(w, t)))
}

impl FeatureStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        Ok(Self {
            audio: Standardizer::fit(real_rows(&train.windows, SequenceWindow::audio_row), train.audio_dim)?,
            video: Standardizer::fit(real_rows(&train.windows, SequenceWindow::video_row), train.video_dim)?,
        })
    }

    /// Standardized copy of `ds` (padded timesteps included).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.audio_dim != self.audio.dim() || ds.video_dim != self.video.dim() {
            return Err(Error::Shape(format!(
                "dataset dims ({}, {}) vs statistics ({}, {})",
                ds.audio_dim,
                ds.video_dim,
                self.audio.dim(),
                self.video.dim()
            )));
        }
        let mut out = ds.clone();
        for w in &mut out.windows {
            if w.audio_dim > 0 {
                w.audio.chunks_exact_mut(w.audio_dim).for_each(|r| self.audio.apply_row(r));
            }
            if w.video_dim > 0 {
                w.video.chunks_exact_mut(w.video_dim).for_each(|r| self.video.apply_row(r));
            }
        }
        Ok(out)
    }
}
