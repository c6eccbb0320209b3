use serde::{Deserialize, Serialize};

use super::chunk::ChunkBoundary;
use super::dsp::FeatureExtractor;
use super::wav::AudioSignal;
use crate::error::{Error, Result};

/// Features of one audio split: `fused = mfcc ⧺ melspec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioChunkFeatures {
    pub chunk_index: usize,
    pub mfcc: Vec<f64>,
    pub melspec: Vec<f64>,
    pub fused: Vec<f64>,
}

/// Converts a time interval to a sample range, at least one sample long.
pub fn sample_range(
    boundary: &ChunkBoundary,
    sample_rate: u32,
    n_samples: usize,
) -> Result<std::ops::Range<usize>> {
    let duration = n_samples as f64 / sample_rate as f64;
    let tol = 1e-9 * duration.max(1.0);
    if !(boundary.start_s >= -tol
        && boundary.end_s <= duration + tol
        && boundary.start_s <= boundary.end_s)
    {
        return Err(Error::Range(format!(
            "chunk [{}, {}) s lies outside signal of {duration} s",
            boundary.start_s, boundary.end_s
        )));
    }
    let sr = sample_rate as f64;
    let start = ((boundary.start_s * sr).round().max(0.0) as usize).min(n_samples);
    let mut end = ((boundary.end_s * sr).round() as usize).min(n_samples);
    if end <= start {
        if start >= n_samples {
            return Err(Error::Range(format!(
                "chunk starting at {} s holds no samples",
                boundary.start_s
            )));
        }
        end = start + 1;
    }
    Ok(start..end)
}

/// Computes MFCC and log-mel features for each chunk of `signal`.
pub fn extract_chunk_features(
    signal: &AudioSignal,
    boundaries: &[ChunkBoundary],
    extractor: &FeatureExtractor,
) -> Result<Vec<AudioChunkFeatures>> {
    if signal.sample_rate() != extractor.sample_rate() {
        return Err(Error::Domain(format!(
            "extractor built for {} Hz, signal is {} Hz",
            extractor.sample_rate(),
            signal.sample_rate()
        )));
    }
    boundaries
        .iter()
        .enumerate()
        .map(|(chunk_index, b)| {
            let range = sample_range(b, signal.sample_rate(), signal.len())?;
            let slice = &signal.samples()[range];
            let melspec = extractor.mel_spectrogram(slice)?;
            let mfcc = extractor.mfcc_from_log_mel(&melspec);
            let fused = mfcc.iter().chain(&melspec).copied().collect();
            Ok(AudioChunkFeatures {
                chunk_index,
                mfcc,
                melspec,
                fused,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{chunk_boundaries, DspConfig};

    fn signal() -> AudioSignal {
        let samples = (0..16000)
            .map(|i| (i as f64 * 0.05).sin() * 0.3 + (i as f64 * 0.31).cos() * 0.1)
            .collect();
        AudioSignal::new(samples, 16000).unwrap()
    }

    #[test]
    fn one_fused_record_per_chunk() {
        let sig = signal();
        let ex = FeatureExtractor::new(DspConfig::default(), 16000).unwrap();
        let bounds = chunk_boundaries(sig.duration_s(), 3).unwrap();
        let feats = extract_chunk_features(&sig, &bounds, &ex).unwrap();
        assert_eq!(feats.len(), 3);
        for (i, f) in feats.iter().enumerate() {
            assert_eq!(f.chunk_index, i);
            assert_eq!(f.fused.len(), 168);
            assert_eq!(&f.fused[..40], &f.mfcc[..]);
            assert_eq!(&f.fused[40..], &f.melspec[..]);
            assert!(f.fused.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn identical_chunks_give_identical_features() {
        let period: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.2).sin()).collect();
        let samples = [period.clone(), period].concat();
        let sig = AudioSignal::new(samples, 16000).unwrap();
        let ex = FeatureExtractor::new(DspConfig::default(), 16000).unwrap();
        let bounds = [
            ChunkBoundary { start_s: 0.0, end_s: 0.25 },
            ChunkBoundary { start_s: 0.25, end_s: 0.5 },
        ];
        let f = extract_chunk_features(&sig, &bounds, &ex).unwrap();
        assert_eq!(f[0].fused, f[1].fused);
    }

    #[test]
    fn fused_equals_independent_computation() {
        let sig = signal();
        let ex = FeatureExtractor::new(DspConfig::default(), 16000).unwrap();
        let b = ChunkBoundary { start_s: 0.1, end_s: 0.4 };
        let f = &extract_chunk_features(&sig, &[b], &ex).unwrap()[0];
        let slice = &sig.samples()[1600..6400];
        assert_eq!(f.mfcc, ex.mfcc(slice).unwrap());
        assert_eq!(f.melspec, ex.mel_spectrogram(slice).unwrap());
    }

    #[test]
    fn out_of_range_boundary() {
        let sig = signal();
        let ex = FeatureExtractor::new(DspConfig::default(), 16000).unwrap();
        let b = ChunkBoundary { start_s: 0.5, end_s: 1.5 };
        let err = extract_chunk_features(&sig, &[b], &ex).unwrap_err();
        assert_eq!(err.category(), "range");
    }
}
