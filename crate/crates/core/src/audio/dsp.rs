//! Short-time power spectra, mel projection and cepstral coefficients.
//!
//! One chunk of audio produces exactly one mel vector: the STFT power of every
//! frame in the chunk is projected onto the mel bands, averaged over frames and
//! then log-compressed. MFCCs are the orthonormal DCT-II of that log-mel vector.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// Upper band edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop_length: 512,
            n_mels: 128,
            n_mfcc: 40,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    /// Width of the fused per-chunk vector (`n_mfcc + n_mels`).
    pub fn fused_dim(&self) -> usize {
        self.n_mfcc + self.n_mels
    }

    pub fn resolved_fmax(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let fmax = self.resolved_fmax(sample_rate);
        let checks: [(bool, &str); 8] = [
            (sample_rate > 0, "sample_rate must be positive"),
            (self.n_fft >= 2, "n_fft must be at least 2"),
            (self.hop_length > 0, "hop_length must be positive"),
            (self.n_mels > 0, "n_mels must be positive"),
            (self.n_mfcc > 0 && self.n_mfcc <= self.n_mels, "need 0 < n_mfcc <= n_mels"),
            (self.fmin >= 0.0 && self.fmin < fmax, "need 0 <= fmin < fmax"),
            (fmax <= nyquist * (1.0 + 1e-12), "fmax must not exceed Nyquist"),
            (self.log_floor > 0.0 && self.log_floor.is_finite(), "log_floor must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Domain(msg.into()));
            }
        }
        Ok(())
    }
}

/// Slaney-style mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular mel filters with area (Slaney) normalization, row-major
/// `[n_mels × (n_fft/2 + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
            .collect();
        let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (right - left);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (w, &f) in row.iter_mut().zip(&bin_hz) {
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                *w = rising.min(falling).max(0.0) * enorm;
            }
            // Bands narrower than the bin spacing fall between bins; pin them
            // to the bin nearest the band center so no band is silent.
            if row.iter().all(|&w| w == 0.0) {
                let nearest = (center * n_fft as f64 / sample_rate as f64).round() as usize;
                row[nearest.min(n_bins - 1)] = enorm;
            }
        }
        Self {
            n_mels,
            n_bins,
            weights,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.n_bins..(band + 1) * self.n_bins]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Maps an index of the centered, reflect-padded signal back into `0..len`.
/// Folds repeatedly so slices shorter than the padding still resolve.
pub fn reflect_index(idx: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut i = idx.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}

/// Number of STFT frames for a centered analysis of `len` samples.
pub fn n_frames(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Orthonormal DCT-II, computed through a length-`2N` FFT of the even
/// extension.
pub struct Dct {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        Self { n, fft }
    }

    pub fn transform(&self, input: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(input.len(), n, "DCT length mismatch");
        let mut buf: Vec<Complex<f64>> = input
            .iter()
            .chain(input.iter().rev())
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let scale0 = (1.0 / n as f64).sqrt();
        let scale = (2.0 / n as f64).sqrt();
        buf.iter()
            .take(n)
            .enumerate()
            .map(|(k, y)| {
                let twiddle = Complex::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64));
                let raw = (y * twiddle).re / 2.0;
                raw * if k == 0 { scale0 } else { scale }
            })
            .collect()
    }
}

pub fn dct_ortho(input: &[f64]) -> Vec<f64> {
    Dct::new(input.len()).transform(input)
}

/// Reusable per-sample-rate feature extractor. Holds the filterbank, window
/// and FFT plans; safe to share across threads.
pub struct FeatureExtractor {
    cfg: DspConfig,
    sample_rate: u32,
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    dct: Dct,
}

impl FeatureExtractor {
    pub fn new(cfg: DspConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let filterbank = MelFilterbank::new(
            sample_rate,
            cfg.n_fft,
            cfg.n_mels,
            cfg.fmin,
            cfg.resolved_fmax(sample_rate),
        );
        let window = hann_window(cfg.n_fft);
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        let dct = Dct::new(cfg.n_mels);
        Ok(Self {
            cfg,
            sample_rate,
            filterbank,
            window,
            fft,
            dct,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Mean mel-band power over all STFT frames of `samples` (before log).
    pub fn mel_power(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::Range("audio slice is empty".into()));
        }
        let n_fft = self.cfg.n_fft;
        let pad = (n_fft / 2) as isize;
        let frames = n_frames(samples.len(), self.cfg.hop_length);

        let mut acc = vec![0.0; self.cfg.n_mels];
        let mut band = vec![0.0; self.cfg.n_mels];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut power = vec![0.0; self.filterbank.n_bins()];
        for f in 0..frames {
            let origin = (f * self.cfg.hop_length) as isize - pad;
            for (j, slot) in buf.iter_mut().enumerate() {
                let s = samples[reflect_index(origin + j as isize, samples.len())];
                *slot = Complex::new(s * self.window[j], 0.0);
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.filterbank.apply(&power, &mut band);
            for (a, b) in acc.iter_mut().zip(&band) {
                *a += b;
            }
        }
        let inv = 1.0 / frames as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(acc)
    }

    /// Log10 mel spectrum of one chunk, floored at `log_floor`.
    pub fn mel_spectrogram(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let floor = self.cfg.log_floor;
        Ok(self
            .mel_power(samples)?
            .into_iter()
            .map(|p| p.max(floor).log10())
            .collect())
    }

    /// First `n_mfcc` orthonormal DCT-II coefficients of a log-mel vector.
    pub fn mfcc_from_log_mel(&self, log_mel: &[f64]) -> Vec<f64> {
        let mut c = self.dct.transform(log_mel);
        c.truncate(self.cfg.n_mfcc);
        c
    }

    pub fn mfcc(&self, samples: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mfcc_from_log_mel(&self.mel_spectrogram(samples)?))
    }
}

pub fn mel_spectrogram(samples: &[f64], sample_rate: u32, cfg: &DspConfig) -> Result<Vec<f64>> {
    FeatureExtractor::new(cfg.clone(), sample_rate)?.mel_spectrogram(samples)
}

pub fn mfcc(samples: &[f64], sample_rate: u32, cfg: &DspConfig) -> Result<Vec<f64>> {
    FeatureExtractor::new(cfg.clone(), sample_rate)?.mfcc(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, sr: u32, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect()
    }

    fn direct_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
                    .sum();
                s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
            })
            .collect()
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 60.0, 440.0, 999.0, 1000.0, 4000.0, 22050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(440.0) - 6.6).abs() < 1e-12);
    }

    #[test]
    fn filterbank_rows_nonnegative_and_nonempty() {
        for (sr, n_fft, n_mels) in [(16000, 2048, 128), (44100, 2048, 128), (16000, 256, 128), (8000, 64, 32)] {
            let fb = MelFilterbank::new(sr, n_fft, n_mels, 0.0, sr as f64 / 2.0);
            assert!(fb.weights().iter().all(|&w| w >= 0.0));
            for m in 0..n_mels {
                assert!(fb.row(m).iter().any(|&w| w > 0.0), "band {m} empty for n_fft={n_fft}");
            }
        }
    }

    #[test]
    fn reflect_padding_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn dct_matches_direct_sum() {
        let x: Vec<f64> = (0..128).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let fast = dct_ortho(&x);
        let slow = direct_dct(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
        let e0: Vec<f64> = (0..128).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        for (a, b) in dct_ortho(&e0).iter().zip(&direct_dct(&e0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_log_mel_gives_impulse() {
        let ex = FeatureExtractor::new(DspConfig::default(), 16000).unwrap();
        let c = ex.mfcc_from_log_mel(&[-3.0; 128]);
        assert_eq!(c.len(), 40);
        assert!((c[0] - (-3.0 * 128f64.sqrt())).abs() < 1e-10);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn dct_preserves_norm() {
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        let y = dct_ortho(&x);
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let ny: f64 = y.iter().map(|v| v * v).sum();
        assert!((nx - ny).abs() < 1e-9 * nx);
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = DspConfig::default();
        let mel = mel_spectrogram(&[0.0; 4000], 16000, &cfg).unwrap();
        assert!(mel.iter().all(|&v| v == -10.0));
        let c = mfcc(&[0.0; 4000], 16000, &cfg).unwrap();
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
        assert!(c[0] < 0.0);
    }

    #[test]
    fn sine_peaks_in_its_band() {
        let sr = 16000;
        let cfg = DspConfig::default();
        let ex = FeatureExtractor::new(cfg, sr).unwrap();
        let mel = ex.mel_spectrogram(&sine(440.0, 1.0, sr, 8000)).unwrap();
        let argmax = (0..mel.len()).max_by(|&a, &b| mel[a].total_cmp(&mel[b])).unwrap();
        // the winning band's filter must contain 440 Hz
        let bin = (440.0 * 2048.0 / sr as f64).round() as usize;
        assert!(ex.filterbank().row(argmax)[bin] > 0.0);
    }

    #[test]
    fn amplitude_scaling_is_additive_in_log() {
        let sr = 16000;
        let ex = FeatureExtractor::new(DspConfig::default(), sr).unwrap();
        let x = sine(1000.0, 0.25, sr, 6000);
        let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let a = ex.mel_spectrogram(&x).unwrap();
        let b = ex.mel_spectrogram(&x2).unwrap();
        for (u, v) in a.iter().zip(&b) {
            if *u > -9.0 {
                assert!((v - u - 4f64.log10()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = DspConfig {
            n_mfcc: 200,
            ..DspConfig::default()
        };
        assert!(cfg.validate(16000).is_err());
        let cfg = DspConfig {
            fmax: Some(9000.0),
            ..DspConfig::default()
        };
        assert!(cfg.validate(16000).is_err());
        assert!(FeatureExtractor::new(DspConfig::default(), 16000)
            .unwrap()
            .mel_spectrogram(&[])
            .is_err());
    }
}
