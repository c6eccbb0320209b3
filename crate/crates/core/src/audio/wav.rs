use std::io::Read;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};

/// Mono PCM waveform with amplitudes normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Domain("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file. Integer PCM (8/16/24/32-bit) is scaled by
/// `1 / 2^(bits-1)`, float PCM is taken as-is, and channels are averaged.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_wav(std::io::BufReader::new(file))
        .map_err(|e| annotate(e, &path.display().to_string()))
}

pub fn decode_wav<R: Read>(reader: R) -> Result<AudioSignal> {
    let reader = WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels in header".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioSignal::new(samples, spec.sample_rate)
        .map_err(|_| Error::Format("sample rate of 0 in header".into()))
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Format(format!("truncated or unreadable data: {e}")),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::Unsupported => Error::Unsupported("wave format not supported".into()),
        hound::Error::TooWide => Error::Unsupported("sample too wide".into()),
        other => Error::Format(other.to_string()),
    }
}

fn annotate(err: Error, path: &str) -> Error {
    match err {
        Error::Format(m) => Error::Format(format!("{path}: {m}")),
        Error::Unsupported(m) => Error::Unsupported(format!("{path}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use hound::{WavSpec, WavWriter};

    use super::*;

    fn encode<S: hound::Sample + Copy>(spec: WavSpec, samples: &[S]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for &s in samples {
                w.write_sample(s).unwrap();
            }
            w.finalize().unwrap();
        }
        buf.into_inner()
    }

    fn spec(channels: u16, bits: u16, fmt: SampleFormat) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 16000,
            bits_per_sample: bits,
            sample_format: fmt,
        }
    }

    #[test]
    fn int16_mono_is_scaled_linearly() {
        let bytes = encode(spec(1, 16, SampleFormat::Int), &[0i16, 16384, -16384, 32767]);
        let sig = decode_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(sig.sample_rate(), 16000);
        assert_eq!(&sig.samples()[..3], &[0.0, 0.5, -0.5]);
        assert!((sig.samples()[3] - 32767.0 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn stereo_is_averaged() {
        let bytes = encode(spec(2, 32, SampleFormat::Float), &[1.0f32, 0.0]);
        let sig = decode_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(sig.samples(), &[0.5]);
    }

    #[test]
    fn eight_and_twenty_four_bit() {
        let bytes = encode(spec(1, 8, SampleFormat::Int), &[64i8, -128]);
        let sig = decode_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(sig.samples(), &[0.5, -1.0]);

        let bytes = encode(spec(1, 24, SampleFormat::Int), &[1 << 22, -(1 << 23)]);
        let sig = decode_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(sig.samples(), &[0.5, -1.0]);
    }

    #[test]
    fn text_is_a_format_error() {
        let err = decode_wav(Cursor::new(b"hello, this is not audio".to_vec())).unwrap_err();
        assert_eq!(err.category(), "format", "{err}");
    }

    #[test]
    fn duration_is_len_over_rate() {
        let sig = AudioSignal::new(vec![0.0; 8000], 16000).unwrap();
        assert_eq!(sig.duration_s(), 0.5);
        assert!(AudioSignal::new(vec![], 0).is_err());
    }
}
