//! Audio side of the pipeline: WAV decoding, half-overlap chunking and
//! per-chunk MFCC + log-mel features.

mod chunk;
pub mod dsp;
mod features;
mod wav;

pub use chunk::{chunk_boundaries, ChunkBoundary};
pub use dsp::{dct_ortho, mel_spectrogram, mfcc, DspConfig, FeatureExtractor, MelFilterbank};
pub use features::{extract_chunk_features, sample_range, AudioChunkFeatures};
pub use wav::{decode_wav, load_wav, AudioSignal};
