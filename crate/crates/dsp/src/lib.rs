//! Signal processing for 16 kHz speech: STFT and its adjoints, magnitude
//! compression, mel and constant-Q filterbanks, low-pass IIR design,
//! degradation kernels with seeded recipes, and fidelity metrics.

pub mod corpus;
pub mod cqt;
pub mod degrade;
mod error;
pub mod filter;
pub mod mel;
pub mod metrics;
pub mod stft;
pub mod wav;

pub use error::{Error, Result};
pub use stft::{compress_magnitude, decompress_magnitude, istft, stft, ComplexSpectrogram, Stft, StftConfig};
pub use wav::{read_wav, write_wav, Waveform, SAMPLE_RATE};
