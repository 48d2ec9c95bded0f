use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    Empty,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("negative magnitude {value} at index {index}")]
    NegativeMagnitude { index: usize, value: f64 },
    #[error("input has {got} samples, at least {needed} required")]
    TooShort { needed: usize, got: usize },
    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),
    #[error("designed filter is unstable (pole magnitude {0})")]
    UnstableFilter(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("spectrogram geometry mismatch: {0}")]
    Geometry(String),
    #[error("degradation policy enables no kernel")]
    EmptyPolicy,
    #[error("recipe needs a {0} pool but none was supplied")]
    EmptyPool(&'static str),
    #[error("unsupported sample rate {0} Hz (expected 16000)")]
    SampleRate(u32),
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}
