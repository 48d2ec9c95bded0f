use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dsp(#[from] gsr_dsp::Error),
    #[error(transparent)]
    Param(#[from] gsr_autograd::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("selective scan needs positive step sizes, found {0} at index {1}")]
    NonPositiveDelta(f64, usize),
    #[error("input of {got} samples is shorter than {needed}")]
    TooShort { needed: usize, got: usize },
    #[error("{0}")]
    Contract(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("config {path}: {msg}")]
    ConfigFile { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
