//! Speech restoration model and tooling: the magnitude-phase generator with a
//! multi-resolution time-frequency bottleneck, vocoder-style discriminators
//! and losses, the adversarial training loop, and gradient-based analyses.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod disc;
mod error;
pub mod eval;
pub mod fan;
pub mod generator;
pub mod glp;
pub mod loss;
pub mod mamba;
pub mod mrtfdp;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
pub use generator::{GenOutput, Generator, GeneratorConfig, MagnitudeHead};
pub use trace::Trace;
