//! Top-level configuration file.

use std::path::Path;

use gsr_dsp::degrade::DegradationPolicy;
use serde::{Deserialize, Serialize};

use crate::disc::DiscConfig;
use crate::generator::GeneratorConfig;
use crate::loss::LossWeights;
use crate::mrtfdp::BottleneckConfig;
use crate::optim::AdamWConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Segment length in samples; a multiple of the STFT hop.
    pub segment: usize,
    pub batch: usize,
    pub epochs: u64,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub seed: u64,
    /// Items drawn per epoch; the clean list length when unset.
    pub items_per_epoch: Option<usize>,
    /// Checkpoint period in optimizer steps; epoch ends always checkpoint.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            segment: 24_000,
            batch: 8,
            epochs: 100,
            lr: 2e-4,
            lr_decay: 0.99,
            seed: 1234,
            items_per_epoch: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: GeneratorConfig,
    pub bottleneck: BottleneckConfig,
    pub discriminator: DiscConfig,
    pub loss: LossWeights,
    pub optimizer: AdamWConfig,
    pub train: TrainConfig,
    pub degradation: DegradationPolicy,
}

impl Config {
    /// Small model and short run for CPU smoke tests: 2 epochs of 50 items in
    /// batches of 2, on a narrow generator and light discriminators.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.model.channels = 16;
        c.bottleneck.blocks = 2;
        c.discriminator.mrd_channels = 8;
        c.discriminator.cqtd_channels = 8;
        c.discriminator.cqtd_max_kernel_len = 2048;
        c.discriminator.cqtd_hops = vec![256, 256, 256];
        c.train.segment = 8000;
        c.train.batch = 2;
        c.train.epochs = 2;
        c.train.items_per_epoch = Some(50);
        c
    }

    /// Generator settings with the bottleneck section applied.
    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig { bottleneck: self.bottleneck, ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator().validate()?;
        self.loss.validate()?;
        let t = &self.train;
        if t.batch == 0 || t.segment == 0 || t.segment % self.model.stft.hop != 0 {
            return Err(Error::Config(format!(
                "segment {} must be a positive multiple of hop {} and batch must be positive",
                t.segment, self.model.stft.hop
            )));
        }
        if !(t.lr > 0.0) || !(t.lr_decay > 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
        Self::from_toml(&text).map_err(|e| Error::ConfigFile { path: path.to_path_buf(), msg: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrtfdp::BottleneckMode;

    #[test]
    fn toml_round_trip() {
        let c = Config::desk();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn bottleneck_mode_key() {
        let c = Config::from_toml("[bottleneck]\nmode = \"sequential\"\n").unwrap();
        assert_eq!(c.generator().bottleneck.mode, BottleneckMode::Sequential);
        assert!(Config::from_toml("[bottleneck]\nmode = \"diagonal\"\n").is_err());
    }

    #[test]
    fn segment_must_be_hop_multiple() {
        assert!(Config::from_toml("[train]\nsegment = 1050\n").is_err());
    }
}
