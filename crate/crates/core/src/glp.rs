//! Frequency GLP block: a global-periodic (FAN) path and a local
//! convolutional path over frequency in parallel, fused by a pointwise
//! convolution, followed by a channel FFN.

use gsr_autograd::{Conv2dSpec, ParamBuilder, Tensor};
use serde::{Deserialize, Serialize};

use crate::fan::FanLayer;
use crate::nn::{Conv2d, LayerNorm, Linear};
use crate::trace::Trace;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlpVariant {
    #[default]
    Glp,
    /// Second local path in place of the periodic one.
    NoGp,
    /// Periodic path applied after the local path.
    Serial,
    /// FAN layers replaced by linear layers with GELU.
    FanToLinear,
}

impl std::str::FromStr for GlpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glp" => Ok(Self::Glp),
            "no_gp" => Ok(Self::NoGp),
            "serial" => Ok(Self::Serial),
            "fan_to_linear" => Ok(Self::FanToLinear),
            other => Err(Error::Config(format!("unknown GLP variant `{other}`"))),
        }
    }
}

/// How the periodic width `d_p` of each FAN layer is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpRule {
    /// `d_p = C/4` for every FAN layer.
    #[default]
    Channels,
    /// `d_p = d_out/4` per layer.
    Width,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlpConfig {
    pub channels: usize,
    pub f_eff: usize,
    pub variant: GlpVariant,
    pub dp_rule: DpRule,
}

impl GlpConfig {
    pub fn new(channels: usize, f_eff: usize) -> Self {
        Self { channels, f_eff, variant: GlpVariant::Glp, dp_rule: DpRule::Channels }
    }

    fn d_p(&self, d_out: usize) -> usize {
        match self.dp_rule {
            DpRule::Channels => self.channels / 4,
            DpRule::Width => d_out / 4,
        }
    }
}

/// FAN(d → 2d) → FAN(2d → 2d) → gated linear (2d → d), over the last axis.
pub struct GatedFan {
    pub fan1: FanLayer,
    pub fan2: FanLayer,
    pub value: Linear,
    pub gate: Linear,
    width: usize,
}

impl GatedFan {
    pub fn new(pb: &ParamBuilder, width: usize, cfg: &GlpConfig, periodic: bool) -> Self {
        let dp = |d_out| if periodic { cfg.d_p(d_out) } else { 0 };
        let hidden = 2 * width;
        Self {
            fan1: FanLayer::new(&pb.sub("fan1"), width, hidden, dp(hidden)),
            fan2: FanLayer::new(&pb.sub("fan2"), hidden, hidden, dp(hidden)),
            value: Linear::new(&pb.sub("value"), hidden, width, true),
            gate: Linear::new(&pb.sub("gate"), hidden, width, true),
            width,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.fan1.out_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(*x.shape().last().unwrap(), self.width, "GP width mismatch for {:?}", x.shape());
        let h = self.fan2.forward(&self.fan1.forward(x));
        self.value.forward(&h).mul(&self.gate.forward(&h).sigmoid())
    }
}

/// Two frequency-axis convolutions (kernel 3, same padding) with GELU between.
pub struct LocalModule {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl LocalModule {
    pub fn new(pb: &ParamBuilder, channels: usize) -> Self {
        let spec = Conv2dSpec::default().pad(0, 0, 1, 1);
        Self {
            conv1: Conv2d::new(&pb.sub("conv1"), channels, channels, (1, 3), spec, true),
            conv2: Conv2d::new(&pb.sub("conv2"), channels, channels, (1, 3), spec, true),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.conv2.forward(&self.conv1.forward(x).gelu())
    }
}

enum Global {
    Periodic(GatedFan),
    Local(LocalModule),
}

pub struct GlpBlock {
    pub cfg: GlpConfig,
    norm1: LayerNorm,
    global: Global,
    pub local: LocalModule,
    pub fuse: Conv2d,
    norm2: LayerNorm,
    pub ffn: GatedFan,
}

impl GlpBlock {
    pub fn new(pb: &ParamBuilder, cfg: GlpConfig) -> Self {
        let c = cfg.channels;
        let global = match cfg.variant {
            GlpVariant::NoGp => Global::Local(LocalModule::new(&pb.sub("local2"), c)),
            GlpVariant::FanToLinear => Global::Periodic(GatedFan::new(&pb.sub("gp"), cfg.f_eff, &cfg, false)),
            GlpVariant::Glp | GlpVariant::Serial => Global::Periodic(GatedFan::new(&pb.sub("gp"), cfg.f_eff, &cfg, true)),
        };
        Self {
            cfg,
            norm1: LayerNorm::new(&pb.sub("norm1"), c, 1),
            global,
            local: LocalModule::new(&pb.sub("local"), c),
            fuse: Conv2d::new(&pb.sub("fuse"), 2 * c, c, (1, 1), Conv2dSpec::default(), true),
            norm2: LayerNorm::new(&pb.sub("norm2"), c, 1),
            ffn: GatedFan::new(&pb.sub("ffn"), c, &cfg, cfg.variant != GlpVariant::FanToLinear),
        }
    }

    /// The periodic path, if this variant has one.
    pub fn gp(&self) -> Option<&GatedFan> {
        match &self.global {
            Global::Periodic(g) => Some(g),
            Global::Local(_) => None,
        }
    }

    fn global(&self, x: &Tensor) -> Tensor {
        match &self.global {
            Global::Periodic(g) => g.forward(x),
            Global::Local(l) => l.forward(x),
        }
    }

    /// Channel FFN applied per `(b, t, f)` fiber.
    pub fn channel_ffn(&self, x: &Tensor) -> Tensor {
        self.ffn.forward(&x.permute(&[0, 2, 3, 1])).permute(&[0, 3, 1, 2])
    }

    pub fn forward(&self, x: &Tensor, trace: &Trace, name: &str) -> Result<Tensor> {
        if x.rank() != 4 || x.dim(1) != self.cfg.channels || x.dim(3) != self.cfg.f_eff {
            return Err(Error::Shape(format!(
                "GLP block for C={} F={} got {:?}",
                self.cfg.channels,
                self.cfg.f_eff,
                x.shape()
            )));
        }
        let n = self.norm1.forward(x);
        let (g, l) = match self.cfg.variant {
            GlpVariant::Serial => {
                let l = self.local.forward(&n);
                (self.global(&l), l)
            }
            _ => (self.global(&n), self.local.forward(&n)),
        };
        trace.record(|| format!("{name}.gp"), &g);
        trace.record(|| format!("{name}.l"), &l);
        let y1 = x.add(&self.fuse.forward(&Tensor::cat(&[&g, &l], 1)));
        Ok(y1.add(&self.channel_ffn(&self.norm2.forward(&y1))))
    }
}
