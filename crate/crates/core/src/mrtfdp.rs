//! Multi-resolution time-frequency dual-path bottleneck.

use gsr_autograd::{Conv2dSpec, ParamBuilder, Tensor};
use serde::{Deserialize, Serialize};

use crate::glp::{DpRule, GlpBlock, GlpConfig, GlpVariant};
use crate::mamba::{MambaConfig, TimeMamba};
use crate::nn::{Conv2d, ConvNormAct, ConvTranspose2d, InstanceNorm, PRelu};
use crate::trace::Trace;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckMode {
    /// Independent branches at F', F'/2, F'/4 fused bottom-up.
    #[default]
    Parallel,
    /// Each lower branch is fed by the processed output of the one above.
    Sequential,
    /// One full-resolution branch per block.
    SingleResolution,
    /// Branches at T, T/2, T/4 (full frequency resolution).
    TimeDownsample,
    /// Both axes halved per level.
    TimeFreqDownsample,
    /// Three full-resolution branches, fused without resampling.
    NoDownsample,
}

impl BottleneckMode {
    /// Strided-conv kernel and stride for one downsampling level, `None` when
    /// the mode does not resample.
    fn resample(self) -> Option<((usize, usize), (usize, usize))> {
        match self {
            Self::Parallel | Self::Sequential => Some(((3, 4), (1, 2))),
            Self::TimeDownsample => Some(((4, 3), (2, 1))),
            Self::TimeFreqDownsample => Some(((4, 4), (2, 2))),
            Self::SingleResolution | Self::NoDownsample => None,
        }
    }

    fn branches(self, resolutions: usize) -> usize {
        if self == Self::SingleResolution {
            1
        } else {
            resolutions
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BottleneckConfig {
    pub mode: BottleneckMode,
    pub blocks: usize,
    pub resolutions: usize,
}

impl Default for BottleneckConfig {
    fn default() -> Self {
        Self { mode: BottleneckMode::Parallel, blocks: 4, resolutions: 3 }
    }
}

/// Settings shared by every branch.
#[derive(Clone, Copy, Debug)]
pub struct BranchSettings {
    pub channels: usize,
    pub f_top: usize,
    pub glp_variant: GlpVariant,
    pub dp_rule: DpRule,
    pub mamba: MambaConfig,
}

/// Strided conv + instance norm + PReLU.
pub struct Downsample {
    pub layer: ConvNormAct,
    stride: (usize, usize),
    kernel: (usize, usize),
}

impl Downsample {
    pub fn new(pb: &ParamBuilder, c: usize, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        let spec = Conv2dSpec::default().stride(stride.0, stride.1).pad(1, 1, 1, 1);
        Self { layer: ConvNormAct::new(pb, c, c, kernel, spec), stride, kernel }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (t, f) = (x.dim(2), x.dim(3));
        let short = |n: usize, s: usize, k: usize| s > 1 && n < k;
        if short(f, self.stride.1, self.kernel.1) || short(t, self.stride.0, self.kernel.0) {
            return Err(Error::Shape(format!("cannot downsample a {t}×{f} map by {:?}", self.stride)));
        }
        Ok(self.layer.forward(x))
    }
}

/// Transposed conv + instance norm + PReLU, centre-cropped to the partner size.
pub struct Upsample {
    pub conv: ConvTranspose2d,
    pub norm: InstanceNorm,
    pub act: PRelu,
}

impl Upsample {
    pub fn new(pb: &ParamBuilder, c: usize, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        Self {
            conv: ConvTranspose2d::new(&pb.sub("conv"), c, c, kernel, stride, (1, 1)),
            norm: InstanceNorm::new(&pb.sub("norm"), c),
            act: PRelu::new(&pb.sub("act"), c),
        }
    }

    pub fn forward(&self, x: &Tensor, t: usize, f: usize) -> Tensor {
        let y = self.conv.forward(x).fit_axis(2, t).fit_axis(3, f);
        self.act.forward(&self.norm.forward(&y))
    }
}

/// Time Mamba followed by Frequency GLP.
pub struct TfdpBranch {
    pub time: TimeMamba,
    pub glp: GlpBlock,
}

impl TfdpBranch {
    pub fn new(pb: &ParamBuilder, s: &BranchSettings, f_eff: usize, seed: u64) -> Self {
        let cfg = GlpConfig { channels: s.channels, f_eff, variant: s.glp_variant, dp_rule: s.dp_rule };
        Self { time: TimeMamba::new(&pb.sub("time"), s.channels, &s.mamba, seed), glp: GlpBlock::new(&pb.sub("glp"), cfg) }
    }

    pub fn forward(&self, x: &Tensor, trace: &Trace, name: &str) -> Result<Tensor> {
        let y = self.time.forward(x)?;
        self.glp.forward(&y, trace, &format!("{name}.glp"))
    }
}

/// Frequency width at each level for a given mode.
fn level_widths(mode: BottleneckMode, f_top: usize, levels: usize) -> Vec<usize> {
    let halves = matches!(mode, BottleneckMode::Parallel | BottleneckMode::Sequential | BottleneckMode::TimeFreqDownsample);
    let mut w = vec![f_top];
    for _ in 1..levels {
        let last = *w.last().unwrap();
        w.push(if halves { last / 2 } else { last });
    }
    w
}

pub struct MrBlock {
    pub mode: BottleneckMode,
    pub branches: Vec<TfdpBranch>,
    pub down: Vec<Downsample>,
    pub up: Vec<Upsample>,
    pub fuse: Vec<Conv2d>,
}

impl MrBlock {
    pub fn new(pb: &ParamBuilder, s: &BranchSettings, cfg: &BottleneckConfig, seed: u64) -> Self {
        let n = cfg.mode.branches(cfg.resolutions);
        let widths = level_widths(cfg.mode, s.f_top, n);
        let branches = (0..n)
            .map(|r| TfdpBranch::new(&pb.sub(format!("branch{r}")), s, widths[r], seed.wrapping_add(2 * r as u64)))
            .collect();
        let (down, up) = match cfg.mode.resample() {
            Some((k, st)) => (
                (1..n).map(|r| Downsample::new(&pb.sub(format!("down{r}")), s.channels, k, st)).collect(),
                (1..n).map(|r| Upsample::new(&pb.sub(format!("up{r}")), s.channels, k, st)).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let fuse = (1..n)
            .map(|r| Conv2d::new(&pb.sub(format!("fuse{r}")), 2 * s.channels, s.channels, (1, 1), Conv2dSpec::default(), true))
            .collect();
        Self { mode: cfg.mode, branches, down, up, fuse }
    }

    /// Pre-fusion branch outputs.
    pub fn branch_outputs(&self, x: &Tensor, trace: &Trace, name: &str) -> Result<Vec<Tensor>> {
        let n = self.branches.len();
        let mut outs = Vec::with_capacity(n);
        let mut feed = x.clone();
        for (r, br) in self.branches.iter().enumerate() {
            if r > 0 && !self.down.is_empty() {
                let src = if self.mode == BottleneckMode::Sequential { outs.last().unwrap() } else { &feed };
                feed = self.down[r - 1].forward(src)?;
            }
            let y = br.forward(&feed, trace, &format!("{name}.branch{r}"))?;
            trace.record(|| format!("{name}.branch{r}"), &y);
            outs.push(y);
        }
        Ok(outs)
    }

    pub fn forward(&self, x: &Tensor, trace: &Trace, name: &str) -> Result<Tensor> {
        let outs = self.branch_outputs(x, trace, name)?;
        let mut acc = outs.last().unwrap().clone();
        for r in (1..outs.len()).rev() {
            let partner = &outs[r - 1];
            let lifted = match self.up.get(r - 1) {
                Some(up) => up.forward(&acc, partner.dim(2), partner.dim(3)),
                None => acc,
            };
            acc = self.fuse[r - 1].forward(&Tensor::cat(&[partner, &lifted], 1));
        }
        Ok(x.add(&acc))
    }
}

/// `N` multi-resolution blocks in sequence.
pub struct Bottleneck {
    pub blocks: Vec<MrBlock>,
}

impl Bottleneck {
    pub fn new(pb: &ParamBuilder, s: &BranchSettings, cfg: &BottleneckConfig, seed: u64) -> Result<Self> {
        if cfg.blocks == 0 || cfg.resolutions == 0 {
            return Err(Error::Config("bottleneck needs at least one block and one resolution".into()));
        }
        let widths = level_widths(cfg.mode, s.f_top, cfg.mode.branches(cfg.resolutions));
        if widths.iter().any(|&w| w < 4) {
            return Err(Error::Config(format!("frequency widths {widths:?} too small for downsampling")));
        }
        let blocks = (0..cfg.blocks)
            .map(|i| MrBlock::new(&pb.sub(format!("block{i}")), s, cfg, seed.wrapping_add(100 * i as u64)))
            .collect();
        Ok(Self { blocks })
    }

    pub fn forward(&self, x: &Tensor, trace: &Trace) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(&h, trace, &format!("block{i}"))?;
        }
        Ok(h)
    }
}
