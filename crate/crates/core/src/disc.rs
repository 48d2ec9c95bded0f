//! Multi-resolution STFT discriminator and multi-scale sub-band CQT
//! discriminator. Each sub-discriminator returns a score map and its
//! intermediate feature maps.

use std::rc::Rc;

use gsr_autograd::{Conv2dSpec, ParamBuilder, ParamStore, Tensor};
use gsr_dsp::cqt::{Cqt, CqtConfig};
use gsr_dsp::{Stft, StftConfig};
use serde::{Deserialize, Serialize};

use crate::nn::{same_padding, Conv2d, WnConv2d};
use crate::ops;
use crate::{Error, Result};

const LEAK: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscConfig {
    /// `(n_fft, hop, win_length)` per MRD sub-discriminator.
    pub mrd_resolutions: Vec<(usize, usize, usize)>,
    pub mrd_channels: usize,
    pub cqtd_bins_per_octave: Vec<usize>,
    pub cqtd_hops: Vec<usize>,
    pub cqtd_octaves: usize,
    pub cqtd_fmin: f64,
    pub cqtd_channels: usize,
    pub cqtd_max_kernel_len: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            mrd_resolutions: vec![(512, 50, 240), (1024, 120, 600), (2048, 240, 1200)],
            mrd_channels: 32,
            cqtd_bins_per_octave: vec![12, 24, 36],
            cqtd_hops: vec![512, 256, 256],
            cqtd_octaves: 8,
            cqtd_fmin: 31.25,
            cqtd_channels: 32,
            cqtd_max_kernel_len: 16_000,
        }
    }
}

/// Score map and ordered feature maps of one sub-discriminator.
#[derive(Clone)]
pub struct SubOutput {
    pub score: Tensor,
    pub features: Vec<Tensor>,
}

/// Outputs of every sub-discriminator of one discriminator family.
#[derive(Clone, Default)]
pub struct DiscriminatorOutput {
    pub subs: Vec<SubOutput>,
}

impl DiscriminatorOutput {
    pub fn scores(&self) -> Vec<Tensor> {
        self.subs.iter().map(|s| s.score.clone()).collect()
    }

    pub fn features(&self) -> Vec<Vec<Tensor>> {
        self.subs.iter().map(|s| s.features.clone()).collect()
    }

    pub fn extend(&mut self, other: DiscriminatorOutput) {
        self.subs.extend(other.subs);
    }
}

fn run_stack(convs: &[WnConv2d], post: &WnConv2d, x: Tensor) -> SubOutput {
    let mut h = x;
    let mut features = Vec::with_capacity(convs.len() + 1);
    for c in convs {
        h = c.forward(&h).leaky_relu(LEAK);
        features.push(h.clone());
    }
    let score = post.forward(&h);
    features.push(score.clone());
    SubOutput { score, features }
}

/// STFT-magnitude sub-discriminator; convolutions run over `(F, T)` with
/// strides along time.
pub struct MrdSub {
    engine: Rc<Stft>,
    pub convs: Vec<WnConv2d>,
    pub post: WnConv2d,
}

impl MrdSub {
    pub fn new(pb: &ParamBuilder, res: (usize, usize, usize), ch: usize) -> Result<Self> {
        let engine = Rc::new(Stft::new(StftConfig::new(res.0, res.1, res.2))?);
        let wide = Conv2dSpec { padding: same_padding((3, 9), (1, 1)), ..Default::default() };
        let strided = wide.stride(1, 2);
        let narrow = Conv2dSpec { padding: same_padding((3, 3), (1, 1)), ..Default::default() };
        let convs = vec![
            WnConv2d::new(&pb.sub("conv0"), 1, ch, (3, 9), wide),
            WnConv2d::new(&pb.sub("conv1"), ch, ch, (3, 9), strided),
            WnConv2d::new(&pb.sub("conv2"), ch, ch, (3, 9), strided),
            WnConv2d::new(&pb.sub("conv3"), ch, ch, (3, 9), strided),
            WnConv2d::new(&pb.sub("conv4"), ch, ch, (3, 3), narrow),
        ];
        Ok(Self { engine, convs, post: WnConv2d::new(&pb.sub("post"), ch, 1, (3, 3), narrow) })
    }

    pub fn window(&self) -> usize {
        self.engine.config().win_length
    }

    pub fn forward(&self, wave: &Tensor) -> SubOutput {
        let spec = ops::stft(wave, &self.engine);
        let (t, f) = (spec.dim(2), spec.dim(3));
        let re = spec.narrow(1, 0, 1);
        let im = spec.narrow(1, 1, 1);
        let mag = re.sqr().add(&im.sqr()).add_scalar(1e-9).sqrt();
        debug_assert_eq!(mag.shape()[2..], [t, f]);
        run_stack(&self.convs, &self.post, mag.transpose(2, 3))
    }
}

/// Sub-band CQT sub-discriminator over real and imaginary planes `(2, T, K)`.
pub struct CqtdSub {
    engine: Rc<Cqt>,
    bins_per_octave: usize,
    pub pre: Vec<Conv2d>,
    pub convs: Vec<WnConv2d>,
    pub post: WnConv2d,
}

impl CqtdSub {
    pub fn new(pb: &ParamBuilder, cfg: CqtConfig, ch: usize) -> Result<Self> {
        let engine = Rc::new(Cqt::new(cfg)?);
        let wide = Conv2dSpec { padding: same_padding((3, 9), (1, 1)), ..Default::default() };
        let pre = (0..cfg.n_octaves).map(|i| Conv2d::new(&pb.sub(format!("pre{i}")), 2, 2, (3, 9), wide, true)).collect();
        let mut convs = vec![WnConv2d::new(&pb.sub("conv0"), 2, ch, (3, 9), wide)];
        for (i, d) in [1usize, 2, 4].into_iter().enumerate() {
            let spec = Conv2dSpec { padding: same_padding((3, 9), (d, 1)), dilation: (d, 1), stride: (1, 2) };
            convs.push(WnConv2d::new(&pb.sub(format!("conv{}", i + 1)), ch, ch, (3, 9), spec));
        }
        let narrow = Conv2dSpec { padding: same_padding((3, 3), (1, 1)), ..Default::default() };
        convs.push(WnConv2d::new(&pb.sub("conv4"), ch, ch, (3, 3), narrow));
        Ok(Self {
            engine,
            bins_per_octave: cfg.bins_per_octave,
            pre,
            convs,
            post: WnConv2d::new(&pb.sub("post"), ch, 1, (3, 3), narrow),
        })
    }

    pub fn rows(&self) -> usize {
        self.engine.config().n_bins()
    }

    pub fn min_len(&self) -> usize {
        self.engine.longest_kernel()
    }

    pub fn forward(&self, wave: &Tensor) -> SubOutput {
        let z = ops::cqt(wave, &self.engine);
        let bands: Vec<Tensor> = self
            .pre
            .iter()
            .enumerate()
            .map(|(i, conv)| conv.forward(&z.narrow(3, i * self.bins_per_octave, self.bins_per_octave)))
            .collect();
        let refs: Vec<&Tensor> = bands.iter().collect();
        run_stack(&self.convs, &self.post, Tensor::cat(&refs, 3))
    }
}

/// Both discriminator families with a shared parameter store.
pub struct Discriminators {
    pub mrd: Vec<MrdSub>,
    pub cqtd: Vec<CqtdSub>,
    store: ParamStore,
}

impl Discriminators {
    pub fn new(cfg: &DiscConfig, seed: u64) -> Result<Self> {
        if cfg.cqtd_hops.len() != cfg.cqtd_bins_per_octave.len() {
            return Err(Error::Config("cqtd_hops and cqtd_bins_per_octave differ in length".into()));
        }
        let pb = ParamBuilder::new(seed);
        let mrd = cfg
            .mrd_resolutions
            .iter()
            .enumerate()
            .map(|(i, &r)| MrdSub::new(&pb.sub(format!("mrd{i}")), r, cfg.mrd_channels))
            .collect::<Result<Vec<_>>>()?;
        let cqtd = cfg
            .cqtd_bins_per_octave
            .iter()
            .zip(&cfg.cqtd_hops)
            .enumerate()
            .map(|(i, (&bpo, &hop))| {
                let c = CqtConfig {
                    fmin: cfg.cqtd_fmin,
                    n_octaves: cfg.cqtd_octaves,
                    bins_per_octave: bpo,
                    hop,
                    max_kernel_len: cfg.cqtd_max_kernel_len,
                    ..CqtConfig::default()
                };
                CqtdSub::new(&pb.sub(format!("cqtd{i}")), c, cfg.cqtd_channels)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mrd, cqtd, store: pb.store() })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Shortest waveform every sub-discriminator accepts.
    pub fn min_len(&self) -> usize {
        let m = self.mrd.iter().map(MrdSub::window).max().unwrap_or(0);
        let c = self.cqtd.iter().map(CqtdSub::min_len).max().unwrap_or(0);
        m.max(c)
    }

    pub fn mrd_forward(&self, wave: &Tensor) -> Result<DiscriminatorOutput> {
        let need = self.mrd.iter().map(MrdSub::window).max().unwrap_or(0);
        check_len(wave, need)?;
        Ok(DiscriminatorOutput { subs: self.mrd.iter().map(|d| d.forward(wave)).collect() })
    }

    pub fn cqtd_forward(&self, wave: &Tensor) -> Result<DiscriminatorOutput> {
        let need = self.cqtd.iter().map(CqtdSub::min_len).max().unwrap_or(0);
        check_len(wave, need)?;
        Ok(DiscriminatorOutput { subs: self.cqtd.iter().map(|d| d.forward(wave)).collect() })
    }

    /// MRD outputs followed by CQTD outputs.
    pub fn forward(&self, wave: &Tensor) -> Result<DiscriminatorOutput> {
        let mut out = self.mrd_forward(wave)?;
        out.extend(self.cqtd_forward(wave)?);
        Ok(out)
    }
}

fn check_len(wave: &Tensor, need: usize) -> Result<()> {
    if wave.rank() != 2 {
        return Err(Error::Shape(format!("discriminator input {:?}, expected (batch, samples)", wave.shape())));
    }
    if wave.dim(1) < need {
        return Err(Error::TooShort { needed: need, got: wave.dim(1) });
    }
    Ok(())
}
