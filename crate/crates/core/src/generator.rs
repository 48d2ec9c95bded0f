//! Magnitude-phase generator: dense encoder, multi-resolution bottleneck,
//! parallel magnitude and phase decoders, and waveform reconstruction.

use std::rc::Rc;

use gsr_autograd::{no_grad, Conv2dSpec, Init, Param, ParamBuilder, ParamStore, Tensor};
use gsr_dsp::{Stft, StftConfig, Waveform};
use serde::{Deserialize, Serialize};

use crate::glp::{DpRule, GlpVariant};
use crate::mamba::MambaConfig;
use crate::mrtfdp::{Bottleneck, BottleneckConfig, BranchSettings};
use crate::nn::{Conv2d, ConvNormAct, ConvTranspose2d, InstanceNorm, PRelu};
use crate::ops::{self, learnable_softplus};
use crate::trace::Trace;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeHead {
    /// Per-band learnable softplus producing the compressed magnitude.
    #[default]
    Mapping,
    /// Learnable-sigmoid mask applied to the input compressed magnitude.
    Masking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub channels: usize,
    pub dense_depth: usize,
    pub dense_kernel: (usize, usize),
    pub compress_exponent: f64,
    pub magnitude_head: MagnitudeHead,
    pub softplus_beta_init: f64,
    /// Upper bound of the masking head.
    pub mask_beta: f64,
    pub stft: StftConfig,
    /// Carried by the top-level `[bottleneck]` section of config files.
    #[serde(skip)]
    pub bottleneck: BottleneckConfig,
    pub glp_variant: GlpVariant,
    pub dp_rule: DpRule,
    pub mamba: MambaConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            channels: 48,
            dense_depth: 4,
            dense_kernel: (3, 3),
            compress_exponent: 0.3,
            magnitude_head: MagnitudeHead::Mapping,
            softplus_beta_init: 1.0,
            mask_beta: 2.0,
            stft: StftConfig::speech(),
            bottleneck: BottleneckConfig::default(),
            glp_variant: GlpVariant::Glp,
            dp_rule: DpRule::Channels,
            mamba: MambaConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn n_bins(&self) -> usize {
        self.stft.n_bins()
    }

    /// Bins after the encoder's stride-2 convolution.
    pub fn f_prime(&self) -> usize {
        (self.n_bins() - 3) / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.channels < 4 || self.dense_depth == 0 {
            return Err(Error::Config("generator needs channels >= 4 and a nonempty dense block".into()));
        }
        if self.dense_kernel.0 % 2 == 0 || self.dense_kernel.1 % 2 == 0 {
            return Err(Error::Config(format!("dense kernel {:?} must be odd", self.dense_kernel)));
        }
        if !(self.compress_exponent > 0.0 && self.compress_exponent <= 1.0) {
            return Err(Error::Config(format!("compression exponent {} outside (0, 1]", self.compress_exponent)));
        }
        if self.n_bins() < 5 || (self.n_bins() - 3) % 2 != 0 {
            return Err(Error::Config(format!("{} bins cannot be halved and restored exactly", self.n_bins())));
        }
        if !(self.softplus_beta_init > 0.0) || !(self.mask_beta > 0.0) {
            return Err(Error::Config("softplus and mask betas must be positive".into()));
        }
        Ok(())
    }
}

/// Dilated dense block: layer `i` sees the concatenation of the input and all
/// previous layer outputs, with time dilation `2^i`.
pub struct DenseBlock {
    pub layers: Vec<ConvNormAct>,
}

impl DenseBlock {
    pub fn new(pb: &ParamBuilder, c: usize, depth: usize, kernel: (usize, usize)) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let dil = 1 << i;
                let ph = (kernel.0 - 1) * dil / 2;
                let pw = (kernel.1 - 1) / 2;
                let spec = Conv2dSpec::default().dilation(dil, 1).pad(ph, ph, pw, pw);
                ConvNormAct::new(&pb.sub(format!("layer{i}")), c * (i + 1), c, kernel, spec)
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut skip = x.clone();
        let mut out = x.clone();
        for layer in &self.layers {
            out = layer.forward(&skip);
            skip = Tensor::cat(&[&out, &skip], 1);
        }
        out
    }
}

pub struct Encoder {
    pub input: ConvNormAct,
    pub dense: DenseBlock,
    pub down: ConvNormAct,
}

impl Encoder {
    fn new(pb: &ParamBuilder, cfg: &GeneratorConfig) -> Self {
        let c = cfg.channels;
        Self {
            input: ConvNormAct::new(&pb.sub("input"), 2, c, (1, 1), Conv2dSpec::default()),
            dense: DenseBlock::new(&pb.sub("dense"), c, cfg.dense_depth, cfg.dense_kernel),
            down: ConvNormAct::new(&pb.sub("down"), c, c, (1, 3), Conv2dSpec::default().stride(1, 2)),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.down.forward(&self.dense.forward(&self.input.forward(x)))
    }
}

enum HeadParams {
    /// `b_f` with `β_f = exp(b_f)`.
    Softplus(Param),
    /// Per-band slope of the learnable sigmoid.
    Mask(Param),
}

pub struct MagnitudeDecoder {
    pub dense: DenseBlock,
    pub up: ConvTranspose2d,
    pub proj: Conv2d,
    pub norm: InstanceNorm,
    pub act: PRelu,
    pub out: Conv2d,
    head: HeadParams,
    mask_beta: f64,
}

impl MagnitudeDecoder {
    fn new(pb: &ParamBuilder, cfg: &GeneratorConfig) -> Self {
        let c = cfg.channels;
        let f = cfg.n_bins();
        let head = match cfg.magnitude_head {
            MagnitudeHead::Mapping => {
                HeadParams::Softplus(pb.param("softplus_b", &[f], Init::Const(cfg.softplus_beta_init.ln())))
            }
            MagnitudeHead::Masking => HeadParams::Mask(pb.param("mask_slope", &[f], Init::Ones)),
        };
        Self {
            dense: DenseBlock::new(&pb.sub("dense"), c, cfg.dense_depth, cfg.dense_kernel),
            up: ConvTranspose2d::new(&pb.sub("up"), c, c, (1, 3), (1, 2), (0, 0)),
            proj: Conv2d::new(&pb.sub("proj"), c, 1, (1, 1), Conv2dSpec::default(), true),
            norm: InstanceNorm::new(&pb.sub("norm"), 1),
            act: PRelu::new(&pb.sub("act"), 1),
            out: Conv2d::new(&pb.sub("out"), 1, 1, (1, 1), Conv2dSpec::default(), true),
            head,
            mask_beta: cfg.mask_beta,
        }
    }

    /// Pre-activation `(B, T, F)`.
    pub fn pre_activation(&self, h: &Tensor) -> Tensor {
        let y = self.up.forward(&self.dense.forward(h));
        let y = self.out.forward(&self.act.forward(&self.norm.forward(&self.proj.forward(&y))));
        y.squeeze(1)
    }

    /// Predicted compressed magnitude `(B, T, F)`.
    pub fn forward(&self, h: &Tensor, input_cmag: &Tensor) -> Tensor {
        let x = self.pre_activation(h);
        match &self.head {
            HeadParams::Softplus(b) => learnable_softplus(&x, &b.tensor()),
            HeadParams::Mask(slope) => x.mul(&slope.tensor()).sigmoid().scale(self.mask_beta).mul(input_cmag),
        }
    }

    /// `β_f` of the mapping head.
    pub fn betas(&self) -> Option<Vec<f64>> {
        match &self.head {
            HeadParams::Softplus(b) => Some(b.to_vec().iter().map(|v| v.exp()).collect()),
            HeadParams::Mask(_) => None,
        }
    }
}

pub struct PhaseDecoder {
    pub dense: DenseBlock,
    pub up: ConvTranspose2d,
    pub norm: InstanceNorm,
    pub act: PRelu,
    pub real: Conv2d,
    pub imag: Conv2d,
}

impl PhaseDecoder {
    fn new(pb: &ParamBuilder, cfg: &GeneratorConfig) -> Self {
        let c = cfg.channels;
        Self {
            dense: DenseBlock::new(&pb.sub("dense"), c, cfg.dense_depth, cfg.dense_kernel),
            up: ConvTranspose2d::new(&pb.sub("up"), c, c, (1, 3), (1, 2), (0, 0)),
            norm: InstanceNorm::new(&pb.sub("norm"), c),
            act: PRelu::new(&pb.sub("act"), c),
            real: Conv2d::new(&pb.sub("real"), c, 1, (1, 1), Conv2dSpec::default(), true),
            imag: Conv2d::new(&pb.sub("imag"), c, 1, (1, 1), Conv2dSpec::default(), true),
        }
    }

    /// Pseudo real and imaginary heads, each `(B, T, F)`.
    pub fn heads(&self, h: &Tensor) -> (Tensor, Tensor) {
        let y = self.act.forward(&self.norm.forward(&self.up.forward(&self.dense.forward(h))));
        (self.real.forward(&y).squeeze(1), self.imag.forward(&y).squeeze(1))
    }

    /// Phase in `(−π, π]`.
    pub fn forward(&self, h: &Tensor) -> Tensor {
        let (re, im) = self.heads(h);
        im.atan2(&re)
    }
}

/// Generator outputs on the compressed spectral grid.
pub struct GenOutput {
    pub cmag: Tensor,
    pub phase: Tensor,
}

/// Compressed magnitude and phase of a batch of waveforms, as constants.
pub struct SpectralInput {
    pub cmag: Tensor,
    pub phase: Tensor,
    pub len: usize,
}

pub struct Generator {
    pub cfg: GeneratorConfig,
    pub encoder: Encoder,
    pub bottleneck: Bottleneck,
    pub mag: MagnitudeDecoder,
    pub phase: PhaseDecoder,
    store: ParamStore,
    engine: Rc<Stft>,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let pb = ParamBuilder::new(seed);
        let settings = BranchSettings {
            channels: cfg.channels,
            f_top: cfg.f_prime(),
            glp_variant: cfg.glp_variant,
            dp_rule: cfg.dp_rule,
            mamba: cfg.mamba,
        };
        let encoder = Encoder::new(&pb.sub("encoder"), &cfg);
        let bottleneck = Bottleneck::new(&pb.sub("bottleneck"), &settings, &cfg.bottleneck, seed ^ 0x5eed)?;
        let mag = MagnitudeDecoder::new(&pb.sub("mag_decoder"), &cfg);
        let phase = PhaseDecoder::new(&pb.sub("phase_decoder"), &cfg);
        let engine = Rc::new(Stft::new(cfg.stft)?);
        Ok(Self { cfg, encoder, bottleneck, mag, phase, store: pb.store(), engine })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn num_trainable(&self) -> usize {
        self.store.num_trainable()
    }

    pub fn stft_engine(&self) -> &Rc<Stft> {
        &self.engine
    }

    pub fn betas(&self) -> Option<Vec<f64>> {
        self.mag.betas()
    }

    /// Stacks compressed magnitude and phase `(B, T, F)` into the encoder
    /// input and runs encoder and bottleneck.
    pub fn encode(&self, cmag: &Tensor, phase: &Tensor, trace: &Trace) -> Result<Tensor> {
        let f = self.cfg.n_bins();
        if cmag.rank() != 3 || cmag.shape() != phase.shape() || cmag.dim(2) != f {
            return Err(Error::Shape(format!(
                "generator input magnitude {:?} / phase {:?}, expected (B, T, {f})",
                cmag.shape(),
                phase.shape()
            )));
        }
        let x = Tensor::cat(&[&cmag.unsqueeze(1), &phase.unsqueeze(1)], 1);
        let h = self.encoder.forward(&x);
        trace.record(|| "encoder".into(), &h);
        self.bottleneck.forward(&h, trace)
    }

    pub fn forward(&self, cmag: &Tensor, phase: &Tensor, trace: &Trace) -> Result<GenOutput> {
        let h = self.encode(cmag, phase, trace)?;
        Ok(GenOutput { cmag: self.mag.forward(&h, cmag), phase: self.phase.forward(&h) })
    }

    /// Compressed magnitude and phase of `(B, L)` waveforms.
    pub fn analyze(&self, wave: &Tensor) -> Result<SpectralInput> {
        let len = wave.dim(1);
        if len < self.cfg.stft.win_length {
            return Err(Error::TooShort { needed: self.cfg.stft.win_length, got: len });
        }
        if let Some(i) = wave.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Dsp(gsr_dsp::Error::NonFinite(i)));
        }
        let spec = no_grad(|| ops::stft(&wave.detach(), &self.engine));
        let (b, t, f) = (spec.dim(0), spec.dim(2), spec.dim(3));
        let plane = t * f;
        let c = self.cfg.compress_exponent;
        let mut cmag = Vec::with_capacity(b * plane);
        let mut phase = Vec::with_capacity(b * plane);
        for blk in spec.data().chunks(2 * plane) {
            for k in 0..plane {
                let (re, im) = (blk[k], blk[plane + k]);
                cmag.push(re.hypot(im).powf(c));
                phase.push(im.atan2(re));
            }
        }
        Ok(SpectralInput { cmag: Tensor::new(cmag, &[b, t, f]), phase: Tensor::new(phase, &[b, t, f]), len })
    }

    /// Complex spectrum `(B, 2, T, F)` from compressed magnitude and phase.
    pub fn to_complex(&self, cmag: &Tensor, phase: &Tensor) -> Tensor {
        let mag = cmag.powf(1.0 / self.cfg.compress_exponent);
        let re = mag.mul(&phase.cos());
        let im = mag.mul(&phase.sin());
        Tensor::cat(&[&re.unsqueeze(1), &im.unsqueeze(1)], 1)
    }

    /// Waveforms `(B, len)` from compressed magnitude and phase.
    pub fn synthesize(&self, cmag: &Tensor, phase: &Tensor, len: usize) -> Tensor {
        ops::istft(&self.to_complex(cmag, phase), &self.engine, len)
    }

    /// Differentiable restoration of a batch `(B, L)`.
    pub fn restore_batch(&self, wave: &Tensor, trace: &Trace) -> Result<(GenOutput, Tensor)> {
        let input = self.analyze(wave)?;
        let out = self.forward(&input.cmag, &input.phase, trace)?;
        let y = self.synthesize(&out.cmag, &out.phase, input.len);
        Ok((out, y))
    }

    /// Restores one waveform; the output has the input's length.
    pub fn restore(&self, w: &Waveform) -> Result<Waveform> {
        if w.sample_rate != gsr_dsp::SAMPLE_RATE {
            return Err(Error::Dsp(gsr_dsp::Error::SampleRate(w.sample_rate)));
        }
        let x = Tensor::new(w.samples.clone(), &[1, w.len()]);
        let y = no_grad(|| self.restore_batch(&x, &Trace::default()))?.1;
        Ok(Waveform::new(y.to_vec())?)
    }
}
