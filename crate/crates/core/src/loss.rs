//! Generator and discriminator objectives.

use std::rc::Rc;

use gsr_autograd::Tensor;
use gsr_dsp::mel::mel_filterbank;
use gsr_dsp::{Stft, StftConfig, SAMPLE_RATE};
use serde::{Deserialize, Serialize};

use crate::ops::{self, AntiWrap};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub adv: f64,
    pub mag: f64,
    pub awp: f64,
    pub con: f64,
    pub ri: f64,
    pub mel: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { adv: 1.0, mag: 0.9, awp: 0.3, con: 0.1, ri: 0.1, mel: 0.1, fm: 1.0 }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { adv: 0.0, mag: 0.0, awp: 0.0, con: 0.0, ri: 0.0, mel: 0.0, fm: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.adv, self.mag, self.awp, self.con, self.ri, self.mel, self.fm];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

fn mean_sq_offset(s: &Tensor, target: f64) -> Tensor {
    s.add_scalar(-target).sqr().mean()
}

fn mean_of(terms: Vec<Tensor>) -> Tensor {
    let n = terms.len() as f64;
    let mut it = terms.into_iter();
    let first = it.next().expect("nonempty");
    it.fold(first, |acc, t| acc.add(&t)).scale(1.0 / n)
}

/// Mean over sub-discriminators of `mean((s − 1)²)`.
pub fn adv_loss_generator(fake: &[Tensor]) -> Result<Tensor> {
    if fake.is_empty() {
        return Err(Error::Contract("adversarial loss needs at least one score map".into()));
    }
    Ok(mean_of(fake.iter().map(|s| mean_sq_offset(s, 1.0)).collect()))
}

/// Mean over sub-discriminators of `mean((r − 1)²) + mean(f²)`.
pub fn adv_loss_discriminator(real: &[Tensor], fake: &[Tensor]) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Contract(format!("{} real vs {} fake score maps", real.len(), fake.len())));
    }
    Ok(mean_of(real.iter().zip(fake).map(|(r, f)| mean_sq_offset(r, 1.0).add(&mean_sq_offset(f, 0.0))).collect()))
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean absolute difference of compressed magnitudes.
pub fn mag_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(pred, target, "magnitude loss")?;
    Ok(pred.sub(target).abs().mean())
}

fn diff(x: &Tensor, axis: usize) -> Tensor {
    let n = x.dim(axis);
    x.narrow(axis, 1, n - 1).sub(&x.narrow(axis, 0, n - 1))
}

/// Instantaneous phase, group delay and instantaneous angular frequency
/// terms for `(…, T, F)` phases, summed.
pub fn anti_wrap_phase_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(pred, target, "phase loss")?;
    let r = pred.rank();
    if r < 2 || pred.dim(r - 1) < 2 || pred.dim(r - 2) < 2 {
        return Err(Error::Shape(format!("phase loss needs at least 2×2 grids, got {:?}", pred.shape())));
    }
    let ip = pred.sub(target).anti_wrap().mean();
    let gd = diff(pred, r - 1).sub(&diff(target, r - 1)).anti_wrap().mean();
    let iaf = diff(pred, r - 2).sub(&diff(target, r - 2)).anti_wrap().mean();
    Ok(ip.add(&gd).add(&iaf))
}

/// Mean squared error over real and imaginary parts.
pub fn complex_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(pred, target, "complex loss")?;
    Ok(pred.sub(target).sqr().mean())
}

/// Compressed complex spectrum `(B, 2, T, F)` from compressed magnitude and phase.
pub fn compressed_complex(cmag: &Tensor, phase: &Tensor) -> Tensor {
    Tensor::cat(&[&cmag.mul(&phase.cos()).unsqueeze(1), &cmag.mul(&phase.sin()).unsqueeze(1)], 1)
}

/// Recompresses a linear complex spectrum `(B, 2, T, F)`: `z·|z|^(c−1)`.
pub fn compress_complex(z: &Tensor, exponent: f64) -> Tensor {
    let (re, im) = (z.narrow(1, 0, 1), z.narrow(1, 1, 1));
    let scale = re.sqr().add(&im.sqr()).add_scalar(1e-12).powf((exponent - 1.0) / 2.0);
    Tensor::cat(&[&re.mul(&scale), &im.mul(&scale)], 1)
}

/// MSE between the predicted compressed spectrum and its re-analysis after
/// resynthesis, i.e. its distance to the set of consistent spectrograms.
pub fn consistency_loss(cmag: &Tensor, phase: &Tensor, engine: &Rc<Stft>, len: usize, exponent: f64) -> Result<Tensor> {
    check_same(cmag, phase, "consistency loss")?;
    let frames = engine.config().n_frames(len);
    if cmag.rank() != 3 || cmag.dim(1) != frames || cmag.dim(2) != engine.config().n_bins() {
        return Err(Error::Shape(format!("consistency loss grid {:?} for {len} samples", cmag.shape())));
    }
    let pred = compressed_complex(cmag, phase);
    let linear = compressed_complex(&cmag.powf(1.0 / exponent), phase);
    let wave = ops::istft(&linear, engine, len);
    let again = compress_complex(&ops::stft(&wave, engine), exponent);
    complex_loss(&pred, &again)
}

/// One mel scale: analysis engine plus filterbank `(bins, n_mels)`.
pub struct MelScale {
    engine: Rc<Stft>,
    fb: Tensor,
}

impl MelScale {
    pub fn new(n_fft: usize, n_mels: usize) -> Result<Self> {
        let engine = Rc::new(Stft::new(StftConfig::new(n_fft, n_fft / 4, n_fft))?);
        let bins = n_fft / 2 + 1;
        let rows = mel_filterbank(SAMPLE_RATE as f64, n_fft, n_mels, 0.0, SAMPLE_RATE as f64 / 2.0)?;
        let fb = Tensor::new(rows, &[n_mels, bins]).transpose(0, 1);
        Ok(Self { engine, fb: Tensor::new(fb.to_vec(), &[bins, n_mels]) })
    }

    /// Natural-log mel energies `(B, T, n_mels)`, floored at 1e-5.
    pub fn log_mel(&self, wave: &Tensor) -> Tensor {
        let s = ops::stft(wave, &self.engine);
        let (re, im) = (s.narrow(1, 0, 1).squeeze(1), s.narrow(1, 1, 1).squeeze(1));
        let mag = re.sqr().add(&im.sqr()).add_scalar(1e-9).sqrt();
        mag.matmul(&self.fb).clamp_min(gsr_dsp::mel::MEL_FLOOR).ln()
    }
}

/// Window sizes and mel counts of the multi-scale mel loss.
pub const MEL_SCALES: [(usize, usize); 7] = [(32, 5), (64, 10), (128, 20), (256, 40), (512, 80), (1024, 160), (2048, 320)];

pub struct MelLoss {
    pub scales: Vec<MelScale>,
}

impl MelLoss {
    pub fn new(scales: &[(usize, usize)]) -> Result<Self> {
        Ok(Self { scales: scales.iter().map(|&(n, m)| MelScale::new(n, m)).collect::<Result<_>>()? })
    }

    pub fn standard() -> Result<Self> {
        Self::new(&MEL_SCALES)
    }

    /// Sum over scales of the mean absolute log-mel difference.
    pub fn forward(&self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        check_same(pred, target, "mel loss")?;
        let mut total = Tensor::scalar(0.0);
        for s in &self.scales {
            total = total.add(&s.log_mel(pred).sub(&s.log_mel(target)).abs().mean());
        }
        Ok(total)
    }
}

/// Mean over all sub-discriminators and layers of the mean absolute feature
/// difference.
pub fn feature_matching_loss(real: &[Vec<Tensor>], fake: &[Vec<Tensor>]) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Contract(format!("{} real vs {} fake feature lists", real.len(), fake.len())));
    }
    let mut terms = Vec::new();
    for (r, f) in real.iter().zip(fake) {
        if r.len() != f.len() || r.is_empty() {
            return Err(Error::Contract(format!("{} real vs {} fake layers", r.len(), f.len())));
        }
        for (a, b) in r.iter().zip(f) {
            check_same(a, b, "feature map")?;
            terms.push(a.sub(b).abs().mean());
        }
    }
    Ok(mean_of(terms))
}

/// Unweighted loss terms of one generator step, plus the weighted totals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv: f64,
    pub mag: f64,
    pub awp: f64,
    pub con: f64,
    pub ri: f64,
    pub mel: f64,
    pub fm: f64,
    /// Weighted sum without the adversarial and feature-matching terms.
    pub recon: f64,
    pub total: f64,
    pub disc: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.adv, self.mag, self.awp, self.con, self.ri, self.mel, self.fm, self.total, self.disc]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The seven generator terms as graph nodes.
pub struct GeneratorTerms {
    pub adv: Tensor,
    pub mag: Tensor,
    pub awp: Tensor,
    pub con: Tensor,
    pub ri: Tensor,
    pub mel: Tensor,
    pub fm: Tensor,
}

/// Weighted generator objective and its report.
pub fn generator_objective(t: &GeneratorTerms, w: &LossWeights) -> (Tensor, LossReport) {
    let recon = t
        .mag
        .scale(w.mag)
        .add(&t.awp.scale(w.awp))
        .add(&t.con.scale(w.con))
        .add(&t.ri.scale(w.ri))
        .add(&t.mel.scale(w.mel));
    let total = recon.add(&t.adv.scale(w.adv)).add(&t.fm.scale(w.fm));
    let report = LossReport {
        adv: t.adv.item(),
        mag: t.mag.item(),
        awp: t.awp.item(),
        con: t.con.item(),
        ri: t.ri.item(),
        mel: t.mel.item(),
        fm: t.fm.item(),
        recon: recon.item(),
        total: total.item(),
        disc: 0.0,
    };
    (total, report)
}
