//! Constant-Q transform as a direct bank of Hann-windowed complex exponentials.
//!
//! Every bin uses the same hop; frame `t` is centred on sample `t·hop` with
//! zero padding outside the signal. Kernels longer than `max_kernel_len` are
//! truncated to that length (their resolution is then coarser than constant-Q).

use std::f64::consts::PI;

use crate::error::{check_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CqtConfig {
    pub sample_rate: f64,
    pub fmin: f64,
    pub n_octaves: usize,
    pub bins_per_octave: usize,
    pub hop: usize,
    pub filter_scale: f64,
    pub max_kernel_len: usize,
}

impl Default for CqtConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            fmin: 31.25,
            n_octaves: 8,
            bins_per_octave: 12,
            hop: 256,
            filter_scale: 1.0,
            max_kernel_len: 16_000,
        }
    }
}

impl CqtConfig {
    pub fn n_bins(&self) -> usize {
        self.n_octaves * self.bins_per_octave
    }

    pub fn center_freq(&self, k: usize) -> f64 {
        self.fmin * 2f64.powf(k as f64 / self.bins_per_octave as f64)
    }

    pub fn n_frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    fn validate(&self) -> Result<()> {
        if self.n_octaves == 0 || self.bins_per_octave == 0 || self.hop == 0 || self.max_kernel_len == 0 {
            return Err(Error::Config("CQT sizes must be positive".into()));
        }
        let top = self.center_freq(self.n_bins() - 1);
        if !(self.fmin > 0.0 && top < self.sample_rate / 2.0) {
            return Err(Error::Config(format!("CQT bins span {}..{top} Hz, beyond Nyquist", self.fmin)));
        }
        if self.filter_scale <= 0.0 {
            return Err(Error::Config("filter_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Kernel {
    /// Conjugated, window-normalized taps.
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Precomputed filterbank for one configuration.
#[derive(Clone, Debug)]
pub struct Cqt {
    cfg: CqtConfig,
    kernels: Vec<Kernel>,
}

impl Cqt {
    pub fn new(cfg: CqtConfig) -> Result<Self> {
        cfg.validate()?;
        let q = cfg.filter_scale / (2f64.powf(1.0 / cfg.bins_per_octave as f64) - 1.0);
        let kernels = (0..cfg.n_bins())
            .map(|k| {
                let f = cfg.center_freq(k);
                let n = ((q * cfg.sample_rate / f).ceil() as usize).clamp(1, cfg.max_kernel_len);
                let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / n as f64).cos()).collect();
                let norm: f64 = w.iter().sum();
                let half = (n / 2) as f64;
                let (re, im) = w
                    .iter()
                    .enumerate()
                    .map(|(i, wi)| {
                        let th = 2.0 * PI * f * (i as f64 - half) / cfg.sample_rate;
                        (wi * th.cos() / norm, -wi * th.sin() / norm)
                    })
                    .unzip();
                Kernel { re, im }
            })
            .collect();
        Ok(Self { cfg, kernels })
    }

    pub fn config(&self) -> CqtConfig {
        self.cfg
    }

    pub fn longest_kernel(&self) -> usize {
        self.kernels.iter().map(|k| k.re.len()).max().unwrap_or(0)
    }

    pub fn kernel_len(&self, k: usize) -> usize {
        self.kernels[k].re.len()
    }

    /// Real and imaginary coefficients, each `frames × bins`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let frames = self.cfg.n_frames(x.len());
        let bins = self.cfg.n_bins();
        let mut re = vec![0.0; frames * bins];
        let mut im = vec![0.0; frames * bins];
        for (k, ker) in self.kernels.iter().enumerate() {
            let n = ker.re.len();
            let half = (n / 2) as isize;
            for t in 0..frames {
                let start = (t * self.cfg.hop) as isize - half;
                let lo = (-start).max(0) as usize;
                let hi = ((x.len() as isize - start).min(n as isize)).max(0) as usize;
                let (mut sr, mut si) = (0.0, 0.0);
                for i in lo..hi {
                    let v = x[(start + i as isize) as usize];
                    sr += v * ker.re[i];
                    si += v * ker.im[i];
                }
                re[t * bins + k] = sr;
                im[t * bins + k] = si;
            }
        }
        (re, im)
    }

    /// Transpose of [`Cqt::forward`] for a signal of `len` samples.
    pub fn adjoint(&self, gre: &[f64], gim: &[f64], len: usize) -> Vec<f64> {
        let frames = self.cfg.n_frames(len);
        let bins = self.cfg.n_bins();
        let mut gx = vec![0.0; len];
        for (k, ker) in self.kernels.iter().enumerate() {
            let n = ker.re.len();
            let half = (n / 2) as isize;
            for t in 0..frames {
                let (a, b) = (gre[t * bins + k], gim[t * bins + k]);
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let start = (t * self.cfg.hop) as isize - half;
                let lo = (-start).max(0) as usize;
                let hi = ((len as isize - start).min(n as isize)).max(0) as usize;
                for i in lo..hi {
                    gx[(start + i as isize) as usize] += a * ker.re[i] + b * ker.im[i];
                }
            }
        }
        gx
    }
}

/// CQT of a waveform: `(re, im)` grids of `frames × n_octaves·bins_per_octave`.
pub fn cqt(x: &[f64], cfg: CqtConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_finite(x)?;
    let bank = Cqt::new(cfg)?;
    let needed = bank.longest_kernel();
    if x.len() < needed {
        return Err(Error::TooShort { needed, got: x.len() });
    }
    Ok(bank.forward(x))
}
