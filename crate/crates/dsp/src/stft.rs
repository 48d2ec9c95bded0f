//! Short-time Fourier transform, its inverse, and the adjoints of both.
//!
//! The adjoints are exact transposes of the linear maps (waveform → real and
//! imaginary parts, and back), which is what reverse-mode differentiation
//! through these transforms needs.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_finite, Error, Result};

/// Framing geometry. The window is a periodic Hann of `win_length` samples,
/// zero-padded symmetrically to `n_fft`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    /// Reflect-pad `n_fft / 2` samples on both sides so frame `t` is centred on sample `t·hop`.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::speech()
    }
}

impl StftConfig {
    /// 400-sample Hann window, hop 100, 400-point FFT, centred.
    pub const fn speech() -> Self {
        Self { n_fft: 400, hop: 100, win_length: 400, center: true }
    }

    pub const fn new(n_fft: usize, hop: usize, win_length: usize) -> Self {
        Self { n_fft, hop, win_length, center: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            return Err(Error::Config(format!("n_fft must be even and >= 2, got {}", self.n_fft)));
        }
        if self.hop == 0 || self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Config(format!(
                "need 0 < hop and 0 < win_length <= n_fft, got hop {} win {} n_fft {}",
                self.hop, self.win_length, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if self.center {
            len / self.hop + 1
        } else if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    fn pad(&self) -> usize {
        if self.center {
            self.n_fft / 2
        } else {
            0
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Maps a padded position to the source index under reflection padding.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Complex time-frequency grid stored frame-major (`frames × bins`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub cfg: StftConfig,
}

impl ComplexSpectrogram {
    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }

    /// Phase in `(−π, π]`.
    pub fn phase(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| wrap_phase(i.atan2(*r))).collect()
    }

    pub fn from_polar(mag: &[f64], phase: &[f64], frames: usize, cfg: StftConfig) -> Result<Self> {
        let bins = cfg.n_bins();
        if mag.len() != frames * bins || phase.len() != mag.len() {
            return Err(Error::Geometry(format!(
                "polar grids of {} / {} values for {frames}x{bins}",
                mag.len(),
                phase.len()
            )));
        }
        let re = mag.iter().zip(phase).map(|(m, p)| m * p.cos()).collect();
        let im = mag.iter().zip(phase).map(|(m, p)| m * p.sin()).collect();
        Ok(Self { frames, bins, re, im, cfg })
    }
}

/// Folds `−π` onto `π` so phases lie in `(−π, π]`.
pub fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Precomputed window and FFT plans for one [`StftConfig`].
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut window = vec![0.0; cfg.n_fft];
        let left = (cfg.n_fft - cfg.win_length) / 2;
        window[left..left + cfg.win_length].copy_from_slice(&hann(cfg.win_length));
        let mut planner = FftPlanner::new();
        Ok(Self { cfg, window, fwd: planner.plan_fft_forward(cfg.n_fft), inv: planner.plan_fft_inverse(cfg.n_fft) })
    }

    pub fn config(&self) -> StftConfig {
        self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn padded(&self, x: &[f64]) -> Vec<f64> {
        let p = self.cfg.pad();
        let n = x.len();
        (0..n + 2 * p).map(|j| x[reflect(j as isize - p as isize, n)]).collect()
    }

    /// Real and imaginary parts, each `frames × bins`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let frames = self.cfg.n_frames(x.len());
        let bins = self.cfg.n_bins();
        let n = self.cfg.n_fft;
        let xp = self.padded(x);
        let mut re = vec![0.0; frames * bins];
        let mut im = vec![0.0; frames * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        for t in 0..frames {
            let seg = &xp[t * self.cfg.hop..t * self.cfg.hop + n];
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(s * w, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                re[t * bins + k] = buf[k].re;
                im[t * bins + k] = buf[k].im;
            }
        }
        (re, im)
    }

    /// Transpose of [`Stft::forward`] for a signal of `len` samples.
    pub fn forward_adjoint(&self, gre: &[f64], gim: &[f64], len: usize) -> Vec<f64> {
        let frames = self.cfg.n_frames(len);
        let bins = self.cfg.n_bins();
        let n = self.cfg.n_fft;
        let p = self.cfg.pad();
        let mut gp = vec![0.0; len + 2 * p];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        for t in 0..frames {
            buf.fill(Complex64::new(0.0, 0.0));
            for k in 0..bins {
                buf[k] = Complex64::new(gre[t * bins + k], gim[t * bins + k]);
            }
            // Unnormalized inverse FFT gives sum_k z_k·e^{+iθ}; its real part is the transpose.
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let dst = &mut gp[t * self.cfg.hop..t * self.cfg.hop + n];
            for ((d, b), &w) in dst.iter_mut().zip(&buf).zip(&self.window) {
                *d += b.re * w;
            }
        }
        let mut gx = vec![0.0; len];
        for (j, v) in gp.iter().enumerate() {
            gx[reflect(j as isize - p as isize, len)] += v;
        }
        gx
    }

    fn window_sum(&self, frames: usize) -> Vec<f64> {
        let n = self.cfg.n_fft;
        let mut ws = vec![0.0; (frames.max(1) - 1) * self.cfg.hop + n];
        for t in 0..frames {
            for (i, w) in self.window.iter().enumerate() {
                ws[t * self.cfg.hop + i] += w * w;
            }
        }
        ws
    }

    /// Weighted overlap-add inverse, normalized by the summed squared window,
    /// truncated or zero-padded to `out_len`.
    pub fn inverse(&self, re: &[f64], im: &[f64], frames: usize, out_len: usize) -> Vec<f64> {
        let bins = self.cfg.n_bins();
        let n = self.cfg.n_fft;
        let ws = self.window_sum(frames);
        let mut y = vec![0.0; ws.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..frames {
            hermitian_fill(&mut buf, &re[t * bins..(t + 1) * bins], &im[t * bins..(t + 1) * bins]);
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let dst = &mut y[t * self.cfg.hop..t * self.cfg.hop + n];
            for ((d, b), &w) in dst.iter_mut().zip(&buf).zip(&self.window) {
                *d += b.re * scale * w;
            }
        }
        let p = self.cfg.pad();
        (0..out_len)
            .map(|m| {
                let j = m + p;
                if j + p < y.len() && ws[j] > 1e-11 {
                    y[j] / ws[j]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Transpose of [`Stft::inverse`].
    pub fn inverse_adjoint(&self, g: &[f64], frames: usize) -> (Vec<f64>, Vec<f64>) {
        let bins = self.cfg.n_bins();
        let n = self.cfg.n_fft;
        let ws = self.window_sum(frames);
        let p = self.cfg.pad();
        let mut gy = vec![0.0; ws.len()];
        for (m, &gm) in g.iter().enumerate() {
            let j = m + p;
            if j + p < gy.len() && ws[j] > 1e-11 {
                gy[j] = gm / ws[j];
            }
        }
        let mut gre = vec![0.0; frames * bins];
        let mut gim = vec![0.0; frames * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..frames {
            let src = &gy[t * self.cfg.hop..t * self.cfg.hop + n];
            for ((b, &s), &w) in buf.iter_mut().zip(src).zip(&self.window) {
                *b = Complex64::new(s * w * scale, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
                gre[t * bins + k] = c * buf[k].re;
                gim[t * bins + k] = if k == 0 || k == n / 2 { 0.0 } else { c * buf[k].im };
            }
        }
        (gre, gim)
    }
}

/// Full Hermitian spectrum from the one-sided half; imaginary parts of the DC
/// and Nyquist bins are ignored.
fn hermitian_fill(buf: &mut [Complex64], re: &[f64], im: &[f64]) {
    let n = buf.len();
    let half = n / 2;
    buf[0] = Complex64::new(re[0], 0.0);
    buf[half] = Complex64::new(re[half], 0.0);
    for k in 1..half {
        buf[k] = Complex64::new(re[k], im[k]);
        buf[n - k] = Complex64::new(re[k], -im[k]);
    }
}

/// STFT of a waveform.
pub fn stft(x: &[f64], cfg: StftConfig) -> Result<ComplexSpectrogram> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    check_finite(x)?;
    let engine = Stft::new(cfg)?;
    if cfg.n_frames(x.len()) == 0 {
        return Err(Error::TooShort { needed: cfg.n_fft, got: x.len() });
    }
    let (re, im) = engine.forward(x);
    Ok(ComplexSpectrogram { frames: cfg.n_frames(x.len()), bins: cfg.n_bins(), re, im, cfg })
}

/// Inverse STFT to exactly `out_len` samples.
pub fn istft(s: &ComplexSpectrogram, cfg: StftConfig, out_len: usize) -> Result<Vec<f64>> {
    if s.cfg != cfg || s.bins != cfg.n_bins() || s.re.len() != s.frames * s.bins || s.im.len() != s.re.len() {
        return Err(Error::Geometry(format!(
            "spectrogram {}x{} made with {:?}, asked to invert with {:?}",
            s.frames, s.bins, s.cfg, cfg
        )));
    }
    let engine = Stft::new(cfg)?;
    Ok(engine.inverse(&s.re, &s.im, s.frames, out_len))
}

/// Element-wise `mag^exponent`.
pub fn compress_magnitude(mag: &[f64], exponent: f64) -> Result<Vec<f64>> {
    check_exponent(exponent)?;
    if let Some((index, &value)) = mag.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeMagnitude { index, value });
    }
    check_finite(mag)?;
    Ok(mag.iter().map(|m| m.powf(exponent)).collect())
}

/// Element-wise `cmag^(1/exponent)`.
pub fn decompress_magnitude(cmag: &[f64], exponent: f64) -> Result<Vec<f64>> {
    check_exponent(exponent)?;
    if let Some((index, &value)) = cmag.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeMagnitude { index, value });
    }
    check_finite(cmag)?;
    Ok(cmag.iter().map(|m| m.powf(1.0 / exponent)).collect())
}

fn check_exponent(e: f64) -> Result<()> {
    if e > 0.0 && e <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("compression exponent must lie in (0, 1], got {e}")))
    }
}
