//! Slaney-style mel filterbanks and log-mel spectrograms.

use crate::error::{check_finite, Error, Result};
use crate::stft::{Stft, StftConfig};

/// Floor applied to mel energies before the logarithm.
pub const MEL_FLOOR: f64 = 1e-5;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(f: f64) -> f64 {
    if f < MIN_LOG_HZ {
        f / F_SP
    } else {
        MIN_LOG_MEL + (f / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    if m < MIN_LOG_MEL {
        m * F_SP
    } else {
        MIN_LOG_HZ * ((m - MIN_LOG_MEL) * log_step()).exp()
    }
}

/// Triangular filters with area normalization, `n_mels × (n_fft/2 + 1)` row-major.
pub fn mel_filterbank(sample_rate: f64, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    if n_mels == 0 || n_mels > bins {
        return Err(Error::Config(format!("n_mels must lie in 1..={bins} for n_fft {n_fft}, got {n_mels}")));
    }
    if !(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0) {
        return Err(Error::Config(format!("mel band [{fmin}, {fmax}] Hz invalid")));
    }
    let fft_freqs: Vec<f64> = (0..bins).map(|k| k as f64 * sample_rate / n_fft as f64).collect();
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in fft_freqs.iter().enumerate() {
            let lower = (f - lo) / (mid - lo);
            let upper = (hi - f) / (hi - mid);
            fb[m * bins + k] = lower.min(upper).max(0.0) * norm;
        }
    }
    Ok(fb)
}

/// Natural-log mel energies of the STFT magnitude (`frames × n_mels`),
/// Hann window of `n_fft`, centred framing.
pub fn mel_spectrogram(x: &[f64], sample_rate: f64, n_fft: usize, hop: usize, n_mels: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    check_finite(x)?;
    let cfg = StftConfig::new(n_fft, hop, n_fft);
    let engine = Stft::new(cfg)?;
    let fb = mel_filterbank(sample_rate, n_fft, n_mels, 0.0, sample_rate / 2.0)?;
    let (re, im) = engine.forward(x);
    let bins = cfg.n_bins();
    let frames = cfg.n_frames(x.len());
    let mut out = vec![0.0; frames * n_mels];
    for t in 0..frames {
        for m in 0..n_mels {
            let e: f64 = (0..bins)
                .map(|k| fb[m * bins + k] * re[t * bins + k].hypot(im[t * bins + k]))
                .sum();
            out[t * n_mels + m] = e.max(MEL_FLOOR).ln();
        }
    }
    Ok(out)
}
