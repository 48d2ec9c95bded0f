//! Signal-fidelity metrics that need no learned model.

use crate::error::{check_finite, Error, Result};
use crate::stft::{Stft, StftConfig};

pub const LSD_FLOOR: f64 = 1e-8;
pub const SI_SNR_CAP_DB: f64 = 80.0;

/// STFT used by [`lsd`]: 2048-point Hann, hop 512.
pub const LSD_STFT: StftConfig = StftConfig::new(2048, 512, 2048);

/// Log-spectral distance between magnitude grids (`frames × bins`).
pub fn lsd_from_magnitudes(reference: &[f64], estimate: &[f64], bins: usize) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    if reference.is_empty() || bins == 0 || reference.len() % bins != 0 {
        return Err(Error::Empty);
    }
    let frames = reference.len() / bins;
    let total: f64 = reference
        .chunks(bins)
        .zip(estimate.chunks(bins))
        .map(|(r, e)| {
            let ms: f64 = r
                .iter()
                .zip(e)
                .map(|(a, b)| (a.max(LSD_FLOOR).log10() - b.max(LSD_FLOOR).log10()).powi(2))
                .sum::<f64>()
                / bins as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// Log-spectral distance with the given STFT geometry.
pub fn lsd_with(reference: &[f64], estimate: &[f64], cfg: StftConfig) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    if reference.is_empty() {
        return Err(Error::Empty);
    }
    check_finite(reference)?;
    check_finite(estimate)?;
    let engine = Stft::new(cfg)?;
    let mag = |x: &[f64]| {
        let (re, im) = engine.forward(x);
        re.iter().zip(&im).map(|(a, b)| a.hypot(*b)).collect::<Vec<_>>()
    };
    lsd_from_magnitudes(&mag(reference), &mag(estimate), cfg.n_bins())
}

pub fn lsd(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    lsd_with(reference, estimate, LSD_STFT)
}

/// Scale-invariant SNR in dB (zero-mean), capped at ±80 dB.
pub fn si_snr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    if reference.is_empty() {
        return Err(Error::Empty);
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (mr, me) = (mean(reference), mean(estimate));
    let r: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::ZeroPower("reference"));
    }
    let alpha = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let (mut ts, mut ns) = (0.0, 0.0);
    for (a, b) in r.iter().zip(&e) {
        let t = alpha * a;
        ts += t * t;
        ns += (b - t) * (b - t);
    }
    let db = if ns == 0.0 {
        SI_SNR_CAP_DB
    } else if ts == 0.0 {
        -SI_SNR_CAP_DB
    } else {
        10.0 * (ts / ns).log10()
    };
    Ok(db.clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}
