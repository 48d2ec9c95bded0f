//! Low-pass IIR design (Butterworth, Chebyshev type I) as second-order sections.
//!
//! Analog prototype poles are scaled to the pre-warped cutoff and mapped with
//! the bilinear transform. Filtering is a single forward pass through cascaded
//! transposed direct-form II biquads, starting from the steady state of a
//! constant input equal to the first sample.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFamily {
    Butterworth,
    Chebyshev1,
}

/// One biquad: `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

/// Low-pass design. `ripple_db` is used by Chebyshev type I only.
pub fn design_lowpass(family: FilterFamily, order: usize, cutoff_hz: f64, fs: f64, ripple_db: f64) -> Result<Vec<Biquad>> {
    if order == 0 {
        return Err(Error::Config("filter order must be positive".into()));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::Config(format!("cutoff {cutoff_hz} Hz outside (0, {})", fs / 2.0)));
    }
    let (poles, mut gain) = match family {
        FilterFamily::Butterworth => {
            let poles: Vec<Complex64> = (0..order)
                .map(|k| Complex64::from_polar(1.0, PI * (2 * k + order + 1) as f64 / (2 * order) as f64))
                .collect();
            (poles, 1.0)
        }
        FilterFamily::Chebyshev1 => {
            if ripple_db <= 0.0 {
                return Err(Error::Config("Chebyshev ripple must be positive".into()));
            }
            let eps = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
            let mu = (1.0 / eps).asinh() / order as f64;
            let poles: Vec<Complex64> = (0..order)
                .map(|k| {
                    let th = PI * (2 * k + 1) as f64 / (2 * order) as f64;
                    Complex64::new(-mu.sinh() * th.sin(), mu.cosh() * th.cos())
                })
                .collect();
            let mut g = poles.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * -p).re;
            if order % 2 == 0 {
                g /= (1.0 + eps * eps).sqrt();
            }
            (poles, g)
        }
    };
    let fs2 = 2.0 * fs;
    let warped = fs2 * (PI * cutoff_hz / fs).tan();
    let analog: Vec<Complex64> = poles.iter().map(|p| p * warped).collect();
    gain *= warped.powi(order as i32);
    let digital: Vec<Complex64> = analog.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    gain /= analog.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p)).re;
    if let Some(m) = digital.iter().map(|p| p.norm()).find(|m| *m >= 1.0) {
        return Err(Error::UnstableFilter(m));
    }

    // Pair each upper-half-plane pole with its conjugate; a lone real pole
    // (odd order) gets a first-order section.
    let mut complex: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 1e-12).collect();
    complex.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let real: Vec<f64> = digital.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    let mut sos = Vec::new();
    for r in real.chunks(2) {
        match r {
            [p] => sos.push(Biquad { b: [1.0, 1.0, 0.0], a: [1.0, -p, 0.0] }),
            [p, q] => sos.push(Biquad { b: [1.0, 2.0, 1.0], a: [1.0, -(p + q), p * q] }),
            _ => unreachable!(),
        }
    }
    for p in complex {
        sos.push(Biquad { b: [1.0, 2.0, 1.0], a: [1.0, -2.0 * p.re, p.norm_sqr()] });
    }
    if sos.len() * 2 < order {
        return Err(Error::Config("pole pairing failed".into()));
    }
    for c in sos[0].b.iter_mut() {
        *c *= gain;
    }
    Ok(sos)
}

/// Frequency response of the cascade at `freq_hz`.
pub fn sos_response(sos: &[Biquad], freq_hz: f64, fs: f64) -> Complex64 {
    let w = 2.0 * PI * freq_hz / fs;
    let z1 = Complex64::from_polar(1.0, -w);
    let z2 = z1 * z1;
    sos.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
        acc * (s.b[0] + z1 * s.b[1] + z2 * s.b[2]) / (s.a[0] + z1 * s.a[1] + z2 * s.a[2])
    })
}

/// Filters `x` through the cascade, with each section's state initialized to
/// the steady state for a constant input `x[0]`.
pub fn sosfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut level = x.first().copied().unwrap_or(0.0);
    for s in sos {
        let [b0, b1, b2] = s.b;
        let [_, a1, a2] = s.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let mut z2 = level * (b2 - a2 * dc);
        let mut z1 = level * (b1 - a1 * dc) + z2;
        for v in y.iter_mut() {
            let xin = *v;
            let out = b0 * xin + z1;
            z1 = b1 * xin - a1 * out + z2;
            z2 = b2 * xin - a2 * out;
            *v = out;
        }
        level *= dc;
    }
    y
}
