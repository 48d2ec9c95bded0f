use std::f64::consts::PI;

use gsr_dsp::stft::{hann, Stft};
use gsr_dsp::{compress_magnitude, decompress_magnitude, istft, stft, StftConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn frame_and_bin_counts() {
    let s = stft(&vec![0.1; 24_000], StftConfig::speech()).unwrap();
    assert_eq!((s.frames, s.bins), (241, 201));
    // frame-count oracle floor(L/hop) + 1 for other lengths
    for len in [1000, 1050, 1099, 24_001] {
        let s = stft(&vec![0.1; len], StftConfig::speech()).unwrap();
        assert_eq!(s.frames, len / 100 + 1);
    }
}

#[test]
fn zero_in_zero_out() {
    let s = stft(&vec![0.0; 4000], StftConfig::speech()).unwrap();
    assert!(s.re.iter().chain(&s.im).all(|v| *v == 0.0));
    let y = istft(&s, StftConfig::speech(), 4000).unwrap();
    assert!(y.iter().all(|v| *v == 0.0));
}

#[test]
fn sinusoid_peaks_at_its_bin() {
    let x: Vec<f64> = (0..8000).map(|n| (2.0 * PI * 2000.0 * n as f64 / 16_000.0).sin()).collect();
    let s = stft(&x, StftConfig::speech()).unwrap();
    let mag = s.magnitude();
    // Edge frames overlap the reflected padding, which is not a continuation
    // of the sinusoid.
    for t in 2..s.frames - 2 {
        let row = &mag[t * s.bins..(t + 1) * s.bins];
        let arg = (0..s.bins).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
        assert_eq!(arg, 50, "frame {t}");
    }
}

#[test]
fn closed_form_dft_of_windowed_sinusoid() {
    // Bin 50 of a Hann-windowed cosine at exactly bin 50 has magnitude N/4.
    let x: Vec<f64> = (0..4000).map(|n| (2.0 * PI * 50.0 * n as f64 / 400.0).cos()).collect();
    let s = stft(&x, StftConfig::speech()).unwrap();
    let mag = s.magnitude();
    for t in 2..s.frames - 2 {
        assert!((mag[t * 201 + 50] - 100.0).abs() < 1e-9);
        assert!(mag[t * 201 + 52] < 1e-9);
    }
}

#[test]
fn round_trip_random_signal() {
    let x = noise(24_000, 1);
    let s = stft(&x, StftConfig::speech()).unwrap();
    let y = istft(&s, StftConfig::speech(), x.len()).unwrap();
    let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "max error {err}");
}

#[test]
fn round_trip_non_hop_multiple_and_prefix() {
    let x = noise(3_333, 2);
    let s = stft(&x, StftConfig::speech()).unwrap();
    let full = istft(&s, StftConfig::speech(), x.len()).unwrap();
    let natural = (s.frames - 1) * 100;
    for i in 0..natural {
        assert!((full[i] - x[i]).abs() < 1e-9);
    }
    let short = istft(&s, StftConfig::speech(), 1000).unwrap();
    assert_eq!(&short[..], &full[..1000]);
}

#[test]
fn mismatched_geometry_is_rejected() {
    let s = stft(&noise(2000, 3), StftConfig::speech()).unwrap();
    assert!(istft(&s, StftConfig::new(512, 128, 512), 2000).is_err());
}

#[test]
fn empty_and_nan_inputs_are_rejected() {
    assert!(stft(&[], StftConfig::speech()).is_err());
    assert!(stft(&[0.0, f64::NAN, 1.0], StftConfig::speech()).is_err());
}

#[test]
fn parseval_within_one_percent() {
    let x = noise(160_000, 4);
    let cfg = StftConfig::speech();
    let s = stft(&x, cfg).unwrap();
    let n = cfg.n_fft;
    let mut spec_energy = 0.0;
    for t in 0..s.frames {
        for k in 0..s.bins {
            let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            let i = t * s.bins + k;
            spec_energy += c * (s.re[i] * s.re[i] + s.im[i] * s.im[i]);
        }
    }
    let wenergy: f64 = hann(n).iter().map(|w| w * w).sum();
    let estimate = spec_energy * cfg.hop as f64 / (n as f64 * wenergy);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    assert!((estimate / energy - 1.0).abs() < 0.01, "{estimate} vs {energy}");
}

#[test]
fn adjoints_satisfy_dot_product_identity() {
    for cfg in [StftConfig::speech(), StftConfig::new(512, 50, 240), StftConfig { center: false, ..StftConfig::speech() }] {
        let engine = Stft::new(cfg).unwrap();
        let len = 1_234;
        let x = noise(len, 5);
        let (re, im) = engine.forward(&x);
        let gre = noise(re.len(), 6);
        let gim = noise(im.len(), 7);
        let lhs = dot(&re, &gre) + dot(&im, &gim);
        let rhs = dot(&x, &engine.forward_adjoint(&gre, &gim, len));
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{cfg:?}: {lhs} vs {rhs}");

        let frames = cfg.n_frames(len);
        let y = engine.inverse(&gre, &gim, frames, len + 37);
        let gy = noise(y.len(), 8);
        let (are, aim) = engine.inverse_adjoint(&gy, frames);
        let lhs = dot(&y, &gy);
        let rhs = dot(&gre, &are) + dot(&gim, &aim);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{cfg:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn compression_fixed_points_and_errors() {
    for e in [0.3, 0.5, 1.0] {
        assert_eq!(compress_magnitude(&[1.0, 0.0], e).unwrap(), vec![1.0, 0.0]);
    }
    assert!(compress_magnitude(&[-0.1], 0.3).is_err());
    assert!(compress_magnitude(&[0.5], 0.0).is_err());
    assert!(decompress_magnitude(&[-1.0], 0.3).is_err());
}

proptest! {
    #[test]
    fn stft_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let w1 = noise(1500, seed);
        let w2 = noise(1500, seed + 1);
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(p, q)| a * p + b * q).collect();
        let cfg = StftConfig::speech();
        let (s1, s2, sm) = (stft(&w1, cfg).unwrap(), stft(&w2, cfg).unwrap(), stft(&mix, cfg).unwrap());
        for i in 0..sm.re.len() {
            prop_assert!((sm.re[i] - (a * s1.re[i] + b * s2.re[i])).abs() < 1e-6);
            prop_assert!((sm.im[i] - (a * s1.im[i] + b * s2.im[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn compress_decompress_inverse(m in prop::collection::vec(0.0f64..10.0, 1..64), e in 0.05f64..1.0) {
        let back = decompress_magnitude(&compress_magnitude(&m, e).unwrap(), e).unwrap();
        for (x, y) in m.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-300) || (x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn istft_inverts_stft_on_hop_multiples(frames in 5usize..40, seed in 0u64..100) {
        let x = noise(frames * 100, seed);
        let s = stft(&x, StftConfig::speech()).unwrap();
        let y = istft(&s, StftConfig::speech(), x.len()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
