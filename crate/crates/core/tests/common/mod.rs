//! Shared fixtures: tiny model configurations and synthetic signals.
#![allow(dead_code)]

use std::f64::consts::PI;

use gsr_autograd::Tensor;
use gsr_core::fan::FanParams;
use gsr_core::config::Config;
use gsr_core::mamba::MambaConfig;
use gsr_core::GeneratorConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator small enough for gradient checks and quick forward passes.
pub fn tiny_generator() -> GeneratorConfig {
    let mut c = GeneratorConfig::default();
    c.channels = 4;
    c.dense_depth = 1;
    c.bottleneck.blocks = 1;
    c.mamba = MambaConfig { d_state: 4, ..MambaConfig::default() };
    c
}

/// Full training stack at the smallest useful size.
pub fn tiny_config() -> Config {
    let mut c = Config::desk();
    c.model.channels = 4;
    c.model.dense_depth = 1;
    c.model.mamba.d_state = 4;
    c.bottleneck.blocks = 1;
    c.discriminator.mrd_channels = 2;
    c.discriminator.cqtd_channels = 2;
    c.discriminator.cqtd_max_kernel_len = 1024;
    c.train.segment = 4000;
    c.train.batch = 1;
    c
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

pub fn randn_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    Tensor::new(uniform(shape.iter().product(), seed, scale), shape)
}

/// Harmonic tone with a slow amplitude envelope.
pub fn voiced(n: usize, f0: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            let env = 0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin();
            (1..=8).map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.2 * env
        })
        .collect()
}

/// One-pole low-passed noise: broadband with a falling spectrum.
pub fn coloured_noise(n: usize, seed: u64) -> Vec<f64> {
    let white = uniform(n, seed, 0.5);
    let mut acc = 0.0;
    white
        .iter()
        .map(|w| {
            acc = 0.9 * acc + w;
            0.1 * acc
        })
        .collect()
}

/// Direct scalar-loop reference.
pub fn fan_oracle(x: &[f64], p: &FanParams) -> Vec<f64> {
    let mut cos = vec![0.0; p.d_p];
    let mut sin = vec![0.0; p.d_p];
    for j in 0..p.d_p {
        let mut acc = 0.0;
        for i in 0..p.d_x {
            acc += x[i] * p.w_p[i * p.d_p + j];
        }
        cos[j] = acc.cos();
        sin[j] = acc.sin();
    }
    let mut g = vec![0.0; p.d_pbar];
    for j in 0..p.d_pbar {
        let mut acc = p.b_pbar[j];
        for i in 0..p.d_x {
            acc += x[i] * p.w_pbar[i * p.d_pbar + j];
        }
        g[j] = 0.5 * acc * (1.0 + libm::erf(acc / std::f64::consts::SQRT_2));
    }
    [cos, sin, g].concat()
}

pub fn fan_params(d_x: usize, d_p: usize, d_pbar: usize, seed: u64) -> FanParams {
    FanParams {
        d_x,
        d_p,
        d_pbar,
        w_p: uniform(d_x * d_p, seed, 1.0),
        w_pbar: uniform(d_x * d_pbar, seed + 1, 1.0),
        b_pbar: uniform(d_pbar, seed + 2, 0.5),
    }
}

/// Midrank by counting.
fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided p-value by enumerating every sign assignment.
pub fn wilcoxon_oracle(d: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let ranks = rank_oracle(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for bits in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| bits >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (w, (2.0 * le.min(ge) as f64 / total).min(1.0))
}
