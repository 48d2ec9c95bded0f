//! Bidirectional selective state-space block along the time axis.

use gsr_autograd::{Init, Param, ParamBuilder, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{LayerNorm, Linear};
use crate::ops::{causal_depthwise_conv1d, selective_scan};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MambaConfig {
    pub expand: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self { expand: 2, d_state: 16, d_conv: 4, dt_min: 1e-3, dt_max: 1e-1 }
    }
}

/// One scan direction over sequences `(S, T, C)`.
pub struct Mamba {
    pub in_proj: Linear,
    pub conv_w: Param,
    pub conv_b: Param,
    pub x_proj: Linear,
    pub dt_proj: Linear,
    pub a_log: Param,
    pub d: Param,
    pub out_proj: Linear,
    inner: usize,
    rank: usize,
    state: usize,
}

impl Mamba {
    pub fn new(pb: &ParamBuilder, channels: usize, cfg: &MambaConfig, seed: u64) -> Self {
        let inner = cfg.expand * channels;
        let rank = channels.div_ceil(16);
        let n = cfg.d_state;
        let dt_proj = Linear {
            weight: pb.param("dt_proj.weight", &[rank, inner], Init::Uniform(1.0 / (rank as f64).sqrt())),
            bias: Some(pb.param("dt_proj.bias", &[inner], Init::Values(dt_bias(inner, cfg, seed)))),
        };
        let a_log = (0..inner).flat_map(|_| (1..=n).map(|j| (j as f64).ln())).collect();
        Self {
            in_proj: Linear::new(&pb.sub("in_proj"), channels, 2 * inner, false),
            conv_w: pb.param("conv.weight", &[inner, cfg.d_conv], Init::FanIn(cfg.d_conv)),
            conv_b: pb.param("conv.bias", &[inner], Init::FanIn(cfg.d_conv)),
            x_proj: Linear::new(&pb.sub("x_proj"), inner, rank + 2 * n, false),
            dt_proj,
            a_log: pb.param("a_log", &[inner, n], Init::Values(a_log)),
            d: pb.param("d", &[inner], Init::Ones),
            out_proj: Linear::new(&pb.sub("out_proj"), inner, channels, false),
            inner,
            rank,
            state: n,
        }
    }

    pub fn forward(&self, h: &Tensor) -> Result<Tensor> {
        let (d, r, n) = (self.inner, self.rank, self.state);
        let xz = self.in_proj.forward(h);
        let (xi, z) = (xz.narrow(2, 0, d), xz.narrow(2, d, d));
        let xc = causal_depthwise_conv1d(&xi, &self.conv_w.tensor(), &self.conv_b.tensor()).silu();
        let dbc = self.x_proj.forward(&xc);
        let delta = self.dt_proj.forward(&dbc.narrow(2, 0, r)).softplus().clamp_min(1e-12);
        let b = dbc.narrow(2, r, n);
        let c = dbc.narrow(2, r + n, n);
        let a = self.a_log.tensor().exp().neg();
        let y = selective_scan(&xc, &delta, &a, &b, &c, &self.d.tensor())?;
        Ok(self.out_proj.forward(&y.mul(&z.silu())))
    }
}

/// Inverse-softplus of step sizes drawn log-uniformly in `[dt_min, dt_max]`.
fn dt_bias(inner: usize, cfg: &MambaConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (cfg.dt_min.ln(), cfg.dt_max.ln());
    (0..inner)
        .map(|_| {
            let dt: f64 = rng.gen_range(lo..hi).exp().max(1e-4);
            dt + (-(-dt).exp_m1()).ln()
        })
        .collect()
}

/// Forward and time-reversed scans over every `(batch, frequency)` fiber of a
/// `(B, C, T, F)` map, summed onto the input.
pub struct TimeMamba {
    pub norm: LayerNorm,
    pub fwd: Mamba,
    pub bwd: Mamba,
}

impl TimeMamba {
    pub fn new(pb: &ParamBuilder, channels: usize, cfg: &MambaConfig, seed: u64) -> Self {
        Self {
            norm: LayerNorm::new(&pb.sub("norm"), channels, 2),
            fwd: Mamba::new(&pb.sub("fwd"), channels, cfg, seed),
            bwd: Mamba::new(&pb.sub("bwd"), channels, cfg, seed.wrapping_add(1)),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t, f) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let seqs = x.permute(&[0, 3, 2, 1]).reshape(&[b * f, t, c]);
        let h = self.norm.forward(&seqs);
        let yf = self.fwd.forward(&h)?;
        let yb = self.bwd.forward(&h.flip(1))?.flip(1);
        let y = seqs.add(&yf.add(&yb));
        Ok(y.reshape(&[b, f, t, c]).permute(&[0, 3, 2, 1]))
    }
}
