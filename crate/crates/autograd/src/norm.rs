//! Normalization layers and parametric ReLU.

use crate::shape::split_axis;
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

/// Normalizes `x` viewed as `[outer, n, inner]` over the middle axis, then
/// applies `gamma[j]·x̂ + beta[j]` with `j` indexing `outer` (`per_outer`) or
/// the middle axis.
fn normalize(
    x: &Tensor,
    outer: usize,
    n: usize,
    inner: usize,
    gamma: &Tensor,
    beta: &Tensor,
    affine_on_outer: Option<usize>,
) -> Tensor {
    let xd = x.data();
    let mut xhat = vec![0.0; xd.len()];
    let mut inv_std = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * n + l) * inner + i;
            let mean = (0..n).map(|l| xd[idx(l)]).sum::<f64>() / n as f64;
            let var = (0..n).map(|l| (xd[idx(l)] - mean).powi(2)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[o * inner + i] = s;
            for l in 0..n {
                xhat[idx(l)] = (xd[idx(l)] - mean) * s;
            }
        }
    }
    let coef = move |o: usize, l: usize| match affine_on_outer {
        Some(channels) => o % channels,
        None => l,
    };
    let (gd, bd) = (gamma.data(), beta.data());
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for l in 0..n {
            let j = coef(o, l);
            for i in 0..inner {
                let k = (o * n + l) * inner + i;
                out[k] = gd[j] * xhat[k] + bd[j];
            }
        }
    }
    let ga = gamma.data_rc();
    let (glen, blen) = (gamma.numel(), beta.numel());
    Tensor::from_op(out, x.shape(), &[x, gamma, beta], move |g, needs| {
        let mut gx = needs[0].then(|| vec![0.0; g.len()]);
        let mut ggamma = needs[1].then(|| vec![0.0; glen]);
        let mut gbeta = needs[2].then(|| vec![0.0; blen]);
        for o in 0..outer {
            for i in 0..inner {
                let idx = |l: usize| (o * n + l) * inner + i;
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for l in 0..n {
                    let k = idx(l);
                    let j = coef(o, l);
                    let gh = g[k] * ga[j];
                    m1 += gh;
                    m2 += gh * xhat[k];
                    if let Some(gg) = ggamma.as_mut() {
                        gg[j] += g[k] * xhat[k];
                    }
                    if let Some(gb) = gbeta.as_mut() {
                        gb[j] += g[k];
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    m1 /= n as f64;
                    m2 /= n as f64;
                    let s = inv_std[o * inner + i];
                    for l in 0..n {
                        let k = idx(l);
                        let gh = g[k] * ga[coef(o, l)];
                        gx[k] = s * (gh - m1 - xhat[k] * m2);
                    }
                }
            }
        }
        vec![gx, ggamma, gbeta]
    })
}

impl Tensor {
    /// Instance normalization of `(B, C, …)` over all trailing axes, with
    /// per-channel affine `gamma`, `beta` of shape `(C)`.
    pub fn instance_norm(&self, gamma: &Tensor, beta: &Tensor) -> Tensor {
        assert!(self.rank() >= 3);
        let (b, c) = (self.dim(0), self.dim(1));
        assert_eq!(gamma.numel(), c);
        assert_eq!(beta.numel(), c);
        let n = self.numel() / (b * c);
        normalize(self, b * c, n, 1, gamma, beta, Some(c))
    }

    /// Layer normalization over `axis` with affine parameters of that axis' length.
    pub fn layer_norm(&self, axis: usize, gamma: &Tensor, beta: &Tensor) -> Tensor {
        let (outer, n, inner) = split_axis(self.shape(), axis);
        assert_eq!(gamma.numel(), n);
        assert_eq!(beta.numel(), n);
        normalize(self, outer, n, inner, gamma, beta, None)
    }

    /// PReLU with one slope per channel (axis 1) or a single shared slope.
    pub fn prelu(&self, alpha: &Tensor) -> Tensor {
        let c = if self.rank() >= 2 { self.dim(1) } else { 1 };
        let na = alpha.numel();
        assert!(na == 1 || na == c, "prelu slope count {na} for {:?}", self.shape());
        let b = self.dim(0);
        let inner = self.numel() / (b * c).max(1);
        let ch = move |k: usize| if na == 1 { 0 } else { (k / inner) % c };
        let xd = self.data();
        let ad = alpha.data();
        let out: Vec<f64> = xd
            .iter()
            .enumerate()
            .map(|(k, &v)| if v > 0.0 { v } else { ad[ch(k)] * v })
            .collect();
        let (xa, aa) = (self.data_rc(), alpha.data_rc());
        Tensor::from_op(out, self.shape(), &[self, alpha], move |g, needs| {
            let gx = needs[0].then(|| {
                g.iter()
                    .enumerate()
                    .map(|(k, &gk)| if xa[k] > 0.0 { gk } else { aa[ch(k)] * gk })
                    .collect()
            });
            let ga = needs[1].then(|| {
                let mut ga = vec![0.0; na];
                for (k, &gk) in g.iter().enumerate() {
                    if xa[k] <= 0.0 {
                        ga[ch(k)] += gk * xa[k];
                    }
                }
                ga
            });
            vec![gx, ga]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let x = Tensor::new((0..2 * 3 * 20).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect(), &[2, 3, 4, 5]);
        let y = x.instance_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]));
        for chunk in y.data().chunks(20) {
            let m: f64 = chunk.iter().sum::<f64>() / 20.0;
            let v: f64 = chunk.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn layer_norm_middle_axis() {
        let x = Tensor::new((0..24).map(|i| (i * i) as f64).collect(), &[2, 3, 4]);
        let y = x.layer_norm(1, &Tensor::ones(&[3]), &Tensor::zeros(&[3]));
        for o in 0..2 {
            for i in 0..4 {
                let m: f64 = (0..3).map(|l| y.data()[(o * 3 + l) * 4 + i]).sum::<f64>();
                assert!(m.abs() < 1e-10);
            }
        }
    }
}
