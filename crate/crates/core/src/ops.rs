//! Fused differentiable operations that are awkward or slow to express as
//! compositions of primitive tensor ops.

use std::f64::consts::PI;
use std::rc::Rc;

use gsr_autograd::Tensor;
use gsr_dsp::cqt::Cqt;
use gsr_dsp::Stft;

use crate::{Error, Result};

/// Selective state-space scan over sequences `u: (S, T, D)`.
///
/// `h_t = exp(Δ_t·A)·h_{t−1} + Δ_t·B_t·u_t`, `y_t = C_t·h_t + D·u_t`, with
/// `delta: (S, T, D)`, `a: (D, N)`, `b, c: (S, T, N)` and skip `d: (D)`.
/// Hidden states are recomputed in the backward pass, one sequence at a time.
pub fn selective_scan(u: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor, d: &Tensor) -> Result<Tensor> {
    if u.rank() != 3 || delta.shape() != u.shape() {
        return Err(Error::Shape(format!("scan input {:?} with delta {:?}", u.shape(), delta.shape())));
    }
    let (s, t, dd) = (u.dim(0), u.dim(1), u.dim(2));
    if a.rank() != 2 || a.dim(0) != dd {
        return Err(Error::Shape(format!("scan A {:?} for width {dd}", a.shape())));
    }
    let n = a.dim(1);
    if b.shape() != [s, t, n] || c.shape() != [s, t, n] || d.shape() != [dd] {
        return Err(Error::Shape(format!(
            "scan B {:?}, C {:?}, D {:?} for u {:?} and state {n}",
            b.shape(),
            c.shape(),
            d.shape(),
            u.shape()
        )));
    }
    if let Some((i, &v)) = delta.data().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveDelta(v, i));
    }
    Ok(scan_unchecked(u, delta, a, b, c, d))
}

struct ScanInputs {
    u: Vec<f64>,
    delta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    t: usize,
    dd: usize,
    n: usize,
}

impl ScanInputs {
    /// Runs one sequence, writing outputs and (optionally) the state trajectory
    /// `(T + 1) × D × N` with `h_0 = 0` first.
    fn run(&self, seq: usize, y: &mut [f64], traj: Option<&mut Vec<f64>>) {
        let (t, dd, n) = (self.t, self.dd, self.n);
        let mut h = vec![0.0; dd * n];
        let mut traj = traj;
        if let Some(tr) = traj.as_deref_mut() {
            tr.clear();
            tr.extend_from_slice(&h);
        }
        for step in 0..t {
            let row = seq * t + step;
            let (ub, db) = (&self.u[row * dd..(row + 1) * dd], &self.delta[row * dd..(row + 1) * dd]);
            let (bb, cb) = (&self.b[row * n..(row + 1) * n], &self.c[row * n..(row + 1) * n]);
            for k in 0..dd {
                let (uk, dk) = (ub[k], db[k]);
                let hk = &mut h[k * n..(k + 1) * n];
                let ak = &self.a[k * n..(k + 1) * n];
                let mut acc = self.d[k] * uk;
                for j in 0..n {
                    hk[j] = (dk * ak[j]).exp() * hk[j] + dk * bb[j] * uk;
                    acc += cb[j] * hk[j];
                }
                y[row * dd + k] = acc;
            }
            if let Some(tr) = traj.as_deref_mut() {
                tr.extend_from_slice(&h);
            }
        }
    }
}

fn scan_unchecked(u: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor, d: &Tensor) -> Tensor {
    let (s, t, dd) = (u.dim(0), u.dim(1), u.dim(2));
    let n = a.dim(1);
    let inp = Rc::new(ScanInputs {
        u: u.to_vec(),
        delta: delta.to_vec(),
        a: a.to_vec(),
        b: b.to_vec(),
        c: c.to_vec(),
        d: d.to_vec(),
        t,
        dd,
        n,
    });
    let mut y = vec![0.0; s * t * dd];
    for seq in 0..s {
        inp.run(seq, &mut y, None);
    }
    Tensor::from_op(y, u.shape(), &[u, delta, a, b, c, d], move |g, _| {
        let mut gu = vec![0.0; s * t * dd];
        let mut gdelta = vec![0.0; s * t * dd];
        let mut ga = vec![0.0; dd * n];
        let mut gb = vec![0.0; s * t * n];
        let mut gc = vec![0.0; s * t * n];
        let mut gd = vec![0.0; dd];
        let mut traj = Vec::with_capacity((t + 1) * dd * n);
        let mut scratch = vec![0.0; s * t * dd];
        let mut gh = vec![0.0; dd * n];
        for seq in 0..s {
            inp.run(seq, &mut scratch, Some(&mut traj));
            gh.iter_mut().for_each(|v| *v = 0.0);
            for step in (0..t).rev() {
                let row = seq * t + step;
                let h_now = &traj[(step + 1) * dd * n..(step + 2) * dd * n];
                let h_prev = &traj[step * dd * n..(step + 1) * dd * n];
                let bb = &inp.b[row * n..(row + 1) * n];
                let cb = &inp.c[row * n..(row + 1) * n];
                for k in 0..dd {
                    let gy = g[row * dd + k];
                    let (uk, dk) = (inp.u[row * dd + k], inp.delta[row * dd + k]);
                    gd[k] += gy * uk;
                    let mut gu_k = gy * inp.d[k];
                    let mut gdl = 0.0;
                    let ak = &inp.a[k * n..(k + 1) * n];
                    for j in 0..n {
                        let idx = k * n + j;
                        gc[row * n + j] += gy * h_now[idx];
                        let ghj = gh[idx] + gy * cb[j];
                        let decay = (dk * ak[j]).exp();
                        let gdecay = ghj * h_prev[idx] * decay;
                        gdl += gdecay * ak[j] + ghj * bb[j] * uk;
                        ga[idx] += gdecay * dk;
                        gb[row * n + j] += ghj * dk * uk;
                        gu_k += ghj * dk * bb[j];
                        gh[idx] = ghj * decay;
                    }
                    gu[row * dd + k] += gu_k;
                    gdelta[row * dd + k] += gdl;
                }
            }
        }
        vec![Some(gu), Some(gdelta), Some(ga), Some(gb), Some(gc), Some(gd)]
    })
}

/// Causal depthwise convolution along time of `x: (S, T, D)` with kernel
/// `w: (D, K)` and bias `(D)`: `y[t] = b + Σ_j w[j]·x[t − K + 1 + j]`.
pub fn causal_depthwise_conv1d(x: &Tensor, w: &Tensor, bias: &Tensor) -> Tensor {
    let (s, t, dd) = (x.dim(0), x.dim(1), x.dim(2));
    let k = w.dim(1);
    assert_eq!(w.dim(0), dd, "depthwise kernel {:?} for width {dd}", w.shape());
    assert_eq!(bias.numel(), dd);
    let (xd, wd, bd) = (x.to_vec(), w.to_vec(), bias.data());
    let mut y = vec![0.0; s * t * dd];
    for seq in 0..s {
        for step in 0..t {
            let row = (seq * t + step) * dd;
            for c in 0..dd {
                let mut acc = bd[c];
                for j in 0..k {
                    let src = step as isize - (k - 1) as isize + j as isize;
                    if src >= 0 {
                        acc += wd[c * k + j] * xd[(seq * t + src as usize) * dd + c];
                    }
                }
                y[row + c] = acc;
            }
        }
    }
    Tensor::from_op(y, x.shape(), &[x, w, bias], move |g, needs| {
        let mut gx = vec![0.0; s * t * dd];
        let mut gw = vec![0.0; dd * k];
        let mut gb = vec![0.0; dd];
        for seq in 0..s {
            for step in 0..t {
                let row = (seq * t + step) * dd;
                for c in 0..dd {
                    let gy = g[row + c];
                    gb[c] += gy;
                    for j in 0..k {
                        let src = step as isize - (k - 1) as isize + j as isize;
                        if src >= 0 {
                            let si = (seq * t + src as usize) * dd + c;
                            gw[c * k + j] += gy * xd[si];
                            gx[si] += gy * wd[c * k + j];
                        }
                    }
                }
            }
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gw), needs[2].then_some(gb)]
    })
}

/// Per-band softplus with learned sharpness `β_f = exp(b_f)` over the last axis:
/// `y = ln(1 + exp(β·x)) / β`.
pub fn learnable_softplus(x: &Tensor, b: &Tensor) -> Tensor {
    let f = *x.shape().last().expect("softplus input needs a band axis");
    assert_eq!(b.numel(), f, "softplus bands: input {:?}, params {:?}", x.shape(), b.shape());
    let beta: Vec<f64> = b.data().iter().map(|v| v.exp()).collect();
    let xd = x.to_vec();
    let y: Vec<f64> = xd.iter().enumerate().map(|(i, &v)| softplus_beta(v, beta[i % f])).collect();
    let yc = y.clone();
    Tensor::from_op(y, x.shape(), &[x, b], move |g, needs| {
        let mut gx = vec![0.0; g.len()];
        let mut gb = vec![0.0; f];
        for (i, &gi) in g.iter().enumerate() {
            let bt = beta[i % f];
            let s = gsr_autograd::sigmoid(bt * xd[i]);
            gx[i] = gi * s;
            // dy/db = β·dy/dβ = x·σ(βx) − y
            gb[i % f] += gi * (xd[i] * s - yc[i]);
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gb)]
    })
}

/// `ln(1 + exp(β·x)) / β`, switching to `x + ln1p(exp(−β·x))/β` when `β·x > 20`.
pub fn softplus_beta(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    if z > 20.0 {
        x + (-z).exp().ln_1p() / beta
    } else {
        z.exp().ln_1p() / beta
    }
}

/// Anti-wrapping distance `|t − 2π·round(t / 2π)|`.
pub fn anti_wrap(t: f64) -> f64 {
    (t - 2.0 * PI * (t / (2.0 * PI)).round()).abs()
}

impl AntiWrap for Tensor {
    fn anti_wrap(&self) -> Tensor {
        self.map(anti_wrap, |t, _| {
            let r = t - 2.0 * PI * (t / (2.0 * PI)).round();
            if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }
}

pub trait AntiWrap {
    fn anti_wrap(&self) -> Tensor;
}

/// STFT of a batch of waveforms `(B, L)` as `(B, 2, T, F)` (real, imaginary).
pub fn stft(x: &Tensor, engine: &Rc<Stft>) -> Tensor {
    assert_eq!(x.rank(), 2, "stft expects (batch, samples), got {:?}", x.shape());
    let (bs, len) = (x.dim(0), x.dim(1));
    let cfg = engine.config();
    let (frames, bins) = (cfg.n_frames(len), cfg.n_bins());
    let plane = frames * bins;
    let mut out = vec![0.0; bs * 2 * plane];
    for (i, row) in x.data().chunks(len).enumerate() {
        let (re, im) = engine.forward(row);
        out[i * 2 * plane..i * 2 * plane + plane].copy_from_slice(&re);
        out[i * 2 * plane + plane..(i + 1) * 2 * plane].copy_from_slice(&im);
    }
    let eng = engine.clone();
    Tensor::from_op(out, &[bs, 2, frames, bins], &[x], move |g, _| {
        let mut gx = Vec::with_capacity(bs * len);
        for i in 0..bs {
            let base = i * 2 * plane;
            gx.extend(eng.forward_adjoint(&g[base..base + plane], &g[base + plane..base + 2 * plane], len));
        }
        vec![Some(gx)]
    })
}

/// Inverse STFT of `(B, 2, T, F)` to `(B, out_len)`.
pub fn istft(spec: &Tensor, engine: &Rc<Stft>, out_len: usize) -> Tensor {
    assert_eq!(spec.rank(), 4);
    let (bs, frames, bins) = (spec.dim(0), spec.dim(2), spec.dim(3));
    assert_eq!(spec.dim(1), 2);
    assert_eq!(bins, engine.config().n_bins(), "istft bins {bins} for {:?}", engine.config());
    let plane = frames * bins;
    let mut out = Vec::with_capacity(bs * out_len);
    for blk in spec.data().chunks(2 * plane) {
        out.extend(engine.inverse(&blk[..plane], &blk[plane..], frames, out_len));
    }
    let eng = engine.clone();
    Tensor::from_op(out, &[bs, out_len], &[spec], move |g, _| {
        let mut gs = Vec::with_capacity(bs * 2 * plane);
        for row in g.chunks(out_len) {
            let (gre, gim) = eng.inverse_adjoint(row, frames);
            gs.extend(gre);
            gs.extend(gim);
        }
        vec![Some(gs)]
    })
}

/// Constant-Q transform of `(B, L)` as `(B, 2, T, K)`.
pub fn cqt(x: &Tensor, engine: &Rc<Cqt>) -> Tensor {
    assert_eq!(x.rank(), 2);
    let (bs, len) = (x.dim(0), x.dim(1));
    let cfg = engine.config();
    let (frames, bins) = (cfg.n_frames(len), cfg.n_bins());
    let plane = frames * bins;
    let mut out = vec![0.0; bs * 2 * plane];
    for (i, row) in x.data().chunks(len).enumerate() {
        let (re, im) = engine.forward(row);
        out[i * 2 * plane..i * 2 * plane + plane].copy_from_slice(&re);
        out[i * 2 * plane + plane..(i + 1) * 2 * plane].copy_from_slice(&im);
    }
    let eng = engine.clone();
    Tensor::from_op(out, &[bs, 2, frames, bins], &[x], move |g, _| {
        let mut gx = Vec::with_capacity(bs * len);
        for i in 0..bs {
            let base = i * 2 * plane;
            gx.extend(eng.adjoint(&g[base..base + plane], &g[base + plane..base + 2 * plane], len));
        }
        vec![Some(gx)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gsr_autograd::{gradcheck, GradcheckOptions};

    fn seq(n: usize, k: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * k).sin()).collect()
    }

    #[test]
    fn scan_prefix_sum() {
        let u = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[1, 4, 1]);
        let delta = Tensor::full(&[1, 4, 1], 1.0);
        let y = selective_scan(
            &u,
            &delta,
            &Tensor::zeros(&[1, 1]),
            &Tensor::ones(&[1, 4, 1]),
            &Tensor::ones(&[1, 4, 1]),
            &Tensor::zeros(&[1]),
        )
        .unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 3.0, 6.0, 10.0]);
    }

    #[test]
    fn scan_rejects_nonpositive_delta() {
        let u = Tensor::zeros(&[1, 2, 1]);
        let delta = Tensor::new(vec![0.1, 0.0], &[1, 2, 1]);
        let r = selective_scan(
            &u,
            &delta,
            &Tensor::zeros(&[1, 1]),
            &Tensor::zeros(&[1, 2, 1]),
            &Tensor::zeros(&[1, 2, 1]),
            &Tensor::zeros(&[1]),
        );
        assert!(matches!(r, Err(Error::NonPositiveDelta(..))));
    }

    #[test]
    fn depthwise_conv_gradients() {
        let x = Tensor::new(seq(2 * 6 * 3, 0.37), &[2, 6, 3]);
        let w = Tensor::new(seq(12, 0.91), &[3, 4]);
        let b = Tensor::new(vec![0.1, -0.2, 0.3], &[3]);
        let r = gradcheck(|t| causal_depthwise_conv1d(&t[0], &t[1], &t[2]), &[x, w, b], GradcheckOptions::default());
        assert!(r.max_rel_error() < 1e-7, "{:?}", r.per_input);
    }

    #[test]
    fn softplus_stable_branch_is_continuous() {
        let below = softplus_beta(20.0 - 1e-9, 1.0);
        let above = softplus_beta(20.0 + 1e-9, 1.0);
        assert!((above - below).abs() < 1e-8);
    }

    #[test]
    fn anti_wrap_values() {
        assert!(anti_wrap(2.0 * PI).abs() < 1e-12);
        assert!((anti_wrap(PI) - PI).abs() < 1e-12);
        assert!((anti_wrap(1.5 * PI) - 0.5 * PI).abs() < 1e-12);
    }
}
