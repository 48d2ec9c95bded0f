//! 2-D convolution and transposed convolution on `(B, C, H, W)` tensors.
//!
//! Both go through im2col + gemm. Columns are built in row chunks so the
//! scratch buffer stays bounded on long spectrograms, and are rebuilt in the
//! backward pass instead of being kept alive by the graph.

use crate::matmul::gemm;
use crate::tensor::Tensor;

const COL_BUDGET: usize = 1 << 22;

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    /// `[top, bottom, left, right]` zero padding.
    pub padding: [usize; 4],
    pub dilation: (usize, usize),
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self { stride: (1, 1), padding: [0; 4], dilation: (1, 1) }
    }
}

impl Conv2dSpec {
    pub fn stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn pad(mut self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        self.padding = [top, bottom, left, right];
        self
    }

    pub fn dilation(mut self, dh: usize, dw: usize) -> Self {
        self.dilation = (dh, dw);
        self
    }

    pub fn out_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> (usize, usize) {
        let eh = self.dilation.0 * (kh - 1) + 1;
        let ew = self.dilation.1 * (kw - 1) + 1;
        let ph = h + self.padding[0] + self.padding[1];
        let pw = w + self.padding[2] + self.padding[3];
        assert!(ph >= eh && pw >= ew, "conv input {h}x{w} too small for kernel {kh}x{kw}");
        ((ph - eh) / self.stride.0 + 1, (pw - ew) / self.stride.1 + 1)
    }
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    spec: Conv2dSpec,
}

impl Geom {
    fn rows_per_chunk(&self) -> usize {
        let per_row = self.c * self.kh * self.kw * self.wo;
        (COL_BUDGET / per_row.max(1)).clamp(1, self.ho.max(1))
    }

    /// Fills `col` with shape `(c·kh·kw, (r1 − r0)·wo)` for output rows `r0..r1`.
    fn im2col(&self, x: &[f64], r0: usize, r1: usize, col: &mut [f64]) {
        let n = (r1 - r0) * self.wo;
        let (sh, sw) = self.spec.stride;
        let (dh, dw) = self.spec.dilation;
        let (pt, pl) = (self.spec.padding[0] as isize, self.spec.padding[2] as isize);
        for c in 0..self.c {
            let xc = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut col[row * n..(row + 1) * n];
                    for (ro, r) in (r0..r1).enumerate() {
                        let hi = (r * sh + i * dh) as isize - pt;
                        let seg = &mut dst[ro * self.wo..(ro + 1) * self.wo];
                        if hi < 0 || hi >= self.h as isize {
                            seg.fill(0.0);
                            continue;
                        }
                        let src = &xc[hi as usize * self.w..(hi as usize + 1) * self.w];
                        for (q, v) in seg.iter_mut().enumerate() {
                            let wi = (q * sw + j * dw) as isize - pl;
                            *v = if wi < 0 || wi >= self.w as isize { 0.0 } else { src[wi as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geom::im2col`]: accumulates `col` into `x`.
    fn col2im(&self, col: &[f64], r0: usize, r1: usize, x: &mut [f64]) {
        let n = (r1 - r0) * self.wo;
        let (sh, sw) = self.spec.stride;
        let (dh, dw) = self.spec.dilation;
        let (pt, pl) = (self.spec.padding[0] as isize, self.spec.padding[2] as isize);
        for c in 0..self.c {
            let xc = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &col[row * n..(row + 1) * n];
                    for (ro, r) in (r0..r1).enumerate() {
                        let hi = (r * sh + i * dh) as isize - pt;
                        if hi < 0 || hi >= self.h as isize {
                            continue;
                        }
                        let dst = &mut xc[hi as usize * self.w..(hi as usize + 1) * self.w];
                        for (q, v) in src[ro * self.wo..(ro + 1) * self.wo].iter().enumerate() {
                            let wi = (q * sw + j * dw) as isize - pl;
                            if wi >= 0 && wi < self.w as isize {
                                dst[wi as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.spec == Conv2dSpec::default()
    }
}

/// `y[co] = W[co] · cols(x)` for one batch item. `y` is `(co, ho·wo)`.
fn conv_forward_item(g: &Geom, weight: &[f64], cout: usize, x: &[f64], y: &mut [f64]) {
    let k = g.c * g.kh * g.kw;
    let hw = g.ho * g.wo;
    if g.is_pointwise() {
        gemm(cout, k, hw, weight, k, 1, x, hw, 1, y, hw, 1, 0.0);
        return;
    }
    let rows = g.rows_per_chunk();
    let mut col = vec![0.0; k * rows * g.wo];
    let mut r0 = 0;
    while r0 < g.ho {
        let r1 = (r0 + rows).min(g.ho);
        let n = (r1 - r0) * g.wo;
        g.im2col(x, r0, r1, &mut col);
        gemm(cout, k, n, weight, k, 1, &col, n, 1, &mut y[r0 * g.wo..], hw, 1, 0.0);
        r0 = r1;
    }
}

/// Accumulates `dx += colsᵀ(Wᵀ·dy)` and `dw += dy·cols(x)ᵀ` for one item.
#[allow(clippy::too_many_arguments)]
fn conv_backward_item(
    g: &Geom,
    weight: &[f64],
    cout: usize,
    x: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
) {
    let k = g.c * g.kh * g.kw;
    let hw = g.ho * g.wo;
    if g.is_pointwise() {
        if let Some(dx) = dx {
            gemm(k, cout, hw, weight, 1, k, dy, hw, 1, dx, hw, 1, 1.0);
        }
        if let Some(dw) = dw {
            gemm(cout, hw, k, dy, hw, 1, x, 1, hw, dw, k, 1, 1.0);
        }
        return;
    }
    let rows = g.rows_per_chunk();
    let mut col = vec![0.0; k * rows * g.wo];
    let mut dx = dx;
    let mut dw = dw;
    let mut r0 = 0;
    while r0 < g.ho {
        let r1 = (r0 + rows).min(g.ho);
        let n = (r1 - r0) * g.wo;
        let dyc = &dy[r0 * g.wo..];
        if let Some(dw) = dw.as_deref_mut() {
            g.im2col(x, r0, r1, &mut col);
            gemm(cout, n, k, dyc, hw, 1, &col, 1, n, dw, k, 1, 1.0);
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(k, cout, n, weight, 1, k, dyc, hw, 1, &mut col, n, 1, 0.0);
            g.col2im(&col[..k * n], r0, r1, dx);
        }
        r0 = r1;
    }
}

impl Tensor {
    /// Cross-correlation with weight `(Cout, Cin, KH, KW)` and optional bias `(Cout)`.
    pub fn conv2d(&self, weight: &Tensor, bias: Option<&Tensor>, spec: Conv2dSpec) -> Tensor {
        assert_eq!(self.rank(), 4, "conv2d input must be (B, C, H, W), got {:?}", self.shape());
        assert_eq!(weight.rank(), 4);
        let (b, c, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (cout, cin, kh, kw) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
        assert_eq!(c, cin, "conv2d channels: input {:?}, weight {:?}", self.shape(), weight.shape());
        let (ho, wo) = spec.out_size(h, w, kh, kw);
        let geom = Geom { c, h, w, kh, kw, ho, wo, spec };
        let in_item = c * h * w;
        let out_item = cout * ho * wo;
        let mut out = vec![0.0; b * out_item];
        for i in 0..b {
            conv_forward_item(
                &geom,
                weight.data(),
                cout,
                &self.data()[i * in_item..(i + 1) * in_item],
                &mut out[i * out_item..(i + 1) * out_item],
            );
        }
        let (xa, wa) = (self.data_rc(), weight.data_rc());
        let y = Tensor::from_op(out, &[b, cout, ho, wo], &[self, weight], move |g, needs| {
            let mut gx = needs[0].then(|| vec![0.0; b * in_item]);
            let mut gw = needs[1].then(|| vec![0.0; wa.len()]);
            for i in 0..b {
                conv_backward_item(
                    &geom,
                    &wa,
                    cout,
                    &xa[i * in_item..(i + 1) * in_item],
                    &g[i * out_item..(i + 1) * out_item],
                    gx.as_mut().map(|v| &mut v[i * in_item..(i + 1) * in_item]),
                    gw.as_deref_mut(),
                );
            }
            vec![gx, gw]
        });
        match bias {
            Some(bias) => y.add(&bias.reshape(&[1, cout, 1, 1])),
            None => y,
        }
    }

    /// Transposed convolution with weight `(Cin, Cout, KH, KW)`, symmetric padding
    /// `(ph, pw)` and output size `(H − 1)·s − 2p + K`.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Tensor {
        assert_eq!(self.rank(), 4);
        let (b, cin, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (wcin, cout, kh, kw) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
        assert_eq!(cin, wcin, "conv_transpose2d channels: input {:?}, weight {:?}", self.shape(), weight.shape());
        let ho = (h - 1) * stride.0 + kh - 2 * padding.0;
        let wo = (w - 1) * stride.1 + kw - 2 * padding.1;
        // The output plays the role of a conv input whose conv output is `self`.
        let spec = Conv2dSpec {
            stride,
            padding: [padding.0, padding.0, padding.1, padding.1],
            dilation: (1, 1),
        };
        let geom = Geom { c: cout, h: ho, w: wo, kh, kw, ho: h, wo: w, spec };
        debug_assert_eq!(spec.out_size(ho, wo, kh, kw), (h, w));
        let in_item = cin * h * w;
        let out_item = cout * ho * wo;
        let mut out = vec![0.0; b * out_item];
        for i in 0..b {
            conv_backward_item(
                &geom,
                weight.data(),
                cin,
                &[],
                &self.data()[i * in_item..(i + 1) * in_item],
                Some(&mut out[i * out_item..(i + 1) * out_item]),
                None,
            );
        }
        let (xa, wa) = (self.data_rc(), weight.data_rc());
        let y = Tensor::from_op(out, &[b, cout, ho, wo], &[self, weight], move |g, needs| {
            let mut gx = needs[0].then(|| vec![0.0; b * in_item]);
            let mut gw = needs[1].then(|| vec![0.0; wa.len()]);
            for i in 0..b {
                let gi = &g[i * out_item..(i + 1) * out_item];
                if let Some(gx) = gx.as_mut() {
                    conv_forward_item(&geom, &wa, cin, gi, &mut gx[i * in_item..(i + 1) * in_item]);
                }
                if let Some(gw) = gw.as_mut() {
                    // dW[ci, (co,kh,kw)] += x[ci]·cols(g)ᵀ
                    conv_backward_item(&geom, &wa, cin, gi, &xa[i * in_item..(i + 1) * in_item], None, Some(gw));
                }
            }
            vec![gx, gw]
        });
        match bias {
            Some(bias) => y.add(&bias.reshape(&[1, cout, 1, 1])),
            None => y,
        }
    }
}
