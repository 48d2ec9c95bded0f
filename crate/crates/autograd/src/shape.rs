//! Reductions and layout operations.

use crate::tensor::{numel_of, Tensor};

/// Splits `shape` around `axis` into `(outer, len, inner)`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Copies `src` (laid out as `shape`) into permuted order.
fn permute_data(src: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let in_strides = row_major_strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = src.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let inner = out_shape[rank - 1];
    let inner_stride = src_strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let mut o = 0;
    while o < n {
        if inner_stride == 1 {
            out[o..o + inner].copy_from_slice(&src[off..off + inner]);
        } else {
            for j in 0..inner {
                out[o + j] = src[off + j * inner_stride];
            }
        }
        o += inner;
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

impl Tensor {
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![s], &[], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over one axis.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Tensor {
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(&x[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let n = self.numel();
        Tensor::from_op(out, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for o in 0..outer {
                for l in 0..len {
                    let base = (o * len + l) * inner;
                    gx[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Tensor {
        let len = self.shape()[axis] as f64;
        self.sum_axis(axis, keepdim).scale(1.0 / len)
    }

    /// Shares storage; only the shape changes.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(numel_of(shape), self.numel(), "reshape {:?} -> {:?}", self.shape(), shape);
        Tensor::from_op_rc(self.data_rc(), shape, &[self], |g, _| vec![Some(g.to_vec())])
    }

    pub fn flatten(&self) -> Tensor {
        self.reshape(&[self.numel()])
    }

    pub fn unsqueeze(&self, axis: usize) -> Tensor {
        let mut s = self.shape().to_vec();
        s.insert(axis, 1);
        self.reshape(&s)
    }

    pub fn squeeze(&self, axis: usize) -> Tensor {
        assert_eq!(self.shape()[axis], 1);
        let mut s = self.shape().to_vec();
        s.remove(axis);
        self.reshape(&s)
    }

    pub fn permute(&self, axes: &[usize]) -> Tensor {
        assert_eq!(axes.len(), self.rank());
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return self.clone();
        }
        let shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let data = permute_data(self.data(), &shape, axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let os = out_shape.clone();
        Tensor::from_op(data, &out_shape, &[self], move |g, _| {
            vec![Some(permute_data(g, &os, &inverse))]
        })
    }

    pub fn transpose(&self, a: usize, b: usize) -> Tensor {
        let mut axes: Vec<usize> = (0..self.rank()).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor {
        let (outer, full, inner) = split_axis(self.shape(), axis);
        assert!(start + len <= full, "narrow out of range");
        if start == 0 && len == full {
            return self.clone();
        }
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let n = self.numel();
        Tensor::from_op(out, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Zero padding along `axis`.
    pub fn pad_axis(&self, axis: usize, before: usize, after: usize) -> Tensor {
        if before == 0 && after == 0 {
            return self.clone();
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let new_len = len + before + after;
        let x = self.data();
        let mut out = vec![0.0; outer * new_len * inner];
        for o in 0..outer {
            let dst = (o * new_len + before) * inner;
            out[dst..dst + len * inner].copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = new_len;
        Tensor::from_op(out, &shape, &[self], move |g, _| {
            let mut gx = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let src = (o * new_len + before) * inner;
                gx.extend_from_slice(&g[src..src + len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Crops or zero-pads `axis` to `target`, keeping the centre.
    pub fn fit_axis(&self, axis: usize, target: usize) -> Tensor {
        let len = self.shape()[axis];
        if len == target {
            self.clone()
        } else if len > target {
            self.narrow(axis, (len - target) / 2, target)
        } else {
            let extra = target - len;
            self.pad_axis(axis, extra / 2, extra - extra / 2)
        }
    }

    /// Reverses the order of elements along `axis`.
    pub fn flip(&self, axis: usize) -> Tensor {
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let flip = move |src: &[f64]| {
            let mut out = vec![0.0; src.len()];
            for o in 0..outer {
                for l in 0..len {
                    let s = (o * len + l) * inner;
                    let d = (o * len + (len - 1 - l)) * inner;
                    out[d..d + inner].copy_from_slice(&src[s..s + inner]);
                }
            }
            out
        };
        let data = flip(self.data());
        Tensor::from_op(data, self.shape(), &[self], move |g, _| vec![Some(flip(g))])
    }

    /// Concatenation along `axis`.
    pub fn cat(tensors: &[&Tensor], axis: usize) -> Tensor {
        assert!(!tensors.is_empty());
        let first = tensors[0].shape();
        for t in tensors {
            assert_eq!(t.rank(), first.len());
            for (i, (&a, &b)) in t.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "cat shape mismatch {:?} vs {:?}", t.shape(), first);
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let lens: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for (t, &len) in tensors.iter().zip(&lens) {
            let x = t.data();
            for o in 0..outer {
                let dst = (o * total + offset) * inner;
                out[dst..dst + len * inner].copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
            }
            offset += len;
        }
        let mut shape = first.to_vec();
        shape[axis] = total;
        Tensor::from_op(out, &shape, tensors, move |g, needs| {
            let mut grads = Vec::with_capacity(lens.len());
            let mut offset = 0;
            for (k, &len) in lens.iter().enumerate() {
                if needs[k] {
                    let mut gx = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        gx.extend_from_slice(&g[src..src + len * inner]);
                    }
                    grads.push(Some(gx));
                } else {
                    grads.push(None);
                }
                offset += len;
            }
            grads
        })
    }

    /// Keeps every `step`-th element along `axis`, starting at `start`.
    pub fn stride_select(&self, axis: usize, start: usize, step: usize) -> Tensor {
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let picked: Vec<usize> = (start..len).step_by(step).collect();
        let m = picked.len();
        let x = self.data();
        let mut out = Vec::with_capacity(outer * m * inner);
        for o in 0..outer {
            for &l in &picked {
                let s = (o * len + l) * inner;
                out.extend_from_slice(&x[s..s + inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = m;
        let n = self.numel();
        Tensor::from_op(out, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for o in 0..outer {
                for (k, &l) in picked.iter().enumerate() {
                    let s = (o * len + l) * inner;
                    let d = (o * m + k) * inner;
                    gx[s..s + inner].copy_from_slice(&g[d..d + inner]);
                }
            }
            vec![Some(gx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_roundtrip_and_grad() {
        let x = Tensor::leaf((0..24).map(f64::from).collect(), &[2, 3, 4], true);
        let y = x.permute(&[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        // y[i][j][k] = x[j][k][i]
        assert_eq!(y.data()[1], x.data()[4]);
        let w = Tensor::new((0..24).map(|v| v as f64 * 0.5).collect(), &[4, 2, 3]);
        y.mul(&w).sum().backward();
        let g = x.grad().unwrap();
        // dL/dx[j][k][i] = w[i][j][k]
        assert_eq!(g[4], w.data()[1]);
    }

    #[test]
    fn cat_and_narrow_are_inverse() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::new(vec![5.0, 6.0], &[2, 1]);
        let c = Tensor::cat(&[&a, &b], 1);
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.narrow(1, 2, 1).data(), b.data());
    }

    #[test]
    fn fit_axis_centre_crop_and_pad() {
        let x = Tensor::new((0..5).map(f64::from).collect(), &[5]);
        assert_eq!(x.fit_axis(0, 3).data(), &[1.0, 2.0, 3.0]);
        assert_eq!(x.fit_axis(0, 7).data(), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn sum_axis_keepdim() {
        let x = Tensor::new((0..6).map(f64::from).collect(), &[2, 3]);
        let s = x.sum_axis(1, true);
        assert_eq!(s.shape(), &[2, 1]);
        assert_eq!(s.data(), &[3.0, 12.0]);
    }
}
