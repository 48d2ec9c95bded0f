//! Unary and broadcasting binary element-wise operations.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::tensor::{numel_of, Tensor};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("cannot broadcast shapes {a:?} and {b:?}"),
        };
    }
    out
}

/// Element strides of `shape` viewed inside `out` (zero on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + rank - shape.len();
        strides[oi] = if shape[i] == 1 && out[oi] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output element in row-major order with the matching offsets
/// into the two (broadcast) operands.
fn for_each_broadcast(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n = numel_of(out);
    if n == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut o = 0;
    while o < n {
        for j in 0..inner {
            f(o + j, oa + j * ia, ob + j * ib);
        }
        o += inner;
        // advance the odometer over the outer axes
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

fn binary(a: &Tensor, b: &Tensor, op: BinOp) -> Tensor {
    if a.shape() == b.shape() {
        let (x, y) = (a.data(), b.data());
        let data: Vec<f64> = match op {
            BinOp::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
            BinOp::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
            BinOp::Mul => x.iter().zip(y).map(|(p, q)| p * q).collect(),
            BinOp::Div => x.iter().zip(y).map(|(p, q)| p / q).collect(),
        };
        let (ad, bd) = (a.data_rc(), b.data_rc());
        return Tensor::from_op(data, a.shape(), &[a, b], move |g, needs| {
            let ga = needs[0].then(|| match op {
                BinOp::Add | BinOp::Sub => g.to_vec(),
                BinOp::Mul => g.iter().zip(bd.iter()).map(|(g, y)| g * y).collect(),
                BinOp::Div => g.iter().zip(bd.iter()).map(|(g, y)| g / y).collect(),
            });
            let gb = needs[1].then(|| match op {
                BinOp::Add => g.to_vec(),
                BinOp::Sub => g.iter().map(|g| -g).collect(),
                BinOp::Mul => g.iter().zip(ad.iter()).map(|(g, x)| g * x).collect(),
                BinOp::Div => g
                    .iter()
                    .zip(ad.iter().zip(bd.iter()))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect(),
            });
            vec![ga, gb]
        });
    }

    let out_shape = broadcast_shape(a.shape(), b.shape());
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let (x, y) = (a.data(), b.data());
    let mut data = vec![0.0; numel_of(&out_shape)];
    for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| {
        data[o] = match op {
            BinOp::Add => x[i] + y[j],
            BinOp::Sub => x[i] - y[j],
            BinOp::Mul => x[i] * y[j],
            BinOp::Div => x[i] / y[j],
        };
    });
    let (ad, bd) = (a.data_rc(), b.data_rc());
    let (na, nb) = (a.numel(), b.numel());
    let shape = out_shape.clone();
    Tensor::from_op(data, &out_shape, &[a, b], move |g, needs| {
        let mut ga = needs[0].then(|| vec![0.0; na]);
        let mut gb = needs[1].then(|| vec![0.0; nb]);
        for_each_broadcast(&shape, &sa, &sb, |o, i, j| {
            let go = g[o];
            if let Some(ga) = ga.as_mut() {
                ga[i] += match op {
                    BinOp::Add | BinOp::Sub => go,
                    BinOp::Mul => go * bd[j],
                    BinOp::Div => go / bd[j],
                };
            }
            if let Some(gb) = gb.as_mut() {
                gb[j] += match op {
                    BinOp::Add => go,
                    BinOp::Sub => -go,
                    BinOp::Mul => go * ad[i],
                    BinOp::Div => -go * ad[i] / (bd[j] * bd[j]),
                };
            }
        });
        vec![ga, gb]
    })
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Div)
    }

    /// Applies `f` element-wise; `df(x, y)` is the local derivative given the
    /// input and output values.
    pub fn map<F, D>(&self, f: F, df: D) -> Tensor
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let out = std::rc::Rc::new(data);
        let xin = self.data_rc();
        let yout = out.clone();
        Tensor::from_op_rc(out, self.shape(), &[self], move |g, _| {
            let gx = g
                .iter()
                .zip(xin.iter().zip(yout.iter()))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    /// `self * scale + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Tensor {
        self.map(move |x| x * scale + shift, move |_, _| scale)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.affine(s, 0.0)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.affine(1.0, s)
    }

    pub fn neg(&self) -> Tensor {
        self.affine(-1.0, 0.0)
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        self.map(f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Tensor {
        self.map(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn sqr(&self) -> Tensor {
        self.map(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs, |x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    }

    pub fn powf(&self, p: f64) -> Tensor {
        self.map(move |x| x.powf(p), move |x, _| if x == 0.0 && p < 1.0 { 0.0 } else { p * x.powf(p - 1.0) })
    }

    pub fn sin(&self) -> Tensor {
        self.map(f64::sin, |x, _| x.cos())
    }

    pub fn cos(&self) -> Tensor {
        self.map(f64::cos, |x, _| -x.sin())
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn silu(&self) -> Tensor {
        self.map(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor {
        self.map(gelu, gelu_grad)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.map(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// `ln(1 + e^x)` computed without overflow.
    pub fn softplus(&self) -> Tensor {
        self.map(softplus, |x, _| sigmoid(x))
    }

    /// `max(x, floor)`; the gradient is blocked where the floor is active.
    pub fn clamp_min(&self, floor: f64) -> Tensor {
        self.map(move |x| x.max(floor), move |x, _| if x > floor { 1.0 } else { 0.0 })
    }

    /// Element-wise `atan2(self, x)`, result in (-π, π].
    pub fn atan2(&self, x: &Tensor) -> Tensor {
        assert_eq!(self.shape(), x.shape(), "atan2 operands must share a shape");
        let data: Vec<f64> = self.data().iter().zip(x.data()).map(|(y, x)| y.atan2(*x)).collect();
        let (yd, xd) = (self.data_rc(), x.data_rc());
        Tensor::from_op(data, self.shape(), &[self, x], move |g, needs| {
            let r2 = |i: usize| xd[i] * xd[i] + yd[i] * yd[i];
            let gy = needs[0].then(|| {
                (0..g.len())
                    .map(|i| if r2(i) > 0.0 { g[i] * xd[i] / r2(i) } else { 0.0 })
                    .collect()
            });
            let gx = needs[1].then(|| {
                (0..g.len())
                    .map(|i| if r2(i) > 0.0 { -g[i] * yd[i] / r2(i) } else { 0.0 })
                    .collect()
            });
            vec![gy, gx]
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64, _y: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<&Tensor> for &Tensor {
            type Output = Tensor;
            fn $method(self, rhs: &Tensor) -> Tensor {
                Tensor::$method(self, rhs)
            }
        }
        impl $tr<Tensor> for Tensor {
            type Output = Tensor;
            fn $method(self, rhs: Tensor) -> Tensor {
                Tensor::$method(&self, &rhs)
            }
        }
        impl $tr<&Tensor> for Tensor {
            type Output = Tensor;
            fn $method(self, rhs: &Tensor) -> Tensor {
                Tensor::$method(&self, rhs)
            }
        }
    };
}

impl_binop!(Add, add);
impl_binop!(Sub, sub);
impl_binop!(Mul, mul);
impl_binop!(Div, div);

impl Neg for &Tensor {
    type Output = Tensor;
    fn neg(self) -> Tensor {
        Tensor::neg(self)
    }
}

impl Neg for Tensor {
    type Output = Tensor;
    fn neg(self) -> Tensor {
        Tensor::neg(&self)
    }
}
