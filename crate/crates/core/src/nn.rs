//! Parameterized layers on top of the tensor ops.

use gsr_autograd::{Conv2dSpec, Init, Param, ParamBuilder, Tensor};

pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub spec: Conv2dSpec,
}

impl Conv2d {
    pub fn new(pb: &ParamBuilder, cin: usize, cout: usize, kernel: (usize, usize), spec: Conv2dSpec, bias: bool) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let weight = pb.param("weight", &[cout, cin, kernel.0, kernel.1], Init::FanIn(fan_in));
        let bias = bias.then(|| pb.param("bias", &[cout], Init::FanIn(fan_in)));
        Self { weight, bias, spec }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let b = self.bias.as_ref().map(Param::tensor);
        x.conv2d(&self.weight.tensor(), b.as_ref(), self.spec)
    }
}

/// Transposed convolution, weight `(Cin, Cout, KH, KW)`.
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvTranspose2d {
    pub fn new(
        pb: &ParamBuilder,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        let fan_in = cout * kernel.0 * kernel.1;
        Self {
            weight: pb.param("weight", &[cin, cout, kernel.0, kernel.1], Init::FanIn(fan_in)),
            bias: pb.param("bias", &[cout], Init::FanIn(fan_in)),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv_transpose2d(&self.weight.tensor(), Some(&self.bias.tensor()), self.stride, self.padding)
    }
}

/// `x·W + b` over the last axis.
pub struct Linear {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Linear {
    pub fn new(pb: &ParamBuilder, din: usize, dout: usize, bias: bool) -> Self {
        Self {
            weight: pb.param("weight", &[din, dout], Init::FanIn(din)),
            bias: bias.then(|| pb.param("bias", &[dout], Init::FanIn(din))),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let b = self.bias.as_ref().map(Param::tensor);
        x.linear(&self.weight.tensor(), b.as_ref())
    }
}

/// Instance norm with per-channel affine parameters.
pub struct InstanceNorm {
    pub gamma: Param,
    pub beta: Param,
}

impl InstanceNorm {
    pub fn new(pb: &ParamBuilder, channels: usize) -> Self {
        Self { gamma: pb.param("gamma", &[channels], Init::Ones), beta: pb.param("beta", &[channels], Init::Zeros) }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.instance_norm(&self.gamma.tensor(), &self.beta.tensor())
    }
}

/// Layer norm over one axis.
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub axis: usize,
}

impl LayerNorm {
    pub fn new(pb: &ParamBuilder, width: usize, axis: usize) -> Self {
        Self { gamma: pb.param("gamma", &[width], Init::Ones), beta: pb.param("beta", &[width], Init::Zeros), axis }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.layer_norm(self.axis, &self.gamma.tensor(), &self.beta.tensor())
    }
}

pub struct PRelu {
    pub alpha: Param,
}

impl PRelu {
    pub fn new(pb: &ParamBuilder, channels: usize) -> Self {
        Self { alpha: pb.param("alpha", &[channels], Init::Const(0.25)) }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.prelu(&self.alpha.tensor())
    }
}

/// Conv → instance norm → PReLU.
pub struct ConvNormAct {
    pub conv: Conv2d,
    pub norm: InstanceNorm,
    pub act: PRelu,
}

impl ConvNormAct {
    pub fn new(pb: &ParamBuilder, cin: usize, cout: usize, kernel: (usize, usize), spec: Conv2dSpec) -> Self {
        Self {
            conv: Conv2d::new(&pb.sub("conv"), cin, cout, kernel, spec, true),
            norm: InstanceNorm::new(&pb.sub("norm"), cout),
            act: PRelu::new(&pb.sub("act"), cout),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.act.forward(&self.norm.forward(&self.conv.forward(x)))
    }
}

/// Convolution with weight normalization: `w = g · v / ‖v‖` per output channel.
pub struct WnConv2d {
    pub v: Param,
    pub g: Param,
    pub bias: Param,
    pub spec: Conv2dSpec,
}

impl WnConv2d {
    pub fn new(pb: &ParamBuilder, cin: usize, cout: usize, kernel: (usize, usize), spec: Conv2dSpec) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let v = pb.param("v", &[cout, cin, kernel.0, kernel.1], Init::FanIn(fan_in));
        let norms: Vec<f64> = v.to_vec().chunks(fan_in).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let g = pb.param("g", &[cout], Init::Values(norms));
        let bias = pb.param("bias", &[cout], Init::FanIn(fan_in));
        Self { v, g, bias, spec }
    }

    pub fn weight(&self) -> Tensor {
        let v = self.v.tensor();
        let cout = v.dim(0);
        let flat = v.reshape(&[cout, v.numel() / cout]);
        let norm = flat.sqr().sum_axis(1, true).sqrt();
        let g = self.g.tensor().reshape(&[cout, 1]);
        flat.mul(&g.div(&norm)).reshape(v.shape())
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(&self.weight(), Some(&self.bias.tensor()), self.spec)
    }
}

/// `((k − 1)·d / 2)` on each side, for odd effective kernels.
pub fn same_padding(kernel: (usize, usize), dilation: (usize, usize)) -> [usize; 4] {
    let ph = (kernel.0 - 1) * dilation.0 / 2;
    let pw = (kernel.1 - 1) * dilation.1 / 2;
    [ph, ph, pw, pw]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_norm_starts_at_v() {
        let pb = ParamBuilder::new(3);
        let c = WnConv2d::new(&pb, 2, 3, (3, 3), Conv2dSpec::default());
        let w = c.weight().to_vec();
        for (a, b) in w.iter().zip(c.v.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
