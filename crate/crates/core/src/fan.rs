//! Fourier analysis layer: `[cos(x·Wp) ‖ sin(x·Wp) ‖ GELU(B + x·Wp̄)]`.

use gsr_autograd::{gelu, Init, Param, ParamBuilder, Tensor};

use crate::{Error, Result};

/// Plain-array parameters, row-major `(d_x, d_p)` and `(d_x, d_pbar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FanParams {
    pub d_x: usize,
    pub d_p: usize,
    pub d_pbar: usize,
    pub w_p: Vec<f64>,
    pub w_pbar: Vec<f64>,
    pub b_pbar: Vec<f64>,
}

impl FanParams {
    pub fn out_dim(&self) -> usize {
        2 * self.d_p + self.d_pbar
    }

    fn check(&self) -> Result<()> {
        if self.w_p.len() != self.d_x * self.d_p
            || self.w_pbar.len() != self.d_x * self.d_pbar
            || self.b_pbar.len() != self.d_pbar
        {
            return Err(Error::Shape(format!(
                "FAN params ({}, {}, {}) with arrays {} / {} / {}",
                self.d_x,
                self.d_p,
                self.d_pbar,
                self.w_p.len(),
                self.w_pbar.len(),
                self.b_pbar.len()
            )));
        }
        Ok(())
    }
}

/// Forward pass on a single vector.
pub fn fan_forward(x: &[f64], p: &FanParams) -> Result<Vec<f64>> {
    p.check()?;
    if x.len() != p.d_x {
        return Err(Error::Shape(format!("FAN input of length {} for d_x = {}", x.len(), p.d_x)));
    }
    let proj = |w: &[f64], n: usize, j: usize| (0..p.d_x).map(|i| x[i] * w[i * n + j]).sum::<f64>();
    let per: Vec<f64> = (0..p.d_p).map(|j| proj(&p.w_p, p.d_p, j)).collect();
    let mut out = Vec::with_capacity(p.out_dim());
    out.extend(per.iter().map(|v| v.cos()));
    out.extend(per.iter().map(|v| v.sin()));
    out.extend((0..p.d_pbar).map(|j| gelu(p.b_pbar[j] + proj(&p.w_pbar, p.d_pbar, j))));
    Ok(out)
}

/// `d_x·d_p + d_x·d_pbar + d_pbar`.
pub fn fan_param_count(d_x: usize, d_p: usize, d_pbar: usize) -> usize {
    d_x * d_p + d_x * d_pbar + d_pbar
}

/// FAN layer acting on the last axis of a tensor.
pub struct FanLayer {
    pub w_p: Option<Param>,
    pub w_pbar: Param,
    pub b_pbar: Param,
    d_x: usize,
    d_p: usize,
    d_pbar: usize,
}

impl FanLayer {
    /// Output width `d_out = 2·d_p + d_pbar`; `d_p` is clamped to `d_out / 2`.
    pub fn new(pb: &ParamBuilder, d_x: usize, d_out: usize, d_p: usize) -> Self {
        let d_p = d_p.min(d_out / 2);
        let d_pbar = d_out - 2 * d_p;
        let w_p = (d_p > 0).then(|| pb.param("w_p", &[d_x, d_p], Init::FanIn(d_x)));
        Self {
            w_p,
            w_pbar: pb.param("w_pbar", &[d_x, d_pbar], Init::FanIn(d_x)),
            b_pbar: pb.param("b_pbar", &[d_pbar], Init::Zeros),
            d_x,
            d_p,
            d_pbar,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.d_p + self.d_pbar
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let axis = x.rank() - 1;
        let gated = x.linear(&self.w_pbar.tensor(), Some(&self.b_pbar.tensor())).gelu();
        match &self.w_p {
            Some(w) => {
                let z = x.matmul(&w.tensor());
                Tensor::cat(&[&z.cos(), &z.sin(), &gated], axis)
            }
            None => gated,
        }
    }

    pub fn params(&self) -> FanParams {
        FanParams {
            d_x: self.d_x,
            d_p: self.d_p,
            d_pbar: self.d_pbar,
            w_p: self.w_p.as_ref().map(Param::to_vec).unwrap_or_default(),
            w_pbar: self.w_pbar.to_vec(),
            b_pbar: self.b_pbar.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(fan_param_count(4, 2, 3), 23);
        assert_eq!(fan_param_count(4, 0, 7), 4 * 7 + 7);
    }

    #[test]
    fn zero_input() {
        let p = FanParams {
            d_x: 4,
            d_p: 2,
            d_pbar: 3,
            w_p: vec![0.3; 8],
            w_pbar: vec![-0.2; 12],
            b_pbar: vec![0.5, -1.0, 2.0],
        };
        let y = fan_forward(&[0.0; 4], &p).unwrap();
        assert_eq!(y.len(), 7);
        assert_eq!(&y[..2], &[1.0, 1.0]);
        assert_eq!(&y[2..4], &[0.0, 0.0]);
        assert_eq!(y[4], gelu(0.5));
        assert!(fan_forward(&[0.0; 3], &p).is_err());
    }
}
