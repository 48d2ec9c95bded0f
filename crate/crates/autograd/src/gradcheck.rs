//! Central finite-difference checks of analytic gradients.

use crate::param::Param;
use crate::tensor::{no_grad, Tensor};

/// Relative error per checked input, computed as
/// `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)` over the
/// sampled coordinates. Below a norm of `ABS_FLOOR` the absolute difference is
/// reported instead, so gradients that vanish identically are not judged on
/// round-off.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub per_input: Vec<f64>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    pub eps: f64,
    /// Upper bound on checked coordinates per input.
    pub max_coords: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_coords: 64 }
    }
}

/// Reduces a non-scalar output to a scalar with fixed, non-uniform weights so
/// that every output element contributes.
pub fn project(y: &Tensor) -> Tensor {
    if y.numel() == 1 {
        return y.reshape(&[]);
    }
    let w: Vec<f64> = (0..y.numel()).map(|k| 0.5 + (1.0 + 0.7 * k as f64).sin()).collect();
    y.mul(&Tensor::new(w, y.shape())).sum()
}

fn coords(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let step = n as f64 / max as f64;
    (0..max).map(|i| ((i as f64 + 0.5) * step) as usize).collect()
}

pub const ABS_FLOOR: f64 = 1e-8;

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Checks the gradient of `f` (projected to a scalar) w.r.t. each input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], opts: GradcheckOptions) -> GradcheckReport
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| Tensor::leaf(t.to_vec(), t.shape(), true)).collect();
    project(&f(&leaves)).backward();
    let mut per_input = Vec::with_capacity(inputs.len());
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let idx = coords(leaf.numel(), opts.max_coords);
        let mut ga = Vec::with_capacity(idx.len());
        let mut gn = Vec::with_capacity(idx.len());
        for &k in &idx {
            let eval = |delta: f64| {
                let perturbed: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let mut v = t.to_vec();
                        if j == i {
                            v[k] += delta;
                        }
                        Tensor::new(v, t.shape())
                    })
                    .collect();
                no_grad(|| project(&f(&perturbed)).item())
            };
            gn.push((eval(opts.eps) - eval(-opts.eps)) / (2.0 * opts.eps));
            ga.push(analytic[k]);
        }
        per_input.push(rel_error(&ga, &gn));
    }
    GradcheckReport { per_input }
}

/// Checks the gradient of a scalar `loss` w.r.t. parameters, perturbing them in place.
pub fn gradcheck_params<F>(loss: F, params: &[Param], opts: GradcheckOptions) -> GradcheckReport
where
    F: Fn() -> Tensor,
{
    for p in params {
        p.zero_grad();
    }
    project(&loss()).backward();
    let mut per_input = Vec::with_capacity(params.len());
    for p in params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let base = p.to_vec();
        let mut ga = Vec::new();
        let mut gn = Vec::new();
        for k in coords(p.numel(), opts.max_coords) {
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[k] += delta;
                p.set_data(v);
                no_grad(|| project(&loss()).item())
            };
            let up = eval(opts.eps);
            let down = eval(-opts.eps);
            gn.push((up - down) / (2.0 * opts.eps));
            ga.push(analytic[k]);
        }
        p.set_data(base);
        per_input.push(rel_error(&ga, &gn));
    }
    GradcheckReport { per_input }
}
