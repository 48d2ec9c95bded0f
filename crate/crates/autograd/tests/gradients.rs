use gsr_autograd::{gradcheck, Conv2dSpec, GradcheckOptions, Tensor};
use proptest::prelude::*;

fn wave(shape: &[usize], k: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new((0..n).map(|i| (i as f64 * k + 0.3).sin()).collect(), shape)
}

fn check(f: impl Fn(&[Tensor]) -> Tensor, inputs: &[Tensor]) {
    let r = gradcheck(f, inputs, GradcheckOptions::default());
    assert!(r.max_rel_error() < 1e-6, "relative errors {:?}", r.per_input);
}

#[test]
fn unary_ops() {
    let x = wave(&[3, 5], 0.71);
    let pos = x.abs().add_scalar(0.5);
    check(|t| t[0].exp().add(&t[0].tanh()).add(&t[0].sigmoid()), &[x.clone()]);
    check(|t| t[0].silu().add(&t[0].gelu()).add(&t[0].softplus()), &[x.clone()]);
    check(|t| t[0].sin().mul(&t[0].cos()).add(&t[0].leaky_relu(0.1)), &[x.clone()]);
    check(|t| t[0].ln().add(&t[0].sqrt()).add(&t[0].powf(0.3)), &[pos]);
}

#[test]
fn broadcasting_binary_ops() {
    let a = wave(&[2, 3, 4], 0.37);
    let b = wave(&[3, 1], 0.91).add_scalar(2.0);
    check(|t| t[0].mul(&t[1]).sub(&t[0].div(&t[1])), &[a, b]);
}

#[test]
fn atan2_away_from_origin() {
    let y = wave(&[10], 0.8);
    let x = wave(&[10], 1.3).add_scalar(0.2);
    check(|t| t[0].atan2(&t[1]), &[y, x]);
}

#[test]
fn shape_ops() {
    let x = wave(&[2, 3, 4], 0.5);
    check(|t| t[0].permute(&[2, 0, 1]).narrow(1, 1, 1).sum_axis(2, false), &[x.clone()]);
    check(|t| Tensor::cat(&[&t[0], &t[0].flip(1)], 1).pad_axis(2, 1, 2), &[x.clone()]);
    check(|t| t[0].fit_axis(2, 3).stride_select(1, 1, 2).mean_axis(0, true), &[x]);
}

#[test]
fn matmul_and_bmm() {
    let a = wave(&[2, 3, 4], 0.3);
    let w = wave(&[4, 5], 0.7);
    check(|t| t[0].matmul(&t[1]), &[a.clone(), w]);
    let b = wave(&[2, 4, 2], 0.9);
    check(|t| t[0].bmm(&t[1]), &[a, b]);
}

#[test]
fn conv2d_general_geometry() {
    let x = wave(&[2, 3, 6, 7], 0.41);
    let w = wave(&[4, 3, 2, 3], 0.67);
    let bias = wave(&[4], 1.1);
    let spec = Conv2dSpec::default().stride(1, 2).pad(2, 0, 1, 1).dilation(2, 1);
    check(|t| t[0].conv2d(&t[1], Some(&t[2]), spec), &[x, w, bias]);
}

#[test]
fn pointwise_conv2d() {
    let x = wave(&[2, 3, 4, 5], 0.23);
    let w = wave(&[2, 3, 1, 1], 0.61);
    check(|t| t[0].conv2d(&t[1], None, Conv2dSpec::default()), &[x, w]);
}

#[test]
fn conv_transpose2d_grads() {
    let x = wave(&[2, 3, 4, 5], 0.33);
    let w = wave(&[3, 2, 3, 4], 0.57);
    let bias = wave(&[2], 0.2);
    check(|t| t[0].conv_transpose2d(&t[1], Some(&t[2]), (1, 2), (1, 1)), &[x, w, bias]);
}

#[test]
fn norms_and_prelu() {
    let x = wave(&[2, 3, 4, 5], 0.77);
    let g = wave(&[3], 0.5).add_scalar(1.0);
    let b = wave(&[3], 0.9);
    check(|t| t[0].instance_norm(&t[1], &t[2]), &[x.clone(), g.clone(), b.clone()]);
    check(|t| t[0].layer_norm(1, &t[1], &t[2]), &[x.clone(), g, b]);
    let a = wave(&[3], 0.4).scale(0.2);
    check(|t| t[0].prelu(&t[1]), &[x, a]);
}

#[test]
fn reused_input_accumulates() {
    let x = Tensor::leaf(vec![2.0, -1.0], &[2], true);
    let y = x.mul(&x).add(&x).sum();
    y.backward();
    assert_eq!(x.grad().unwrap(), vec![5.0, -1.0]);
}

#[test]
fn retained_intermediate_gradient() {
    let x = Tensor::leaf(vec![1.0, 2.0, 3.0], &[3], true);
    let h = x.scale(2.0);
    h.retain_grad();
    h.sqr().sum().backward();
    assert_eq!(h.grad().unwrap(), vec![4.0, 8.0, 12.0]);
}

proptest! {
    #[test]
    fn reshape_preserves_data(v in prop::collection::vec(-10.0f64..10.0, 12)) {
        let t = Tensor::new(v.clone(), &[3, 4]);
        prop_assert_eq!(t.reshape(&[2, 6]).to_vec(), v.clone());
        prop_assert_eq!(t.transpose(0, 1).transpose(0, 1).to_vec(), v);
    }

    #[test]
    fn sum_is_linear(v in prop::collection::vec(-10.0f64..10.0, 1..40), s in -3.0f64..3.0) {
        let n = v.len();
        let t = Tensor::new(v, &[n]);
        let lhs = t.scale(s).sum().item();
        let rhs = s * t.sum().item();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}
