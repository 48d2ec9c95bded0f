//! Matrix products backed by `matrixmultiply`.

use crate::tensor::Tensor;

/// `c = a·b + beta·c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: usize,
    a_cs: usize,
    b: &[f64],
    b_rs: usize,
    b_cs: usize,
    c: &mut [f64],
    c_rs: usize,
    c_cs: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            for i in 0..m {
                for j in 0..n {
                    c[i * c_rs + j * c_cs] = 0.0;
                }
            }
        }
        return;
    }
    debug_assert!((m - 1) * a_rs + (k - 1) * a_cs < a.len());
    debug_assert!((k - 1) * b_rs + (n - 1) * b_cs < b.len());
    debug_assert!((m - 1) * c_rs + (n - 1) * c_cs < c.len());
    // SAFETY: the asserts above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            beta,
            c.as_mut_ptr(),
            c_rs as isize,
            c_cs as isize,
        );
    }
}

impl Tensor {
    /// `(…, M, K) × (K, N) → (…, M, N)` with a shared right-hand matrix.
    pub fn matmul(&self, w: &Tensor) -> Tensor {
        assert!(self.rank() >= 1 && w.rank() == 2, "matmul shapes {:?} x {:?}", self.shape(), w.shape());
        let k = *self.shape().last().unwrap();
        assert_eq!(k, w.dim(0), "matmul inner dims {:?} x {:?}", self.shape(), w.shape());
        let n = w.dim(1);
        let p = self.numel() / k.max(1);
        let mut out = vec![0.0; p * n];
        gemm(p, k, n, self.data(), k, 1, w.data(), n, 1, &mut out, n, 1, 0.0);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let (xa, wa) = (self.data_rc(), w.data_rc());
        Tensor::from_op(out, &shape, &[self, w], move |g, needs| {
            let gx = needs[0].then(|| {
                let mut gx = vec![0.0; p * k];
                gemm(p, n, k, g, n, 1, &wa, 1, n, &mut gx, k, 1, 0.0);
                gx
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![0.0; k * n];
                gemm(k, p, n, &xa, 1, k, g, n, 1, &mut gw, n, 1, 0.0);
                gw
            });
            vec![gx, gw]
        })
    }

    /// `x·W + b` over the last axis, `W` stored as `(in, out)`.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Tensor {
        let y = self.matmul(w);
        match b {
            Some(b) => y.add(b),
            None => y,
        }
    }

    /// Batched product `(B, M, K) × (B, K, N) → (B, M, N)`.
    pub fn bmm(&self, other: &Tensor) -> Tensor {
        assert!(self.rank() == 3 && other.rank() == 3);
        let (bs, m, k) = (self.dim(0), self.dim(1), self.dim(2));
        assert_eq!(other.dim(0), bs);
        assert_eq!(other.dim(1), k);
        let n = other.dim(2);
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            gemm(
                m,
                k,
                n,
                &self.data()[i * m * k..],
                k,
                1,
                &other.data()[i * k * n..],
                n,
                1,
                &mut out[i * m * n..],
                n,
                1,
                0.0,
            );
        }
        let (aa, ba) = (self.data_rc(), other.data_rc());
        Tensor::from_op(out, &[bs, m, n], &[self, other], move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0; bs * m * k];
                for i in 0..bs {
                    gemm(m, n, k, &g[i * m * n..], n, 1, &ba[i * k * n..], 1, n, &mut ga[i * m * k..], k, 1, 0.0);
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; bs * k * n];
                for i in 0..bs {
                    gemm(k, m, n, &aa[i * m * k..], 1, k, &g[i * m * n..], n, 1, &mut gb[i * k * n..], n, 1, 0.0);
                }
                gb
            });
            vec![ga, gb]
        })
    }
}
