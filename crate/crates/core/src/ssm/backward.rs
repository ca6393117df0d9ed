//! Exact reverse-mode differentiation of the selective-scan recurrence.

use crate::ssm::ScanInputs;
use crate::tensor::{DenseArray, Scalar};

/// Gradients of a scalar loss with respect to every scan input.
#[derive(Clone, Debug)]
pub struct ScanGradients<T: Scalar = f32> {
    pub d_u: DenseArray<T>,
    pub d_a_bar: DenseArray<T>,
    pub d_b_bar: DenseArray<T>,
    pub d_c: DenseArray<T>,
    pub d_d_feed: DenseArray<T>,
}

/// Reverse-mode gradients of [`crate::ssm::s6_scan_seq`].
///
/// Replays the forward recurrence to recover the hidden states, then
/// runs the adjoint recurrence
/// `g[k,d,:] = a_bar[k+1,d,:] * g[k+1,d,:] + c[k,:] * grad_out[k,d]`
/// backwards, accumulating the product-rule terms for each input.
pub fn s6_scan_backward<T: Scalar>(
    inp: &ScanInputs<T>,
    grad_out: &DenseArray<T>,
) -> crate::Result<ScanGradients<T>> {
    let (l, d, n) = inp.dims();
    if grad_out.shape() != [l, d] {
        return Err(crate::Error::TensorShape {
            name: "grad_out".into(),
            expected: vec![l, d],
            got: grad_out.shape().to_vec(),
        });
    }
    let a = inp.a_bar().data();
    let b = inp.b_bar().data();
    let c = inp.c().data();
    let u = inp.u().data();
    let feed = inp.d_feed().data();
    let gy = grad_out.data();

    // forward replay, keeping every hidden state
    let mut h_all = vec![T::zero(); l * d * n];
    {
        let mut h = vec![T::zero(); d * n];
        for k in 0..l {
            for di in 0..d {
                let u_kd = u[k * d + di];
                let base = (k * d + di) * n;
                for ni in 0..n {
                    let hv = a[base + ni] * h[di * n + ni] + b[base + ni] * u_kd;
                    h[di * n + ni] = hv;
                    h_all[base + ni] = hv;
                }
            }
        }
    }

    let mut d_u = vec![T::zero(); l * d];
    let mut d_a = vec![T::zero(); l * d * n];
    let mut d_b = vec![T::zero(); l * d * n];
    let mut d_c = vec![T::zero(); l * n];
    let mut d_feed = vec![T::zero(); d];

    let mut gh = vec![T::zero(); d * n];
    for k in (0..l).rev() {
        let c_row = &c[k * n..(k + 1) * n];
        for di in 0..d {
            let u_kd = u[k * d + di];
            let gy_kd = gy[k * d + di];
            let base = (k * d + di) * n;
            let next_base = ((k + 1) * d + di) * n;
            let mut du_acc = feed[di] * gy_kd;
            for ni in 0..n {
                let carried = if k + 1 < l {
                    a[next_base + ni] * gh[di * n + ni]
                } else {
                    T::zero()
                };
                let g = carried + c_row[ni] * gy_kd;
                gh[di * n + ni] = g;

                let h_prev = if k > 0 {
                    h_all[((k - 1) * d + di) * n + ni]
                } else {
                    T::zero()
                };
                d_a[base + ni] = g * h_prev;
                d_b[base + ni] = g * u_kd;
                du_acc = du_acc + g * b[base + ni];
                d_c[k * n + ni] = d_c[k * n + ni] + gy_kd * h_all[base + ni];
            }
            d_u[k * d + di] = du_acc;
            d_feed[di] = d_feed[di] + gy_kd * u_kd;
        }
    }

    Ok(ScanGradients {
        d_u: DenseArray::new(vec![l, d], d_u)?,
        d_a_bar: DenseArray::new(vec![l, d, n], d_a)?,
        d_b_bar: DenseArray::new(vec![l, d, n], d_b)?,
        d_c: DenseArray::new(vec![l, n], d_c)?,
        d_d_feed: DenseArray::new(vec![d], d_feed)?,
    })
}
