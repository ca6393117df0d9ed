//! Convolution, normalization, resampling, and the image/sequence
//! rearrangements the SSM blocks require.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{DenseArray, Scalar};

/// Parameters of a 2D convolution layer (cross-correlation semantics,
/// no kernel flip).
#[derive(Clone, Debug)]
pub struct Conv2DParams<T: Scalar = f32> {
    /// `[outC, inC, kH, kW]`
    pub weights: DenseArray<T>,
    /// `[outC]`
    pub bias: DenseArray<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv2DParams<T> {
    pub fn new(
        weights: DenseArray<T>,
        bias: DenseArray<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::RankMismatch {
                op: "Conv2DParams",
                expected: 4,
                got: weights.shape().to_vec(),
            });
        }
        let [out_c, _, kh, kw] = [
            weights.shape()[0],
            weights.shape()[1],
            weights.shape()[2],
            weights.shape()[3],
        ];
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidParam {
                op: "Conv2DParams",
                what: format!("kernel extents must be odd, got {kh}x{kw}"),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidParam {
                op: "Conv2DParams",
                what: "stride must be >= 1".into(),
            });
        }
        if bias.shape() != [out_c] {
            return Err(Error::AxisMismatch {
                op: "Conv2DParams",
                axis: "bias",
                expected: out_c,
                got: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

/// Inference-mode batch normalization parameters for one layer.
#[derive(Clone, Debug)]
pub struct BatchNormParams<T: Scalar = f32> {
    pub gamma: DenseArray<T>,
    pub beta: DenseArray<T>,
    pub running_mean: DenseArray<T>,
    pub running_var: DenseArray<T>,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(
        gamma: DenseArray<T>,
        beta: DenseArray<T>,
        running_mean: DenseArray<T>,
        running_var: DenseArray<T>,
        epsilon: T,
    ) -> Result<Self> {
        let c = gamma.len();
        for (name, t) in [("beta", &beta), ("running_mean", &running_mean), ("running_var", &running_var)] {
            if t.len() != c || t.rank() != 1 {
                return Err(Error::AxisMismatch {
                    op: "BatchNormParams",
                    axis: name,
                    expected: c,
                    got: t.len(),
                });
            }
        }
        if running_var.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidParam {
                op: "BatchNormParams",
                what: "running_var must be non-negative".into(),
            });
        }
        if epsilon.is_nan() || epsilon <= T::zero() {
            return Err(Error::InvalidParam {
                op: "BatchNormParams",
                what: "epsilon must be positive".into(),
            });
        }
        Ok(Self {
            gamma,
            beta,
            running_mean,
            running_var,
            epsilon,
        })
    }

    /// gamma = 1, beta = 0, mean = 0, var = 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: DenseArray::full(vec![channels], T::one()),
            beta: DenseArray::zeros(vec![channels]),
            running_mean: DenseArray::zeros(vec![channels]),
            running_var: DenseArray::full(vec![channels], T::one()),
            epsilon: T::from_f64(1e-5),
        }
    }
}

fn expect_chw<T: Scalar>(op: &'static str, x: &DenseArray<T>) -> Result<(usize, usize, usize)> {
    if x.rank() != 3 {
        return Err(Error::RankMismatch {
            op,
            expected: 3,
            got: x.shape().to_vec(),
        });
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
}

/// 2D convolution of a `[C,H,W]` input. Output extents follow
/// `H' = floor((H + 2*pad - kH)/stride) + 1` and likewise for `W'`.
pub fn conv2d<T: Scalar>(x: &DenseArray<T>, p: &Conv2DParams<T>) -> Result<DenseArray<T>> {
    let (c_in, h, w) = expect_chw("conv2d", x)?;
    if c_in != p.in_channels() {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "input channels",
            expected: p.in_channels(),
            got: c_in,
        });
    }
    let (kh, kw) = p.kernel();
    let (pad, stride) = (p.padding, p.stride);
    if h + 2 * pad < kh {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "height (padded input smaller than kernel)",
            expected: kh,
            got: h + 2 * pad,
        });
    }
    if w + 2 * pad < kw {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "width (padded input smaller than kernel)",
            expected: kw,
            got: w + 2 * pad,
        });
    }
    let out_h = (h + 2 * pad - kh) / stride + 1;
    let out_w = (w + 2 * pad - kw) / stride + 1;
    let out_c = p.out_channels();

    let xs = x.data();
    let ws = p.weights.data();
    let bias = p.bias.data();
    let plane = out_h * out_w;

    let mut out = vec![T::zero(); out_c * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(oc, dst)| {
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = bias[oc];
                for ic in 0..c_in {
                    let w_base = ((oc * c_in + ic) * kh) * kw;
                    let x_base = ic * h * w;
                    for ky in 0..kh {
                        let iy = (oh * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = x_base + iy as usize * w;
                        let wrow = w_base + ky * kw;
                        for kx in 0..kw {
                            let ix = (ow * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + ws[wrow + kx] * xs[row + ix as usize];
                        }
                    }
                }
                dst[oh * out_w + ow] = acc;
            }
        }
    });

    DenseArray::new(vec![out_c, out_h, out_w], out)
}

/// Gradients of a convolution's weights and bias given the upstream
/// gradient of its output. Used by the trainability smoke test; not a
/// general autograd facility.
pub fn conv2d_param_grads<T: Scalar>(
    x: &DenseArray<T>,
    p: &Conv2DParams<T>,
    grad_out: &DenseArray<T>,
) -> Result<(DenseArray<T>, DenseArray<T>)> {
    let (c_in, h, w) = expect_chw("conv2d_param_grads", x)?;
    let (out_c, out_h, out_w) = expect_chw("conv2d_param_grads", grad_out)?;
    if out_c != p.out_channels() {
        return Err(Error::AxisMismatch {
            op: "conv2d_param_grads",
            axis: "grad_out channels",
            expected: p.out_channels(),
            got: out_c,
        });
    }
    let (kh, kw) = p.kernel();
    let (pad, stride) = (p.padding, p.stride);

    let xs = x.data();
    let gs = grad_out.data();
    let mut d_w = vec![T::zero(); p.weights.len()];
    let mut d_b = vec![T::zero(); out_c];

    for oc in 0..out_c {
        let g_plane = &gs[oc * out_h * out_w..(oc + 1) * out_h * out_w];
        d_b[oc] = g_plane.iter().fold(T::zero(), |a, &g| a + g);
        for ic in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = T::zero();
                    for oh in 0..out_h {
                        let iy = (oh * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ow in 0..out_w {
                            let ix = (ow * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc
                                + g_plane[oh * out_w + ow]
                                    * xs[(ic * h + iy as usize) * w + ix as usize];
                        }
                    }
                    d_w[((oc * c_in + ic) * kh + ky) * kw + kx] = acc;
                }
            }
        }
    }

    Ok((
        DenseArray::new(p.weights.shape().to_vec(), d_w)?,
        DenseArray::new(vec![out_c], d_b)?,
    ))
}

/// Per-channel inference-mode batch normalization:
/// `(x - mean_c)/sqrt(var_c + eps) * gamma_c + beta_c`.
pub fn batch_norm_inference<T: Scalar>(
    x: &DenseArray<T>,
    p: &BatchNormParams<T>,
) -> Result<DenseArray<T>> {
    let (c, h, w) = expect_chw("batch_norm_inference", x)?;
    if c != p.gamma.len() {
        return Err(Error::AxisMismatch {
            op: "batch_norm_inference",
            axis: "channels",
            expected: p.gamma.len(),
            got: c,
        });
    }
    let mut out = Vec::with_capacity(x.len());
    for ci in 0..c {
        let inv = T::one() / (p.running_var.data()[ci] + p.epsilon).sqrt();
        let (g, b, m) = (p.gamma.data()[ci], p.beta.data()[ci], p.running_mean.data()[ci]);
        for &v in &x.data()[ci * h * w..(ci + 1) * h * w] {
            out.push((v - m) * inv * g + b);
        }
    }
    DenseArray::new(vec![c, h, w], out)
}

/// Bilinear resampling with the align-corners-false convention:
/// the source coordinate of destination pixel `d` is
/// `(d + 0.5) * (in/out) - 0.5`, clamped to the valid range.
/// Exact identity when the target size equals the source size.
pub fn bilinear_resize<T: Scalar>(
    x: &DenseArray<T>,
    out_h: usize,
    out_w: usize,
) -> Result<DenseArray<T>> {
    let (c, h, w) = expect_chw("bilinear_resize", x)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidParam {
            op: "bilinear_resize",
            what: "target extents must be >= 1".into(),
        });
    }

    // Precompute per-axis source offsets and lerp weights.
    let axis = |n_in: usize, n_out: usize| -> (Vec<usize>, Vec<usize>, Vec<T>) {
        let scale = n_in as f64 / n_out as f64;
        let mut lo = Vec::with_capacity(n_out);
        let mut hi = Vec::with_capacity(n_out);
        let mut wt = Vec::with_capacity(n_out);
        for d in 0..n_out {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            lo.push(i0);
            hi.push(i1);
            wt.push(T::from_f64(src - i0 as f64));
        }
        (lo, hi, wt)
    };
    let (y0, y1, wy) = axis(h, out_h);
    let (x0, x1, wx) = axis(w, out_w);

    let lerp = |a: T, b: T, t: T| a + t * (b - a);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ci in 0..c {
        let plane = &x.data()[ci * h * w..(ci + 1) * h * w];
        for oy in 0..out_h {
            let (r0, r1, ty) = (y0[oy] * w, y1[oy] * w, wy[oy]);
            for ox in 0..out_w {
                let top = lerp(plane[r0 + x0[ox]], plane[r0 + x1[ox]], wx[ox]);
                let bot = lerp(plane[r1 + x0[ox]], plane[r1 + x1[ox]], wx[ox]);
                out.push(lerp(top, bot, ty));
            }
        }
    }
    DenseArray::new(vec![c, out_h, out_w], out)
}

/// Rearranges a `[C,H,W]` feature map into a `[L=H*W, D=C]` sequence in
/// row-major raster order: position `k = h*W + w` carries the C-vector
/// at `(h, w)`.
pub fn im2seq<T: Scalar>(x: &DenseArray<T>) -> Result<DenseArray<T>> {
    let (c, h, w) = expect_chw("im2seq", x)?;
    let l = h * w;
    let mut out = vec![T::zero(); l * c];
    for ci in 0..c {
        let plane = &x.data()[ci * l..(ci + 1) * l];
        for (k, &v) in plane.iter().enumerate() {
            out[k * c + ci] = v;
        }
    }
    DenseArray::new(vec![l, c], out)
}

/// Exact inverse of [`im2seq`]: `[L,D]` back to `[D,H,W]` with `L == H*W`.
pub fn seq2im<T: Scalar>(s: &DenseArray<T>, h: usize, w: usize) -> Result<DenseArray<T>> {
    if s.rank() != 2 {
        return Err(Error::RankMismatch {
            op: "seq2im",
            expected: 2,
            got: s.shape().to_vec(),
        });
    }
    let (l, d) = (s.shape()[0], s.shape()[1]);
    if l != h * w {
        return Err(Error::AxisMismatch {
            op: "seq2im",
            axis: "sequence length",
            expected: h * w,
            got: l,
        });
    }
    let mut out = vec![T::zero(); d * l];
    for k in 0..l {
        let row = &s.data()[k * d..(k + 1) * d];
        for (ci, &v) in row.iter().enumerate() {
            out[ci * l + k] = v;
        }
    }
    DenseArray::new(vec![d, h, w], out)
}

/// Reverses the L axis of a `[L,D]` sequence.
pub fn flip_seq<T: Scalar>(s: &DenseArray<T>) -> DenseArray<T> {
    debug_assert_eq!(s.rank(), 2);
    let (l, d) = (s.shape()[0], s.shape()[1]);
    let mut out = Vec::with_capacity(l * d);
    for k in (0..l).rev() {
        out.extend_from_slice(&s.data()[k * d..(k + 1) * d]);
    }
    DenseArray::new(vec![l, d], out).expect("flip preserves shape")
}

/// Concatenates `[C_i,H,W]` maps along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&DenseArray<T>]) -> Result<DenseArray<T>> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("concat_channels"));
    }
    let (_, h, w) = expect_chw("concat_channels", parts[0])?;
    let mut total_c = 0;
    for part in parts {
        let (c, ph, pw) = expect_chw("concat_channels", part)?;
        if ph != h || pw != w {
            return Err(Error::AxisMismatch {
                op: "concat_channels",
                axis: "spatial extents",
                expected: h * w,
                got: ph * pw,
            });
        }
        total_c += c;
    }
    let mut data = Vec::with_capacity(total_c * h * w);
    for part in parts {
        data.extend_from_slice(part.data());
    }
    DenseArray::new(vec![total_c, h, w], data)
}

/// Splits a `[C,H,W]` map into C single-channel `[1,H,W]` maps.
pub fn split_channels<T: Scalar>(x: &DenseArray<T>) -> Result<Vec<DenseArray<T>>> {
    let (c, h, w) = expect_chw("split_channels", x)?;
    Ok((0..c)
        .map(|ci| {
            DenseArray::new(
                vec![1, h, w],
                x.data()[ci * h * w..(ci + 1) * h * w].to_vec(),
            )
            .expect("channel slice has plane extent")
        })
        .collect())
}

/// Per-channel global average pooling: `[C,H,W]` to `[C]`.
pub fn global_avg_pool<T: Scalar>(x: &DenseArray<T>) -> Result<DenseArray<T>> {
    let (c, h, w) = expect_chw("global_avg_pool", x)?;
    let inv = T::one() / T::from_f64((h * w) as f64);
    let out = (0..c)
        .map(|ci| {
            x.data()[ci * h * w..(ci + 1) * h * w]
                .iter()
                .fold(T::zero(), |a, &v| a + v)
                * inv
        })
        .collect();
    DenseArray::new(vec![c], out)
}

/// Per-channel global max pooling: `[C,H,W]` to `[C]`.
pub fn global_max_pool<T: Scalar>(x: &DenseArray<T>) -> Result<DenseArray<T>> {
    let (c, h, w) = expect_chw("global_max_pool", x)?;
    let out = (0..c)
        .map(|ci| {
            x.data()[ci * h * w..(ci + 1) * h * w]
                .iter()
                .fold(T::neg_infinity(), |a, &v| a.max(v))
        })
        .collect();
    DenseArray::new(vec![c], out)
}
