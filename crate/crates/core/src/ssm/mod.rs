//! Selective-scan state-space kernels.
//!
//! The S6 mechanism derives its input matrix `B`, output matrix `C`,
//! and timestep `delta` from the input sequence itself, discretizes the
//! continuous state matrix `A` by zero-order hold, then solves the
//! linear recurrence
//!
//! ```text
//! h[k] = A_bar[k] * h[k-1] + B_bar[k] * u[k]
//! y[k] = C[k] . h[k] + D_feed * u[k]
//! ```
//!
//! per channel `d` over a state of width `N`. The cross-modal variant
//! CM-S6 derives `B`, `C`, `delta` from one modality while scanning the
//! other, so the recurrence dynamics of one stream are driven by the
//! other stream's content.
//!
//! [`s6_scan_seq`] is the canonical sequential oracle.
//! [`s6_scan_parallel`] computes the same contract with a chunked scan
//! using the associative composition
//! `(a2,b2) . (a1,b1) = (a1*a2, a2*b1 + b2)`, parallel across chunks
//! and channels, with a sequential carry between chunk boundaries.

mod backward;
pub mod gradcheck;
mod scan;

pub use backward::{s6_scan_backward, ScanGradients};
pub use gradcheck::{gradcheck_scan, GradCheckReport};
pub use scan::{s6_scan_parallel, s6_scan_seq, CHUNK};

use crate::error::{Error, Result};
use crate::tensor::{flip_seq, DenseArray, Scalar};

/// Learnable parameters of one S6 (or CM-S6) mechanism.
///
/// The state matrix is parameterized as `A = -exp(a_log)`, which keeps
/// every entry strictly negative and the discretized `A_bar = exp(delta*A)`
/// inside `(0, 1]`.
#[derive(Clone, Debug)]
pub struct S6Params<T: Scalar = f32> {
    /// `[D,N]`; `A = -exp(a_log)` elementwise.
    pub a_log: DenseArray<T>,
    /// `[D]` feedthrough applied to the scanned input.
    pub d_feed: DenseArray<T>,
    /// `[D,N]` projection producing `B = f . w_b`.
    pub w_b: DenseArray<T>,
    /// `[D,N]` projection producing `C = f . w_c`.
    pub w_c: DenseArray<T>,
    /// `[D,D]` projection for the timestep.
    pub w_delta: DenseArray<T>,
    /// `[D]` timestep bias; `delta = softplus(f . w_delta + b_delta)`.
    pub b_delta: DenseArray<T>,
}

impl<T: Scalar> S6Params<T> {
    pub fn new(
        a_log: DenseArray<T>,
        d_feed: DenseArray<T>,
        w_b: DenseArray<T>,
        w_c: DenseArray<T>,
        w_delta: DenseArray<T>,
        b_delta: DenseArray<T>,
    ) -> Result<Self> {
        if a_log.rank() != 2 {
            return Err(Error::RankMismatch {
                op: "S6Params",
                expected: 2,
                got: a_log.shape().to_vec(),
            });
        }
        let (d, n) = (a_log.shape()[0], a_log.shape()[1]);
        let checks: [(&str, &DenseArray<T>, &[usize]); 5] = [
            ("d_feed", &d_feed, &[d]),
            ("w_b", &w_b, &[d, n]),
            ("w_c", &w_c, &[d, n]),
            ("w_delta", &w_delta, &[d, d]),
            ("b_delta", &b_delta, &[d]),
        ];
        for (name, t, want) in checks {
            if t.shape() != want {
                return Err(Error::TensorShape {
                    name: name.into(),
                    expected: want.to_vec(),
                    got: t.shape().to_vec(),
                });
            }
        }
        for (name, t) in [
            ("a_log", &a_log),
            ("d_feed", &d_feed),
            ("w_b", &w_b),
            ("w_c", &w_c),
            ("w_delta", &w_delta),
            ("b_delta", &b_delta),
        ] {
            if !t.all_finite() {
                return Err(Error::InvalidParam {
                    op: "S6Params",
                    what: format!("{name} contains non-finite values"),
                });
            }
        }
        Ok(Self {
            a_log,
            d_feed,
            w_b,
            w_c,
            w_delta,
            b_delta,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.a_log.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.a_log.shape()[1]
    }

    /// `A = -exp(a_log)`, strictly negative.
    pub fn state_matrix(&self) -> DenseArray<T> {
        self.a_log.map(|v| -v.exp())
    }
}

/// Discretized inputs to the scan kernels. Constructed through
/// [`ScanInputs::new`], which enforces the shape contract and the
/// `A_bar` range invariant.
#[derive(Clone, Debug)]
pub struct ScanInputs<T: Scalar = f32> {
    u: DenseArray<T>,
    a_bar: DenseArray<T>,
    b_bar: DenseArray<T>,
    c: DenseArray<T>,
    d_feed: DenseArray<T>,
}

impl<T: Scalar> ScanInputs<T> {
    pub fn new(
        u: DenseArray<T>,
        a_bar: DenseArray<T>,
        b_bar: DenseArray<T>,
        c: DenseArray<T>,
        d_feed: DenseArray<T>,
    ) -> Result<Self> {
        if u.rank() != 2 {
            return Err(Error::RankMismatch {
                op: "ScanInputs",
                expected: 2,
                got: u.shape().to_vec(),
            });
        }
        let (l, d) = (u.shape()[0], u.shape()[1]);
        if a_bar.rank() != 3 || a_bar.shape()[0] != l || a_bar.shape()[1] != d {
            return Err(Error::TensorShape {
                name: "a_bar".into(),
                expected: vec![l, d, 0],
                got: a_bar.shape().to_vec(),
            });
        }
        let n = a_bar.shape()[2];
        if b_bar.shape() != [l, d, n] {
            return Err(Error::TensorShape {
                name: "b_bar".into(),
                expected: vec![l, d, n],
                got: b_bar.shape().to_vec(),
            });
        }
        if c.shape() != [l, n] {
            return Err(Error::TensorShape {
                name: "c".into(),
                expected: vec![l, n],
                got: c.shape().to_vec(),
            });
        }
        if d_feed.shape() != [d] {
            return Err(Error::TensorShape {
                name: "d_feed".into(),
                expected: vec![d],
                got: d_feed.shape().to_vec(),
            });
        }
        if a_bar
            .data()
            .iter()
            .any(|&v| !(v > T::zero() && v <= T::one()))
        {
            return Err(Error::InvalidParam {
                op: "ScanInputs",
                what: "a_bar must lie in (0, 1]".into(),
            });
        }
        Ok(Self {
            u,
            a_bar,
            b_bar,
            c,
            d_feed,
        })
    }

    /// `(L, D, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.shape()[0], self.u.shape()[1], self.a_bar.shape()[2])
    }

    pub fn u(&self) -> &DenseArray<T> {
        &self.u
    }

    pub fn a_bar(&self) -> &DenseArray<T> {
        &self.a_bar
    }

    pub fn b_bar(&self) -> &DenseArray<T> {
        &self.b_bar
    }

    pub fn c(&self) -> &DenseArray<T> {
        &self.c
    }

    pub fn d_feed(&self) -> &DenseArray<T> {
        &self.d_feed
    }
}

/// Which scan implementation to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanBackend {
    /// Canonical sequential recurrence.
    Sequential,
    /// Chunked parallel scan with sequential carry.
    #[default]
    Parallel,
}

impl ScanBackend {
    pub fn scan<T: Scalar>(self, inputs: &ScanInputs<T>) -> DenseArray<T> {
        match self {
            ScanBackend::Sequential => s6_scan_seq(inputs),
            ScanBackend::Parallel => s6_scan_parallel(inputs),
        }
    }
}

/// `a [m,k] . b [k,n]`, row-major.
fn matmul<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// Derives the input-dependent parameters from a feature sequence:
/// `B = f.w_b`, `C = f.w_c`, `delta = softplus(f.w_delta + b_delta)`.
/// `delta` is strictly positive.
pub fn derive_params<T: Scalar>(
    f: &DenseArray<T>,
    p: &S6Params<T>,
) -> Result<(DenseArray<T>, DenseArray<T>, DenseArray<T>)> {
    if f.rank() != 2 {
        return Err(Error::RankMismatch {
            op: "derive_params",
            expected: 2,
            got: f.shape().to_vec(),
        });
    }
    let (l, d) = (f.shape()[0], f.shape()[1]);
    if d != p.feature_dim() {
        return Err(Error::AxisMismatch {
            op: "derive_params",
            axis: "feature dim",
            expected: p.feature_dim(),
            got: d,
        });
    }
    let n = p.state_dim();
    let b = matmul(f.data(), l, d, p.w_b.data(), n);
    let c = matmul(f.data(), l, d, p.w_c.data(), n);
    let mut delta = matmul(f.data(), l, d, p.w_delta.data(), d);
    for row in delta.chunks_mut(d) {
        for (v, &bias) in row.iter_mut().zip(p.b_delta.data()) {
            *v = crate::tensor::softplus(*v + bias);
        }
    }
    Ok((
        DenseArray::new(vec![l, n], b)?,
        DenseArray::new(vec![l, n], c)?,
        DenseArray::new(vec![l, d], delta)?,
    ))
}

/// Zero-order-hold discretization: `A_bar[k,d,n] = exp(delta[k,d]*A[d,n])`
/// and `B_bar[k,d,n] = delta[k,d]*B[k,n]`.
pub fn discretize<T: Scalar>(
    delta: &DenseArray<T>,
    a: &DenseArray<T>,
    b: &DenseArray<T>,
) -> Result<(DenseArray<T>, DenseArray<T>)> {
    let (l, d) = (delta.shape()[0], delta.shape()[1]);
    let n = a.shape()[1];
    if a.shape()[0] != d {
        return Err(Error::AxisMismatch {
            op: "discretize",
            axis: "state matrix rows",
            expected: d,
            got: a.shape()[0],
        });
    }
    if b.shape() != [l, n] {
        return Err(Error::TensorShape {
            name: "b".into(),
            expected: vec![l, n],
            got: b.shape().to_vec(),
        });
    }
    let mut a_bar = Vec::with_capacity(l * d * n);
    let mut b_bar = Vec::with_capacity(l * d * n);
    for k in 0..l {
        let b_row = &b.data()[k * n..(k + 1) * n];
        for di in 0..d {
            let dt = delta.data()[k * d + di];
            let a_row = &a.data()[di * n..(di + 1) * n];
            for ni in 0..n {
                a_bar.push((dt * a_row[ni]).exp());
                b_bar.push(dt * b_row[ni]);
            }
        }
    }
    Ok((
        DenseArray::new(vec![l, d, n], a_bar)?,
        DenseArray::new(vec![l, d, n], b_bar)?,
    ))
}

/// Builds scan inputs with dynamics (`B`, `C`, `delta`) derived from
/// `f_dyn` and `f_in` as the scanned input. S6 passes the same sequence
/// for both; CM-S6 passes the two modalities.
pub fn prepare_scan<T: Scalar>(
    f_dyn: &DenseArray<T>,
    f_in: &DenseArray<T>,
    p: &S6Params<T>,
) -> Result<ScanInputs<T>> {
    if f_dyn.shape() != f_in.shape() {
        return Err(Error::TensorShape {
            name: "f_in".into(),
            expected: f_dyn.shape().to_vec(),
            got: f_in.shape().to_vec(),
        });
    }
    let (b, c, delta) = derive_params(f_dyn, p)?;
    let a = p.state_matrix();
    let (a_bar, b_bar) = discretize(&delta, &a, &b)?;
    ScanInputs::new(f_in.clone(), a_bar, b_bar, c, p.d_feed.clone())
}

/// The S6 mechanism: derive, discretize, scan.
pub fn s6_forward<T: Scalar>(
    f: &DenseArray<T>,
    p: &S6Params<T>,
    backend: ScanBackend,
) -> Result<DenseArray<T>> {
    Ok(backend.scan(&prepare_scan(f, f, p)?))
}

/// The CM-S6 mechanism: dynamics from `f_x`, scanned input `f_y`.
/// `cm_s6_forward(f, f, p)` is bit-identical to `s6_forward(f, p)`.
pub fn cm_s6_forward<T: Scalar>(
    f_x: &DenseArray<T>,
    f_y: &DenseArray<T>,
    p: &S6Params<T>,
    backend: ScanBackend,
) -> Result<DenseArray<T>> {
    Ok(backend.scan(&prepare_scan(f_x, f_y, p)?))
}

/// Independent parameter sets for the forward and the flipped pass.
#[derive(Clone, Debug)]
pub struct BidirectionalParams<T: Scalar = f32> {
    pub fwd: S6Params<T>,
    pub bwd: S6Params<T>,
}

fn concat_feature_dim<T: Scalar>(a: &DenseArray<T>, b: &DenseArray<T>) -> Result<DenseArray<T>> {
    let (l, da) = (a.shape()[0], a.shape()[1]);
    let db = b.shape()[1];
    if b.shape()[0] != l {
        return Err(Error::AxisMismatch {
            op: "concat_feature_dim",
            axis: "sequence length",
            expected: l,
            got: b.shape()[0],
        });
    }
    let mut out = Vec::with_capacity(l * (da + db));
    for k in 0..l {
        out.extend_from_slice(&a.data()[k * da..(k + 1) * da]);
        out.extend_from_slice(&b.data()[k * db..(k + 1) * db]);
    }
    DenseArray::new(vec![l, da + db], out)
}

/// Runs S6 forward and on the flipped sequence, flips the second output
/// back, and concatenates along the channel axis: `[L,D] -> [L,2D]`.
pub fn s6_bidirectional<T: Scalar>(
    f: &DenseArray<T>,
    p: &BidirectionalParams<T>,
    backend: ScanBackend,
) -> Result<DenseArray<T>> {
    let fwd = s6_forward(f, &p.fwd, backend)?;
    let rev = flip_seq(&s6_forward(&flip_seq(f), &p.bwd, backend)?);
    concat_feature_dim(&fwd, &rev)
}

/// Bidirectional CM-S6; the flipped pass flips both modalities together.
pub fn cm_s6_bidirectional<T: Scalar>(
    f_x: &DenseArray<T>,
    f_y: &DenseArray<T>,
    p: &BidirectionalParams<T>,
    backend: ScanBackend,
) -> Result<DenseArray<T>> {
    let fwd = cm_s6_forward(f_x, f_y, &p.fwd, backend)?;
    let rev = flip_seq(&cm_s6_forward(
        &flip_seq(f_x),
        &flip_seq(f_y),
        &p.bwd,
        backend,
    )?);
    concat_feature_dim(&fwd, &rev)
}
