//! Sequential and parallel solvers for the selective-scan recurrence.

use rayon::prelude::*;

use crate::ssm::ScanInputs;
use crate::tensor::{DenseArray, Scalar};

/// Steps per chunk in the parallel scan.
pub const CHUNK: usize = 64;

/// Canonical sequential scan. With `h[-1] = 0`,
/// `h[k,d,:] = a_bar[k,d,:] * h[k-1,d,:] + b_bar[k,d,:] * u[k,d]` and
/// `y[k,d] = sum_n c[k,n] * h[k,d,n] + d_feed[d] * u[k,d]`.
///
/// This is the oracle every other scan implementation is checked
/// against, and the baseline for the `bench-scan` comparison.
pub fn s6_scan_seq<T: Scalar>(inp: &ScanInputs<T>) -> DenseArray<T> {
    let (l, d, n) = inp.dims();
    let a = inp.a_bar().data();
    let b = inp.b_bar().data();
    let c = inp.c().data();
    let u = inp.u().data();
    let feed = inp.d_feed().data();

    let lane = d * n;
    let mut h = vec![T::zero(); lane];
    let mut out = Vec::with_capacity(l * d);
    for k in 0..l {
        let c_row = &c[k * n..(k + 1) * n];
        let a_k = &a[k * lane..(k + 1) * lane];
        let b_k = &b[k * lane..(k + 1) * lane];
        let u_k = &u[k * d..(k + 1) * d];
        for di in 0..d {
            let u_kd = u_k[di];
            let h_row = &mut h[di * n..(di + 1) * n];
            let a_row = &a_k[di * n..(di + 1) * n];
            let b_row = &b_k[di * n..(di + 1) * n];
            let mut acc = T::zero();
            for (((hv, &av), &bv), &cv) in
                h_row.iter_mut().zip(a_row).zip(b_row).zip(c_row)
            {
                let next = av * *hv + bv * u_kd;
                *hv = next;
                acc = acc + cv * next;
            }
            out.push(acc + feed[di] * u_kd);
        }
    }
    DenseArray::new(vec![l, d], out).expect("scan output shape")
}

/// Chunked parallel scan.
///
/// Each per-lane step is the affine map `h -> a*h + b` with
/// `b = b_bar*u`; maps compose associatively as
/// `(a2,b2) . (a1,b1) = (a1*a2, a2*b1 + b2)`. The sequence is cut into
/// chunks of [`CHUNK`] steps:
///
/// 1. every chunk reduces its steps into one composed map (parallel),
/// 2. chunk-entry states propagate through those maps (sequential carry),
/// 3. every chunk replays its steps from its entry state and emits the
///    outputs (parallel).
///
/// The composition order is fixed by the chunk grid, so results are
/// bit-identical for any thread count.
pub fn s6_scan_parallel<T: Scalar>(inp: &ScanInputs<T>) -> DenseArray<T> {
    let (l, d, n) = inp.dims();
    let a = inp.a_bar().data();
    let b = inp.b_bar().data();
    let c = inp.c().data();
    let u = inp.u().data();
    let feed = inp.d_feed().data();

    let n_chunks = l.div_ceil(CHUNK);
    if n_chunks == 1 {
        return s6_scan_seq(inp);
    }
    let lane = d * n;

    // 1. per-chunk composed maps
    let mut agg_a = vec![T::one(); n_chunks * lane];
    let mut agg_b = vec![T::zero(); n_chunks * lane];
    agg_a
        .par_chunks_mut(lane)
        .zip(agg_b.par_chunks_mut(lane))
        .enumerate()
        .for_each(|(j, (ca, cb))| {
            let k_end = ((j + 1) * CHUNK).min(l);
            for k in j * CHUNK..k_end {
                let a_k = &a[k * lane..(k + 1) * lane];
                let b_k = &b[k * lane..(k + 1) * lane];
                let u_k = &u[k * d..(k + 1) * d];
                for di in 0..d {
                    let u_kd = u_k[di];
                    let ca_row = &mut ca[di * n..(di + 1) * n];
                    let cb_row = &mut cb[di * n..(di + 1) * n];
                    let a_row = &a_k[di * n..(di + 1) * n];
                    let b_row = &b_k[di * n..(di + 1) * n];
                    for (((cav, cbv), &av), &bv) in
                        ca_row.iter_mut().zip(cb_row.iter_mut()).zip(a_row).zip(b_row)
                    {
                        *cbv = av * *cbv + bv * u_kd;
                        *cav = *cav * av;
                    }
                }
            }
        });

    // 2. chunk-entry states (carry chain)
    let mut carries = vec![T::zero(); n_chunks * lane];
    for j in 1..n_chunks {
        let (prev, cur) = carries.split_at_mut(j * lane);
        let prev = &prev[(j - 1) * lane..];
        let cur = &mut cur[..lane];
        let ca = &agg_a[(j - 1) * lane..j * lane];
        let cb = &agg_b[(j - 1) * lane..j * lane];
        for i in 0..lane {
            cur[i] = ca[i] * prev[i] + cb[i];
        }
    }

    // 3. replay each chunk from its entry state
    let mut out = vec![T::zero(); l * d];
    out.par_chunks_mut(CHUNK * d)
        .enumerate()
        .for_each(|(j, dst)| {
            let mut h = carries[j * lane..(j + 1) * lane].to_vec();
            let k_end = ((j + 1) * CHUNK).min(l);
            for (row, k) in (j * CHUNK..k_end).enumerate() {
                let c_row = &c[k * n..(k + 1) * n];
                let a_k = &a[k * lane..(k + 1) * lane];
                let b_k = &b[k * lane..(k + 1) * lane];
                let u_k = &u[k * d..(k + 1) * d];
                for di in 0..d {
                    let u_kd = u_k[di];
                    let h_row = &mut h[di * n..(di + 1) * n];
                    let a_row = &a_k[di * n..(di + 1) * n];
                    let b_row = &b_k[di * n..(di + 1) * n];
                    let mut acc = T::zero();
                    for (((hv, &av), &bv), &cv) in
                        h_row.iter_mut().zip(a_row).zip(b_row).zip(c_row)
                    {
                        let next = av * *hv + bv * u_kd;
                        *hv = next;
                        acc = acc + cv * next;
                    }
                    dst[row * d + di] = acc + feed[di] * u_kd;
                }
            }
        });

    DenseArray::new(vec![l, d], out).expect("scan output shape")
}
