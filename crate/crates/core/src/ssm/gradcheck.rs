//! Central finite-difference verification of the analytic scan
//! backward. Runs in `f64`; the forward route for the differences is
//! the sequential oracle, independent of the backward code under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ssm::{prepare_scan, s6_scan_backward, s6_scan_seq, S6Params, ScanInputs};
use crate::tensor::DenseArray;

/// Outcome of one gradient check.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Number of scalar gradients compared.
    pub checked: usize,
    /// Worst relative error across all of them.
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

pub(crate) fn random_seq_f64(rng: &mut ChaCha8Rng, l: usize, d: usize) -> DenseArray<f64> {
    DenseArray::new(vec![l, d], (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape/data agreement")
}

pub(crate) fn random_params_f64(rng: &mut ChaCha8Rng, d: usize, n: usize) -> S6Params<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    let mk = |rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64| {
        let len: usize = shape.iter().product();
        DenseArray::new(shape, (0..len).map(|_| rng.gen_range(lo..hi)).collect())
            .expect("shape/data agreement")
    };
    S6Params::new(
        DenseArray::new(
            vec![d, n],
            (0..d * n).map(|i| (((i % n) + 1) as f64).ln()).collect(),
        )
        .expect("a_log shape"),
        mk(rng, vec![d], -1.0, 1.0),
        mk(rng, vec![d, n], -scale, scale),
        mk(rng, vec![d, n], -scale, scale),
        mk(rng, vec![d, d], -scale, scale),
        mk(rng, vec![d], -2.0, 0.0),
    )
    .expect("valid parameters")
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Checks every gradient of [`s6_scan_backward`] against central finite
/// differences on a seeded random instance. With `cross_modal` the scan
/// inputs are derived CM-S6 style, from a second independent sequence.
pub fn gradcheck_scan(
    seed: u64,
    l: usize,
    d: usize,
    n: usize,
    cross_modal: bool,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params_f64(&mut rng, d, n);
    let f_dyn = random_seq_f64(&mut rng, l, d);
    let f_in = if cross_modal {
        random_seq_f64(&mut rng, l, d)
    } else {
        f_dyn.clone()
    };
    let inputs = prepare_scan(&f_dyn, &f_in, &params).expect("consistent dims");
    let upstream = random_seq_f64(&mut rng, l, d);

    let grads = s6_scan_backward(&inputs, &upstream).expect("matching shapes");
    let loss = |inp: &ScanInputs<f64>| -> f64 {
        s6_scan_seq(inp)
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&y, &g)| y * g)
            .sum()
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
    };
    let mut sweep = |analytic: &DenseArray<f64>,
                     write: &dyn Fn(&mut ScanInputs<f64>) -> &mut DenseArray<f64>,
                     len: usize| {
        for i in 0..len {
            let mut plus = inputs.clone();
            write(&mut plus).data_mut()[i] += FD_STEP;
            let mut minus = inputs.clone();
            write(&mut minus).data_mut()[i] -= FD_STEP;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(rel_err(analytic.data()[i], fd));
        }
    };
    sweep(&grads.d_u, &|s| &mut s.u, l * d);
    sweep(&grads.d_a_bar, &|s| &mut s.a_bar, l * d * n);
    sweep(&grads.d_b_bar, &|s| &mut s.b_bar, l * d * n);
    sweep(&grads.d_c, &|s| &mut s.c, l * n);
    sweep(&grads.d_d_feed, &|s| &mut s.d_feed, d);
    report
}
