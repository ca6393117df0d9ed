//! Hybrid training loss: binary cross-entropy + SSIM loss + IoU loss,
//! with the analytic gradient with respect to the prediction.

use crate::error::{Error, Result};
use crate::tensor::{DenseArray, Scalar};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the
/// log terms.
pub const BCE_CLAMP: f64 = 1e-7;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Loss value, its three components, and `dLoss/dP`.
#[derive(Clone, Debug)]
pub struct HybridLoss<T: Scalar> {
    pub total: T,
    pub bce: T,
    pub ssim: T,
    pub iou: T,
    pub grad: DenseArray<T>,
}

fn gaussian_window<T: Scalar>() -> Vec<T> {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            sum += v;
            w.push(v);
        }
    }
    w.into_iter().map(|v| T::from_f64(v / sum)).collect()
}

/// `loss = BCE + (1 - mean SSIM) + (1 - soft IoU)` over a `[1,H,W]`
/// prediction in (0,1) and ground truth in [0,1]. SSIM uses 11x11
/// Gaussian windows (sigma 1.5, stabilizers 0.01^2 and 0.03^2) over
/// valid window positions, so H and W must be at least 11.
pub fn hybrid_loss<T: Scalar>(p: &DenseArray<T>, g: &DenseArray<T>) -> Result<HybridLoss<T>> {
    if p.rank() != 3 || p.shape()[0] != 1 {
        return Err(Error::RankMismatch {
            op: "hybrid_loss",
            expected: 3,
            got: p.shape().to_vec(),
        });
    }
    if p.shape() != g.shape() {
        return Err(Error::TensorShape {
            name: "g".into(),
            expected: p.shape().to_vec(),
            got: g.shape().to_vec(),
        });
    }
    let (h, w) = (p.shape()[1], p.shape()[2]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParam {
            op: "hybrid_loss",
            what: format!("extents must be >= {SSIM_WINDOW} for the SSIM window, got {h}x{w}"),
        });
    }
    let n = h * w;
    let inv_n = T::from_f64(1.0 / n as f64);
    let pd = p.data();
    let gd = g.data();
    let mut grad = vec![T::zero(); n];

    // binary cross-entropy with clamped prediction
    let lo = T::from_f64(BCE_CLAMP);
    let hi = T::one() - lo;
    let mut bce = T::zero();
    for i in 0..n {
        let pc = pd[i].max(lo).min(hi);
        bce = bce - (gd[i] * pc.ln() + (T::one() - gd[i]) * (T::one() - pc).ln());
        if pd[i] > lo && pd[i] < hi {
            grad[i] = grad[i] - inv_n * (gd[i] / pc - (T::one() - gd[i]) / (T::one() - pc));
        }
    }
    let bce = bce * inv_n;

    // SSIM over valid window positions
    let window: Vec<T> = gaussian_window();
    let (wh, ww) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let n_windows = wh * ww;
    let inv_t = T::from_f64(1.0 / n_windows as f64);
    let c1 = T::from_f64(SSIM_C1);
    let c2 = T::from_f64(SSIM_C2);
    let two = T::from_f64(2.0);
    let mut ssim_sum = T::zero();
    for wy in 0..wh {
        for wx in 0..ww {
            let mut mu_p = T::zero();
            let mut mu_g = T::zero();
            let mut pp = T::zero();
            let mut gg = T::zero();
            let mut pg = T::zero();
            for ky in 0..SSIM_WINDOW {
                let row = (wy + ky) * w + wx;
                let wrow = ky * SSIM_WINDOW;
                for kx in 0..SSIM_WINDOW {
                    let wt = window[wrow + kx];
                    let pv = pd[row + kx];
                    let gv = gd[row + kx];
                    mu_p = mu_p + wt * pv;
                    mu_g = mu_g + wt * gv;
                    pp = pp + wt * pv * pv;
                    gg = gg + wt * gv * gv;
                    pg = pg + wt * pv * gv;
                }
            }
            let var_p = pp - mu_p * mu_p;
            let var_g = gg - mu_g * mu_g;
            let cov = pg - mu_p * mu_g;

            let a1 = two * mu_p * mu_g + c1;
            let a2 = two * cov + c2;
            let b1 = mu_p * mu_p + mu_g * mu_g + c1;
            let b2 = var_p + var_g + c2;
            let s = (a1 * a2) / (b1 * b2);
            ssim_sum = ssim_sum + s;

            // dS/dP_i scattered back into the window; the SSIM-loss
            // contribution is -dS/dP_i / n_windows
            let inv_b1b2 = T::one() / (b1 * b2);
            let coef_mu = two * mu_g * a2 * inv_b1b2 - two * mu_p * s / b1;
            let coef_g = two * a1 * inv_b1b2;
            let coef_p = two * s / b2;
            for ky in 0..SSIM_WINDOW {
                let row = (wy + ky) * w + wx;
                let wrow = ky * SSIM_WINDOW;
                for kx in 0..SSIM_WINDOW {
                    let wt = window[wrow + kx];
                    let ds = wt
                        * (coef_mu + coef_g * (gd[row + kx] - mu_g)
                            - coef_p * (pd[row + kx] - mu_p));
                    grad[row + kx] = grad[row + kx] - inv_t * ds;
                }
            }
        }
    }
    let ssim_loss = T::one() - ssim_sum * inv_t;

    // soft IoU with +1 smoothing
    let mut inter = T::zero();
    let mut sum_p = T::zero();
    let mut sum_g = T::zero();
    for i in 0..n {
        inter = inter + pd[i] * gd[i];
        sum_p = sum_p + pd[i];
        sum_g = sum_g + gd[i];
    }
    let union = sum_p + sum_g - inter;
    let iou_loss = T::one() - (inter + T::one()) / (union + T::one());
    let denom = (union + T::one()) * (union + T::one());
    for i in 0..n {
        let d = (gd[i] * (union + T::one()) - (inter + T::one()) * (T::one() - gd[i])) / denom;
        grad[i] = grad[i] - d;
    }

    Ok(HybridLoss {
        total: bce + ssim_loss + iou_loss,
        bce,
        ssim: ssim_loss,
        iou: iou_loss,
        grad: DenseArray::new(p.shape().to_vec(), grad)?,
    })
}

/// Central finite-difference check of the loss gradient on a seeded
/// random prediction/ground-truth pair.
pub fn gradcheck_loss(seed: u64, h: usize, w: usize) -> Result<crate::ssm::GradCheckReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = DenseArray::<f64>::new(
        vec![1, h, w],
        (0..h * w).map(|_| rng.gen_range(0.05..0.95)).collect(),
    )?;
    let g = DenseArray::<f64>::new(
        vec![1, h, w],
        (0..h * w)
            .map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
            .collect(),
    )?;
    let analytic = hybrid_loss(&p, &g)?;
    let step = crate::ssm::gradcheck::FD_STEP;
    let mut report = crate::ssm::GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
    };
    for i in 0..h * w {
        let mut plus = p.clone();
        plus.data_mut()[i] += step;
        let mut minus = p.clone();
        minus.data_mut()[i] -= step;
        let fd =
            (hybrid_loss(&plus, &g)?.total - hybrid_loss(&minus, &g)?.total) / (2.0 * step);
        let a = analytic.grad.data()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        report.checked += 1;
        report.max_rel_err = report.max_rel_err.max(rel);
    }
    Ok(report)
}
