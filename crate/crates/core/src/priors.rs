//! Training-free saliency priors.
//!
//! Three cheap per-pixel estimates of salience, one per assumption:
//! salient objects sit in front of their surroundings (Otsu front mask
//! of the enhanced depth map), salience follows local contrast
//! (morphological gradients of the RGB channels and the depth map), and
//! salient objects sit near the image center (Gaussian center mask).

use crate::error::{Error, Result};
use crate::tensor::{split_channels, DenseArray};

/// The three saliency priors plus every intermediate map.
#[derive(Clone, Debug)]
pub struct PriorSet {
    /// Depth-front prior (equals `o_front`).
    pub s1: DenseArray,
    /// Local-contrast prior: min-max normalized `c_x + c_y`.
    pub s2: DenseArray,
    /// Center prior (equals `m`).
    pub s3: DenseArray,
    /// Binary front mask from the Otsu split of the depth map.
    pub o_front: DenseArray,
    /// Complement of `o_front`.
    pub o_back: DenseArray,
    /// Summed per-channel morphological gradients of the RGB image.
    pub c_x: DenseArray,
    /// Morphological gradient of the depth map.
    pub c_y: DenseArray,
    /// Gaussian center mask.
    pub m: DenseArray,
}

fn expect_single_channel(op: &'static str, img: &DenseArray) -> Result<(usize, usize)> {
    if img.rank() != 3 || img.shape()[0] != 1 {
        return Err(Error::RankMismatch {
            op,
            expected: 3,
            got: img.shape().to_vec(),
        });
    }
    Ok((img.shape()[1], img.shape()[2]))
}

/// Exact comparison of two non-negative rational scores `n1/d1 > n2/d2`.
/// A zero denominator denotes a score of zero (one class empty). Falls
/// back to `f64` only if the u128 cross products overflow, which needs
/// images beyond ~256k pixels.
fn rational_gt(n1: u128, d1: u128, n2: u128, d2: u128) -> bool {
    match (d1 == 0, d2 == 0) {
        (true, _) => false,
        (false, true) => n1 > 0,
        (false, false) => match (n1.checked_mul(d2), n2.checked_mul(d1)) {
            (Some(a), Some(b)) => a > b,
            _ => (n1 as f64 / d1 as f64) > (n2 as f64 / d2 as f64),
        },
    }
}

/// Otsu's threshold over a 256-bin histogram, returning the threshold
/// together with the front mask (`pixel > threshold`) and its
/// complement. The selected bin maximizes the between-class variance;
/// ties resolve to the lowest maximizing threshold. The argmax is
/// computed with exact integer arithmetic, so it is reproducible
/// bit-for-bit. A constant image (single occupied bin) degenerates to
/// an all-front mask.
pub fn otsu_threshold(img: &DenseArray) -> Result<(f32, DenseArray, DenseArray)> {
    let (h, w) = expect_single_channel("otsu_threshold", img)?;
    if img.is_empty() {
        return Err(Error::EmptyInput("otsu_threshold"));
    }

    let bin_of = |v: f32| -> usize { ((v * 255.0).round().clamp(0.0, 255.0)) as usize };
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[bin_of(v)] += 1;
    }

    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied <= 1 {
        let k = hist.iter().position(|&c| c > 0).unwrap_or(0);
        let front = DenseArray::full(vec![1, h, w], 1.0);
        let back = DenseArray::zeros(vec![1, h, w]);
        return Ok((k as f32 / 255.0, front, back));
    }

    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    // between-class variance at split k is proportional to
    // (s0*W - S*w0)^2 / (w0*(W - w0)) with all quantities integral
    let mut best_k = 0usize;
    let mut best_num = 0u128;
    let mut best_den = 0u128;
    let mut w0 = 0u64;
    let mut s0 = 0u64;
    for (k, &count) in hist.iter().enumerate() {
        w0 += count;
        s0 += k as u64 * count;
        let w1 = total - w0;
        let b = s0 as i128 * total as i128 - total_sum as i128 * w0 as i128;
        let num = (b.unsigned_abs()).pow(2);
        let den = w0 as u128 * w1 as u128;
        if rational_gt(num, den, best_num, best_den) {
            best_k = k;
            best_num = num;
            best_den = den;
        }
    }

    let t = best_k as f32 / 255.0;
    let front = img.map(|v| if v > t { 1.0 } else { 0.0 });
    let back = front.map(|v| 1.0 - v);
    Ok((t, front, back))
}

/// Morphological gradient: windowed max minus windowed min over a 3x3
/// square structuring element with replicated borders. Non-negative by
/// construction; zero on constant images.
pub fn morphological_gradient(img: &DenseArray) -> Result<DenseArray> {
    let (h, w) = expect_single_channel("morphological_gradient", img)?;
    let data = img.data();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let y0 = y.saturating_sub(1);
        let y1 = (y + 1).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(1);
            let x1 = (x + 1).min(w - 1);
            let mut hi = f32::NEG_INFINITY;
            let mut lo = f32::INFINITY;
            for yy in y0..=y1 {
                for &v in &data[yy * w + x0..=yy * w + x1] {
                    hi = hi.max(v);
                    lo = lo.min(v);
                }
            }
            out.push(hi - lo);
        }
    }
    DenseArray::new(vec![1, h, w], out)
}

/// Per-channel morphological gradients of an RGB image, summed into a
/// single contrast map.
pub fn rgb_contrast(img: &DenseArray) -> Result<DenseArray> {
    if img.rank() != 3 || img.shape()[0] != 3 {
        return Err(Error::AxisMismatch {
            op: "rgb_contrast",
            axis: "channels",
            expected: 3,
            got: if img.rank() == 3 { img.shape()[0] } else { 0 },
        });
    }
    let channels = split_channels(img)?;
    let mut acc = morphological_gradient(&channels[0])?;
    for ch in &channels[1..] {
        acc = acc.add(&morphological_gradient(ch)?)?;
    }
    Ok(acc)
}

/// Gaussian center mask: `exp(-d^2 / (2 sigma^2))` with `d` the distance
/// from the pixel center to the image center and `sigma = 0.3*min(H,W)`.
/// Maximal at the center, symmetric under horizontal/vertical flips.
pub fn center_mask(h: usize, w: usize) -> Result<DenseArray> {
    if h == 0 || w == 0 {
        return Err(Error::EmptyInput("center_mask"));
    }
    let sigma = 0.3 * h.min(w) as f64;
    let two_sigma_sq = 2.0 * sigma * sigma;
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let dy = (y as f64 + 0.5) - cy;
        for x in 0..w {
            let dx = (x as f64 + 0.5) - cx;
            out.push((-(dy * dy + dx * dx) / two_sigma_sq).exp() as f32);
        }
    }
    DenseArray::new(vec![1, h, w], out)
}

/// Maps `[min, max]` onto `[0, 1]`; a constant map becomes 0.5 everywhere
/// so downstream multiplications stay non-annihilating.
pub fn minmax_normalize(img: &DenseArray) -> DenseArray {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in img.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return DenseArray::full(img.shape().to_vec(), 0.5);
    }
    let span = hi - lo;
    img.map(|v| (v - lo) / span)
}

/// Computes the full prior set from an RGB image and its
/// contrast-enhanced depth map.
pub fn compute_priors(i_x: &DenseArray, i_y: &DenseArray) -> Result<PriorSet> {
    if i_x.rank() != 3 || i_x.shape()[0] != 3 {
        return Err(Error::RankMismatch {
            op: "compute_priors (rgb)",
            expected: 3,
            got: i_x.shape().to_vec(),
        });
    }
    let (h, w) = expect_single_channel("compute_priors (depth)", i_y)?;
    if i_x.shape()[1] != h || i_x.shape()[2] != w {
        return Err(Error::AxisMismatch {
            op: "compute_priors",
            axis: "spatial extents",
            expected: h * w,
            got: i_x.shape()[1] * i_x.shape()[2],
        });
    }

    let (_t, o_front, o_back) = otsu_threshold(i_y)?;
    let c_x = rgb_contrast(i_x)?;
    let c_y = morphological_gradient(i_y)?;
    let s2 = minmax_normalize(&c_x.add(&c_y)?);
    let m = center_mask(h, w)?;

    Ok(PriorSet {
        s1: o_front.clone(),
        s2,
        s3: m.clone(),
        o_front,
        o_back,
        c_x,
        c_y,
        m,
    })
}
