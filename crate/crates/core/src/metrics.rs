//! Saliency evaluation metrics: MAE, thresholded F-measure with PR
//! curves, structure measure, and enhanced-alignment measure, plus
//! directory-level evaluation.
//!
//! Ground truth is binarized at 0.5. Thresholded metrics sweep the 256
//! thresholds `t = k/255` with the strict comparison `p > t`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseArray;

/// `beta^2` in the F-measure.
pub const F_BETA_SQ: f64 = 0.3;
/// Structure-measure object/region blend.
pub const S_ALPHA: f64 = 0.5;
/// Number of binarization thresholds.
pub const THRESHOLDS: usize = 256;

/// Metrics for one prediction/ground-truth pair or a dataset average.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub f_beta_max: f64,
    pub s_measure: f64,
    pub e_measure_max: f64,
    pub e_measure_mean: f64,
    /// 256 `(precision, recall)` pairs, one per threshold.
    pub pr_points: Vec<(f64, f64)>,
}

impl MetricReport {
    /// Fixed 6-decimal JSON rendering.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"mae\": {:.6}, \"f_beta_max\": {:.6}, \"s_measure\": {:.6}, \
             \"e_measure_max\": {:.6}, \"e_measure_mean\": {:.6}, \"pr\": [",
            self.mae, self.f_beta_max, self.s_measure, self.e_measure_max, self.e_measure_mean
        ));
        for (i, (p, r)) in self.pr_points.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("[{p:.6}, {r:.6}]"));
        }
        out.push_str("]}");
        out
    }
}

fn check_pair(op: &'static str, p: &DenseArray, g: &DenseArray) -> Result<()> {
    if p.rank() != 3 || p.shape()[0] != 1 {
        return Err(Error::RankMismatch {
            op,
            expected: 3,
            got: p.shape().to_vec(),
        });
    }
    if p.shape() != g.shape() {
        return Err(Error::TensorShape {
            name: "ground truth".into(),
            expected: p.shape().to_vec(),
            got: g.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(p: &DenseArray, g: &DenseArray) -> Result<f64> {
    check_pair("mae", p, g)?;
    let sum: f64 = p
        .data()
        .iter()
        .zip(g.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / p.len() as f64)
}

fn binarize_gt(g: &DenseArray) -> Vec<bool> {
    g.data().iter().map(|&v| v > 0.5).collect()
}

/// Thresholded F-measure: maximum F over the 256 thresholds, plus the
/// full precision/recall curve. An empty prediction scores precision 1
/// against an empty ground truth and 0 otherwise.
pub fn f_beta(p: &DenseArray, g: &DenseArray) -> Result<(f64, Vec<(f64, f64)>)> {
    check_pair("f_beta", p, g)?;
    let gb = binarize_gt(g);
    let positives = gb.iter().filter(|&&b| b).count();
    let mut pr = Vec::with_capacity(THRESHOLDS);
    let mut f_max = 0.0f64;
    for k in 0..THRESHOLDS {
        let t = k as f32 / 255.0;
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&pv, &gv) in p.data().iter().zip(&gb) {
            if pv > t {
                if gv {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let fn_ = positives - tp;
        let precision = if tp + fp == 0 {
            if positives == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if positives == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let denom = F_BETA_SQ * precision + recall;
        let f = if denom > 0.0 {
            (1.0 + F_BETA_SQ) * precision * recall / denom
        } else {
            0.0
        };
        f_max = f_max.max(f);
        pr.push((precision, recall));
    }
    Ok((f_max, pr))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt(), n)
}

fn object_similarity(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (x, sigma, n) = mean_std(values);
    if n == 0 {
        return 0.0;
    }
    2.0 * x / (x * x + 1.0 + sigma + f64::EPSILON)
}

/// SSIM-style similarity of one region pair in the structure measure.
fn region_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let x: f64 = pred.iter().sum::<f64>() / n as f64;
    let y: f64 = gt.iter().sum::<f64>() / n as f64;
    let norm = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let var_x: f64 = pred.iter().map(|&v| (v - x).powi(2)).sum::<f64>() / norm;
    let var_y: f64 = gt.iter().map(|&v| (v - y).powi(2)).sum::<f64>() / norm;
    let cov: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&a, &b)| (a - x) * (b - y))
        .sum::<f64>()
        / norm;
    let alpha = 4.0 * x * y * cov;
    let beta = (x * x + y * y) * (var_x + var_y);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Size of the left/top region when splitting `dim` cells at the
/// continuous foreground centroid `sum/count + 1/2` (pixel-center
/// convention). Computed in exact integer arithmetic; half ties round
/// toward the image center, which makes the split mirror exactly under
/// spatial flips.
fn centroid_cut(sum: u64, count: u64, dim: usize) -> usize {
    if dim <= 1 {
        return dim;
    }
    // centroid c = num/den with num = 2*sum + count, den = 2*count
    let num = 2 * sum + count;
    let den = 2 * count;
    let tie = num.is_multiple_of(count) && (num / count) % 2 == 1;
    let k = if tie {
        let floor_c = (num / count - 1) / 2;
        if 2 * num < den * dim as u64 {
            floor_c + 1
        } else {
            floor_c
        }
    } else {
        num / den + u64::from(num % den > count)
    };
    (k as usize).clamp(1, dim - 1)
}

/// Structure measure `S = alpha*S_object + (1-alpha)*S_region`.
/// Degenerate ground truths follow the protocol's special cases:
/// all-background gives `1 - mean(P)`, all-foreground gives `mean(P)`.
pub fn s_measure(p: &DenseArray, g: &DenseArray) -> Result<f64> {
    check_pair("s_measure", p, g)?;
    let (h, w) = (p.shape()[1], p.shape()[2]);
    let gb = binarize_gt(g);
    let fg = gb.iter().filter(|&&b| b).count();
    let n = gb.len();
    let mean_p = p.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    if fg == 0 {
        return Ok(1.0 - mean_p);
    }
    if fg == n {
        return Ok(mean_p);
    }
    let mu = fg as f64 / n as f64;

    // object term: foreground on P, background on 1-P
    let pd = p.data();
    let o_fg = object_similarity(
        pd.iter()
            .zip(&gb)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v as f64),
    );
    let o_bg = object_similarity(
        pd.iter()
            .zip(&gb)
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| 1.0 - v as f64),
    );
    let s_object = mu * o_fg + (1.0 - mu) * o_bg;

    // region term: split both maps at the foreground centroid
    let mut sum_y = 0u64;
    let mut sum_x = 0u64;
    for (i, &m) in gb.iter().enumerate() {
        if m {
            sum_y += (i / w) as u64;
            sum_x += (i % w) as u64;
        }
    }
    let cut_y = centroid_cut(sum_y, fg as u64, h);
    let cut_x = centroid_cut(sum_x, fg as u64, w);

    let mut s_region = 0.0f64;
    for (y0, y1, x0, x1) in [
        (0, cut_y, 0, cut_x),
        (0, cut_y, cut_x, w),
        (cut_y, h, 0, cut_x),
        (cut_y, h, cut_x, w),
    ] {
        let area = (y1 - y0) * (x1 - x0);
        if area == 0 {
            continue;
        }
        let mut pv = Vec::with_capacity(area);
        let mut gv = Vec::with_capacity(area);
        for y in y0..y1 {
            for x in x0..x1 {
                pv.push(pd[y * w + x] as f64);
                gv.push(if gb[y * w + x] { 1.0 } else { 0.0 });
            }
        }
        s_region += area as f64 / n as f64 * region_ssim(&pv, &gv);
    }

    Ok((S_ALPHA * s_object + (1.0 - S_ALPHA) * s_region).clamp(0.0, 1.0))
}

/// Enhanced-alignment measure over the 256 thresholds; returns the
/// maximum and the mean over thresholds. For a non-degenerate ground
/// truth, the alignment of the bias-removed maps is
/// `2ab/(a^2+b^2)` and the enhanced value `((align+1)^2)/4`, averaged
/// over pixels; constant ground truths degenerate to `mean(1-FM)` /
/// `mean(FM)`.
pub fn e_measure(p: &DenseArray, g: &DenseArray) -> Result<(f64, f64)> {
    check_pair("e_measure", p, g)?;
    let gb = binarize_gt(g);
    let n = gb.len();
    let fg = gb.iter().filter(|&&b| b).count();

    let mut e_max = 0.0f64;
    let mut e_sum = 0.0f64;
    for k in 0..THRESHOLDS {
        let t = k as f32 / 255.0;
        let score = if fg == 0 {
            let on = p.data().iter().filter(|&&v| v > t).count();
            (n - on) as f64 / n as f64
        } else if fg == n {
            let on = p.data().iter().filter(|&&v| v > t).count();
            on as f64 / n as f64
        } else {
            let mu_g = fg as f64 / n as f64;
            let on = p.data().iter().filter(|&&v| v > t).count();
            let mu_f = on as f64 / n as f64;
            let mut sum = 0.0f64;
            for (&pv, &gv) in p.data().iter().zip(&gb) {
                let a = (if pv > t { 1.0 } else { 0.0 }) - mu_f;
                let b = (if gv { 1.0 } else { 0.0 }) - mu_g;
                // b != 0 because gb is non-constant here
                let align = 2.0 * a * b / (a * a + b * b);
                sum += (align + 1.0).powi(2) / 4.0;
            }
            sum / n as f64
        };
        e_max = e_max.max(score);
        e_sum += score;
    }
    Ok((e_max, e_sum / THRESHOLDS as f64))
}

/// All metrics for one pair.
pub fn evaluate_pair(p: &DenseArray, g: &DenseArray) -> Result<MetricReport> {
    let (f_beta_max, pr_points) = f_beta(p, g)?;
    let (e_measure_max, e_measure_mean) = e_measure(p, g)?;
    Ok(MetricReport {
        mae: mae(p, g)?,
        f_beta_max,
        s_measure: s_measure(p, g)?,
        e_measure_max,
        e_measure_mean,
        pr_points,
    })
}

/// Evaluates every `.pgm` prediction in `pred_dir` against the
/// same-named file in `gt_dir`. Per-image metrics are averaged
/// arithmetically; PR points are averaged per threshold. File order
/// does not affect the result.
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<MetricReport> {
    let mut names: Vec<String> = std::fs::read_dir(pred_dir)?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            let name = entry.file_name().into_string().ok()?;
            name.ends_with(".pgm").then_some(name)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyInput("evaluate_dataset"));
    }

    let mut total = MetricReport {
        mae: 0.0,
        f_beta_max: 0.0,
        s_measure: 0.0,
        e_measure_max: 0.0,
        e_measure_mean: 0.0,
        pr_points: vec![(0.0, 0.0); THRESHOLDS],
    };
    for name in &names {
        let pred = crate::io::read_pgm(&pred_dir.join(name))?;
        let gt = crate::io::read_pgm(&gt_dir.join(name))?;
        let report = evaluate_pair(&pred, &gt)?;
        total.mae += report.mae;
        total.f_beta_max += report.f_beta_max;
        total.s_measure += report.s_measure;
        total.e_measure_max += report.e_measure_max;
        total.e_measure_mean += report.e_measure_mean;
        for (acc, point) in total.pr_points.iter_mut().zip(&report.pr_points) {
            acc.0 += point.0;
            acc.1 += point.1;
        }
    }
    let count = names.len() as f64;
    total.mae /= count;
    total.f_beta_max /= count;
    total.s_measure /= count;
    total.e_measure_max /= count;
    total.e_measure_mean /= count;
    for point in &mut total.pr_points {
        point.0 /= count;
        point.1 /= count;
    }
    Ok(total)
}
