//! Adaptive contrast enhancement of depth maps: a percentile-bounded
//! linear stretch with saturation. Pixels below the low bound map to 0,
//! pixels above the high bound map to 1, and the range in between is
//! mapped linearly onto [0, 1].

use crate::error::{Error, Result};
use crate::tensor::DenseArray;

/// Default low/high percentile, in percent.
pub const DEFAULT_LOW_PCT: f64 = 1.0;
pub const DEFAULT_HIGH_PCT: f64 = 1.0;

/// Saturation bounds for the linear stretch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AceBounds {
    /// Value at the low percentile.
    pub low: f32,
    /// Value at the high percentile.
    pub high: f32,
    pub low_pct: f64,
    pub high_pct: f64,
}

fn expect_depth(op: &'static str, depth: &DenseArray) -> Result<()> {
    if depth.rank() != 3 || depth.shape()[0] != 1 {
        return Err(Error::RankMismatch {
            op,
            expected: 3,
            got: depth.shape().to_vec(),
        });
    }
    Ok(())
}

/// Nearest-rank percentile bounds over the sorted pixel multiset:
/// `low = sorted[round(low_pct/100 * (n-1))]` and
/// `high = sorted[round((1 - high_pct/100) * (n-1))]`, indices clamped
/// to the valid range. Monotonicity of the sorted order guarantees
/// `low <= high` for percentiles below 50.
pub fn percentile_bounds(depth: &DenseArray, low_pct: f64, high_pct: f64) -> Result<AceBounds> {
    expect_depth("percentile_bounds", depth)?;
    if depth.is_empty() {
        return Err(Error::EmptyInput("percentile_bounds"));
    }
    for (name, p) in [("low_pct", low_pct), ("high_pct", high_pct)] {
        if !(0.0..50.0).contains(&p) {
            return Err(Error::InvalidParam {
                op: "percentile_bounds",
                what: format!("{name} must be in [0, 50), got {p}"),
            });
        }
    }
    if depth.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidParam {
            op: "percentile_bounds",
            what: "depth values must lie in [0, 1]".into(),
        });
    }

    let mut sorted: Vec<f32> = depth.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite depth values"));
    let n = sorted.len();
    let rank = |p: f64| -> usize {
        let idx = (p * (n - 1) as f64).round();
        (idx.max(0.0) as usize).min(n - 1)
    };
    Ok(AceBounds {
        low: sorted[rank(low_pct / 100.0)],
        high: sorted[rank(1.0 - high_pct / 100.0)],
        low_pct,
        high_pct,
    })
}

/// Bounds with the default 1%/1% percentiles.
pub fn default_bounds(depth: &DenseArray) -> Result<AceBounds> {
    percentile_bounds(depth, DEFAULT_LOW_PCT, DEFAULT_HIGH_PCT)
}

/// Applies the saturating linear stretch. A degenerate bound pair
/// (`high == low`, e.g. a constant image) maps everything to 0.5 so the
/// enhanced map stays mid-range instead of biasing the front/back priors.
pub fn ace(depth: &DenseArray, bounds: &AceBounds) -> Result<DenseArray> {
    expect_depth("ace", depth)?;
    if bounds.high < bounds.low {
        return Err(Error::InvalidParam {
            op: "ace",
            what: format!("bounds out of order: low {} > high {}", bounds.low, bounds.high),
        });
    }
    let (low, high) = (bounds.low, bounds.high);
    if high == low {
        return Ok(DenseArray::full(depth.shape().to_vec(), 0.5));
    }
    let span = high - low;
    Ok(depth.map(|v| {
        if v < low {
            0.0
        } else if v > high {
            1.0
        } else {
            (v - low) / span
        }
    }))
}

/// Percentile bounds followed by the stretch, in one call.
pub fn enhance(depth: &DenseArray, low_pct: f64, high_pct: f64) -> Result<DenseArray> {
    let bounds = percentile_bounds(depth, low_pct, high_pct)?;
    ace(depth, &bounds)
}
