use serde::{Deserialize, Serialize};

use super::{relaxed_iou, undefined, MetricError, ThresholdGrid};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    /// `(t, fraction of IoUs ≥ t)`.
    pub points: Vec<(f64, f64)>,
    pub iou_at_50: f64,
    pub iou_at_75: f64,
}

pub fn fraction_at_least(ious: &[f64], t: f64) -> Result<f64, MetricError> {
    if ious.is_empty() {
        return Err(undefined("threshold fraction over no instances"));
    }
    Ok(ious.iter().filter(|&&v| v >= t).count() as f64 / ious.len() as f64)
}

/// Fraction of instances whose IoU meets or exceeds each grid threshold.
///
/// Unmatched instances are expected in `ious` as zeros.
pub fn threshold_curve(ious: &[f64], grid: &ThresholdGrid) -> Result<ThresholdCurve, MetricError> {
    let points = grid
        .values()
        .iter()
        .map(|&t| fraction_at_least(ious, t).map(|f| (t, f)))
        .collect::<Result<_, _>>()?;
    Ok(ThresholdCurve {
        points,
        iou_at_50: fraction_at_least(ious, 0.5)?,
        iou_at_75: fraction_at_least(ious, 0.75)?,
    })
}

/// Mean relaxed IoU over `(pred, gt)` pairs at each radius.
///
/// `radii` must be ascending and start at 0; the radius-0 entry is the mean
/// plain IoU.
pub fn relaxed_sweep(
    pairs: &[(&BinaryMask, &BinaryMask)],
    radii: &[u32],
) -> Result<Vec<(u32, f64)>, MetricError> {
    if pairs.is_empty() {
        return Err(undefined("relaxed sweep over no mask pairs"));
    }
    if radii.first() != Some(&0) || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::InvalidInput(
            "sweep radii must be strictly ascending and start at 0".into(),
        ));
    }
    radii
        .iter()
        .map(|&r| {
            let mut sum = 0.0;
            for (p, g) in pairs {
                sum += relaxed_iou(p, g, r)?;
            }
            Ok((r, sum / pairs.len() as f64))
        })
        .collect()
}
