//! Pixel, box and instance-level evaluation measures.

mod curves;
mod evaluate;
mod map;
mod matching;
mod pixel;

pub use curves::{fraction_at_least, relaxed_sweep, threshold_curve, ThresholdCurve};
pub use evaluate::{evaluate, EvalOptions, Evaluation, InstanceResult, InstanceStatus};
pub use map::{coco_map, GtBox, MapResult};
pub use matching::{box_iou, detection_rate, match_instances, MatchSet, MatchedPair};
pub use pixel::{dice, mask_iou, pixel_precision_recall, relaxed_iou};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub(crate) fn undefined(what: impl Into<String>) -> MetricError {
    MetricError::Undefined(what.into())
}

/// Strictly increasing IoU thresholds in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdGrid(Vec<f64>);

impl ThresholdGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, MetricError> {
        if thresholds.is_empty() {
            return Err(MetricError::InvalidInput("empty threshold grid".into()));
        }
        if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(MetricError::InvalidInput(
                "thresholds must lie in [0, 1]".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricError::InvalidInput(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self(thresholds))
    }

    /// The ten COCO thresholds 0.50, 0.55, ..., 0.95.
    pub fn coco() -> Self {
        Self((50..=95).step_by(5).map(|k| k as f64 / 100.0).collect())
    }

    /// `start, start+step, ...` up to and including `stop`.
    ///
    /// Values are snapped to 1e-9 so that e.g. the 0.05 grid yields exactly
    /// the literals 0.15, 0.35, ... rather than accumulated binary error.
    pub fn linspace(start: f64, stop: f64, step: f64) -> Result<Self, MetricError> {
        let valid = step > 0.0 && stop >= start;
        if !valid {
            return Err(MetricError::InvalidInput(format!(
                "bad grid {start}..{stop} step {step}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let snap = |v: f64| (v * 1e9).round() / 1e9;
        Self::new((0..=n).map(|i| snap(start + i as f64 * step)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ThresholdGrid {
    type Error = MetricError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        ThresholdGrid::new(v)
    }
}

impl From<ThresholdGrid> for Vec<f64> {
    fn from(g: ThresholdGrid) -> Self {
        g.0
    }
}
