use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::ImageId;
use crate::metrics::MetricError;

/// Monotonic time source; swapped for [`ManualClock`] in tests.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
}

#[derive(Debug)]
pub struct MonotonicClock {
    origin: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    nanos: AtomicU64,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.nanos.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

pub(crate) fn millis(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e6
}

/// Wall time of one image through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub image_id: ImageId,
    pub detect_ms: f64,
    /// One entry per prompt that survived confidence filtering.
    pub segment_ms: Vec<f64>,
    pub ships: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeledTotal {
    pub ships: usize,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub images: usize,
    pub prompts: usize,
    pub detect_mean_ms: f64,
    pub detect_std_ms: f64,
    pub segment_mean_ms: f64,
    pub segment_std_ms: f64,
    pub mean_ships_per_image: f64,
    /// `detect_mean_ms + ships · segment_mean_ms`.
    pub modeled_totals: Vec<ModeledTotal>,
}

/// Population mean and standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Detection is a per-image cost and segmentation a per-ship cost, so the
/// per-image total is modeled as `detect + n · segment`.
///
/// `ship_counts` lists the `n` to model; an empty list models the observed
/// mean ships per image rounded to the nearest integer.
pub fn summarize_timing(
    records: &[TimingRecord],
    ship_counts: &[usize],
) -> Result<TimingSummary, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Undefined(
            "timing summary over no images".into(),
        ));
    }
    let (detect_mean_ms, detect_std_ms) = mean_std(records.iter().map(|r| r.detect_ms));
    let segs = records.iter().flat_map(|r| r.segment_ms.iter().copied());
    let prompts = segs.clone().count();
    let (segment_mean_ms, segment_std_ms) = mean_std(segs);
    let mean_ships_per_image =
        records.iter().map(|r| r.ships).sum::<usize>() as f64 / records.len() as f64;
    let default_n = [mean_ships_per_image.round() as usize];
    let ns = if ship_counts.is_empty() {
        &default_n[..]
    } else {
        ship_counts
    };
    Ok(TimingSummary {
        images: records.len(),
        prompts,
        detect_mean_ms,
        detect_std_ms,
        segment_mean_ms,
        segment_std_ms,
        mean_ships_per_image,
        modeled_totals: ns
            .iter()
            .map(|&n| ModeledTotal {
                ships: n,
                total_ms: detect_mean_ms + n as f64 * segment_mean_ms,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(detect: f64, segs: &[f64]) -> TimingRecord {
        TimingRecord {
            image_id: 1,
            detect_ms: detect,
            segment_ms: segs.to_vec(),
            ships: segs.len(),
        }
    }

    #[test]
    fn fixed_latencies_model_exactly() {
        let records = [rec(8.0, &[85.0, 85.0]), rec(8.0, &[85.0, 85.0, 85.0, 85.0])];
        let s = summarize_timing(&records, &[2, 4]).unwrap();
        assert_eq!(s.detect_mean_ms, 8.0);
        assert_eq!(s.detect_std_ms, 0.0);
        assert_eq!(s.segment_mean_ms, 85.0);
        assert_eq!(s.modeled_totals[0].total_ms, 178.0);
        assert_eq!(s.modeled_totals[1].total_ms, 348.0);
        assert_eq!(s.mean_ships_per_image, 3.0);
    }

    #[test]
    fn zero_ships_is_detect_alone() {
        let s = summarize_timing(&[rec(7.5, &[])], &[]).unwrap();
        assert_eq!(s.prompts, 0);
        assert_eq!(
            s.modeled_totals,
            vec![ModeledTotal {
                ships: 0,
                total_ms: 7.5
            }]
        );
    }

    #[test]
    fn population_std() {
        let s = summarize_timing(&[rec(6.0, &[]), rec(10.0, &[])], &[0]).unwrap();
        assert_eq!((s.detect_mean_ms, s.detect_std_ms), (8.0, 2.0));
    }

    #[test]
    fn empty_is_undefined() {
        assert!(summarize_timing(&[], &[2]).is_err());
    }

    #[test]
    fn manual_clock_in_millis() {
        let c = ManualClock::new();
        c.advance(Duration::from_millis(8));
        assert_eq!(millis(c.now()), 8.0);
    }
}
