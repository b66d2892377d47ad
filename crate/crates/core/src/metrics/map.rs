//! Single-category box mAP under the COCO protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::box_iou;
use super::{undefined, MetricError, ThresholdGrid};
use crate::dataset::{Detection, ImageId, InstanceId};
use crate::raster::BBox;

/// Number of recall sample points (0.00, 0.01, ..., 1.00).
pub const RECALL_POINTS: u64 = 101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub image_id: ImageId,
    pub instance_id: InstanceId,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: f64,
    /// `(threshold, AP)` in grid order.
    pub ap_per_threshold: Vec<(f64, f64)>,
}

/// Mean over `thresholds` of 101-point interpolated AP.
///
/// Detections are ranked globally by descending score, ties broken by image
/// id and then by position in `detections`. At each threshold a detection is
/// a true positive if it claims an unmatched ground-truth box of its image
/// with IoU ≥ t (largest IoU first, lower instance id on ties). Recall
/// points are compared in exact integer arithmetic: recall ≥ k/100 iff
/// `100·tp ≥ k·n_gt`.
pub fn coco_map(
    detections: &[Detection],
    gts: &[GtBox],
    thresholds: &ThresholdGrid,
) -> Result<MapResult, MetricError> {
    let n_gt = gts.len() as u64;
    if n_gt == 0 {
        return Err(undefined("mAP with no ground truth"));
    }

    let mut gt_by_image: BTreeMap<ImageId, Vec<(InstanceId, BBox)>> = BTreeMap::new();
    for g in gts {
        gt_by_image
            .entry(g.image_id)
            .or_default()
            .push((g.instance_id, g.bbox));
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .total_cmp(&detections[a].score)
            .then(detections[a].image_id.cmp(&detections[b].image_id))
            .then(a.cmp(&b))
    });
    // IoU of each ranked detection against the ground truth of its image.
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&d| {
            gt_by_image
                .get(&detections[d].image_id)
                .map(|g| {
                    g.iter()
                        .map(|(_, b)| box_iou(&detections[d].bbox, b))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    let mut ap_per_threshold = Vec::with_capacity(thresholds.len());
    let mut tp_flags = Vec::with_capacity(order.len());
    for &t in thresholds.values() {
        let mut taken: BTreeMap<ImageId, Vec<bool>> = gt_by_image
            .iter()
            .map(|(&id, g)| (id, vec![false; g.len()]))
            .collect();
        tp_flags.clear();
        for (rank, &d) in order.iter().enumerate() {
            let image = detections[d].image_id;
            let (Some(gt), Some(used)) = (gt_by_image.get(&image), taken.get_mut(&image)) else {
                tp_flags.push(false);
                continue;
            };
            let mut best: Option<usize> = None;
            for (g, &iou) in ious[rank].iter().enumerate() {
                if used[g] || iou < t {
                    continue;
                }
                best = match best {
                    Some(b)
                        if ious[rank][b] > iou || (ious[rank][b] == iou && gt[b].0 < gt[g].0) =>
                    {
                        Some(b)
                    }
                    _ => Some(g),
                };
            }
            if let Some(g) = best {
                used[g] = true;
            }
            tp_flags.push(best.is_some());
        }
        ap_per_threshold.push((t, interpolated_ap(&tp_flags, n_gt)));
    }
    let map =
        ap_per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / ap_per_threshold.len() as f64;
    Ok(MapResult {
        map,
        ap_per_threshold,
    })
}

/// 101-point interpolated AP from ranked TP/FP flags.
fn interpolated_ap(tp_flags: &[bool], n_gt: u64) -> f64 {
    let mut tp_cum = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    for &is_tp in tp_flags {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        tp_cum.push(tp);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Monotone non-increasing envelope.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    let mut i = 0usize;
    for k in 0..RECALL_POINTS {
        while i < tp_cum.len() && 100 * tp_cum[i] < k * n_gt {
            i += 1;
        }
        if i < tp_cum.len() {
            sum += precision[i];
        }
    }
    sum / RECALL_POINTS as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, w: f64) -> BBox {
        BBox::new(x, 0.0, w, 4.0).unwrap()
    }

    fn gt(image_id: ImageId, instance_id: InstanceId, bbox: BBox) -> GtBox {
        GtBox {
            image_id,
            instance_id,
            bbox,
        }
    }

    #[test]
    fn single_detection_at_iou_point_six() {
        let gts = [gt(1, 1, bx(0.0, 8.0))];
        let dets = [Detection::new(1, bx(2.0, 8.0), 0.9).unwrap()];
        let r = coco_map(&dets, &gts, &ThresholdGrid::coco()).unwrap();
        let aps: Vec<f64> = r.ap_per_threshold.iter().map(|p| p.1).collect();
        assert_eq!(aps, [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((r.map - 0.3).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        let gts = [gt(1, 1, bx(0.0, 8.0)), gt(2, 2, bx(3.0, 5.0))];
        let dets: Vec<_> = gts
            .iter()
            .map(|g| Detection::new(g.image_id, g.bbox, 0.8).unwrap())
            .collect();
        assert_eq!(
            coco_map(&dets, &gts, &ThresholdGrid::coco()).unwrap().map,
            1.0
        );
        assert_eq!(
            coco_map(&[], &gts, &ThresholdGrid::coco()).unwrap().map,
            0.0
        );
        assert!(coco_map(&dets, &[], &ThresholdGrid::coco()).is_err());
    }

    #[test]
    fn false_positive_ranked_first_lowers_precision() {
        // Ranked: FP (0.9), TP (0.8). Recall 1 reached at precision 1/2.
        let gts = [gt(1, 1, bx(0.0, 8.0))];
        let dets = [
            Detection::new(1, bx(20.0, 8.0), 0.9).unwrap(),
            Detection::new(1, bx(0.0, 8.0), 0.8).unwrap(),
        ];
        let grid = ThresholdGrid::new(vec![0.5]).unwrap();
        assert_eq!(coco_map(&dets, &gts, &grid).unwrap().map, 0.5);
    }
}
