use serde::{Deserialize, Serialize};

use super::{undefined, MetricError};
use crate::dataset::{Detection, InstanceId};
use crate::raster::BBox;

/// Box IoU in continuous coordinates; 0 for disjoint or edge-touching boxes.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_id: InstanceId,
    pub detection_index: usize,
    pub iou: f64,
}

/// One-to-one assignment of detections to ground truth within one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    /// In the order detections claimed their ground truth (descending score).
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<InstanceId>,
    pub unmatched_detections: Vec<usize>,
    pub iou_threshold: f64,
}

impl MatchSet {
    pub fn matched_gt(&self, gt_id: InstanceId) -> Option<&MatchedPair> {
        self.pairs.iter().find(|p| p.gt_id == gt_id)
    }

    pub fn num_gt(&self) -> usize {
        self.pairs.len() + self.unmatched_gt.len()
    }
}

/// Detection indices by descending score; equal scores keep index order.
pub(crate) fn score_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    order
}

/// Greedy score-ordered matching at box IoU ≥ `iou_threshold`.
///
/// Each detection, highest score first, claims the still-unmatched ground
/// truth with the largest IoU; IoU ties go to the lower instance id.
pub fn match_instances(
    detections: &[Detection],
    gts: &[(InstanceId, BBox)],
    iou_threshold: f64,
) -> MatchSet {
    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut unmatched_detections = Vec::new();
    for d in score_order(detections) {
        let mut best: Option<(usize, f64)> = None;
        for (g, (gid, gbox)) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = box_iou(&detections[d].bbox, gbox);
            if iou < iou_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bg, biou)) => iou > biou || (iou == biou && *gid < gts[bg].0),
            };
            if better {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) => {
                taken[g] = true;
                pairs.push(MatchedPair {
                    gt_id: gts[g].0,
                    detection_index: d,
                    iou,
                });
            }
            None => unmatched_detections.push(d),
        }
    }
    unmatched_detections.sort_unstable();
    let mut unmatched_gt: Vec<InstanceId> = gts
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| !t)
        .map(|((id, _), _)| *id)
        .collect();
    unmatched_gt.sort_unstable();
    MatchSet {
        pairs,
        unmatched_gt,
        unmatched_detections,
        iou_threshold,
    }
}

/// Matched ground truth over all ground truth in the given match sets.
pub fn detection_rate<'a>(
    sets: impl IntoIterator<Item = &'a MatchSet>,
) -> Result<f64, MetricError> {
    let (mut matched, mut total) = (0usize, 0usize);
    for s in sets {
        matched += s.pairs.len();
        total += s.num_gt();
    }
    if total == 0 {
        return Err(undefined("detection rate with no ground truth"));
    }
    Ok(matched as f64 / total as f64)
}
