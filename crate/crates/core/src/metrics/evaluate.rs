//! Full evaluation of a prediction set against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::map::{coco_map, GtBox, MapResult};
use super::matching::{match_instances, MatchSet};
use super::{MetricError, ThresholdGrid};
use crate::dataset::{GroundTruth, ImageId, InstanceId, MaskOrigin, PredictionSet, Scene};
use crate::parallel::{map_ordered, Parallelism};
use crate::raster::{pixel_counts, BinaryMask, ConfusionCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    /// Matched, with a mask scored against the reference.
    Evaluated,
    /// No detection claimed this instance; mask metrics are 0.
    Unmatched,
    /// Matched, but the segmenter returned no candidate.
    SegmentationFailed,
    /// Matched to a box-derived mask that was excluded by policy.
    SynthesizedMask,
    /// The reference polygon covers no pixel center.
    DegenerateGt,
}

/// Per ground-truth instance evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: InstanceId,
    pub image_id: ImageId,
    pub scene: Scene,
    pub status: InstanceStatus,
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_index: Option<usize>,
    pub box_iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    pub mask_iou: f64,
    pub dice: f64,
    pub pixel_precision: f64,
    pub pixel_recall: f64,
    /// Dilation radius (px) → relaxed IoU.
    pub relaxed_iou: BTreeMap<u32, f64>,
}

impl InstanceResult {
    fn empty(image_id: ImageId, instance_id: InstanceId, scene: Scene) -> Self {
        Self {
            instance_id,
            image_id,
            scene,
            status: InstanceStatus::Unmatched,
            matched: false,
            detection_index: None,
            box_iou: 0.0,
            counts: None,
            mask_iou: 0.0,
            dice: 0.0,
            pixel_precision: 0.0,
            pixel_recall: 0.0,
            relaxed_iou: BTreeMap::new(),
        }
    }

    /// Contributes to IoU/Dice/precision/recall statistics.
    pub fn has_mask_metrics(&self) -> bool {
        self.status == InstanceStatus::Evaluated
    }

    /// Contributes to threshold curves (matched-and-scored, or unmatched as 0).
    pub fn in_curve(&self) -> bool {
        matches!(
            self.status,
            InstanceStatus::Evaluated | InstanceStatus::Unmatched
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub match_threshold: f64,
    pub relaxed_radii: Vec<u32>,
    /// Score box-derived masks like real ones instead of excluding them.
    pub include_synthesized: bool,
    pub map_thresholds: ThresholdGrid,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            match_threshold: 0.5,
            relaxed_radii: vec![0, 1, 2, 3],
            include_synthesized: false,
            map_thresholds: ThresholdGrid::coco(),
            parallelism: Parallelism::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Ascending image id, then ground-truth order within the image.
    pub instances: Vec<InstanceResult>,
    pub matches: BTreeMap<ImageId, MatchSet>,
    /// `None` when there is no ground truth at all.
    pub map: Option<MapResult>,
}

impl Evaluation {
    /// `(pred, gt)` masks of every instance with mask metrics, for sweeps.
    pub fn mask_pairs(
        &self,
        gt: &GroundTruth,
        preds: &PredictionSet,
    ) -> Result<Vec<(BinaryMask, BinaryMask)>, MetricError> {
        let mut out = Vec::new();
        for r in self.instances.iter().filter(|r| r.has_mask_metrics()) {
            let info = gt.image(r.image_id).expect("evaluated image exists");
            let inst = gt
                .instances(r.image_id)
                .iter()
                .find(|i| i.instance_id == r.instance_id)
                .expect("evaluated instance exists");
            let pred = preds.for_image(r.image_id)[r.detection_index.expect("matched")]
                .mask
                .clone()
                .expect("evaluated prediction has a mask");
            out.push((pred, inst.mask(info.width, info.height)?));
        }
        Ok(out)
    }
}

/// Matches, scores and ranks `preds` against `gt`.
///
/// Images are processed independently (in parallel when requested) and
/// merged in ascending image id order.
pub fn evaluate(
    gt: &GroundTruth,
    preds: &PredictionSet,
    opts: &EvalOptions,
) -> Result<Evaluation, MetricError> {
    for (image_id, _) in preds.iter() {
        if gt.image(image_id).is_none() {
            return Err(MetricError::InvalidInput(format!(
                "predictions reference unknown image {image_id}"
            )));
        }
    }
    let image_ids = gt.image_ids();
    let per_image = map_ordered(&image_ids, opts.parallelism, |&id| {
        evaluate_image(gt, preds, id, opts)
    });

    let mut instances = Vec::with_capacity(gt.num_instances());
    let mut matches = BTreeMap::new();
    for (id, res) in image_ids.iter().zip(per_image) {
        let (m, insts) = res?;
        matches.insert(*id, m);
        instances.extend(insts);
    }

    let gt_boxes: Vec<GtBox> = gt
        .all_instances()
        .map(|i| GtBox {
            image_id: i.image_id,
            instance_id: i.instance_id,
            bbox: i.bbox,
        })
        .collect();
    let detections: Vec<_> = preds
        .iter()
        .flat_map(|(_, p)| p.iter().map(|p| p.detection))
        .collect();
    let map = if gt_boxes.is_empty() {
        None
    } else {
        Some(coco_map(&detections, &gt_boxes, &opts.map_thresholds)?)
    };
    Ok(Evaluation {
        instances,
        matches,
        map,
    })
}

fn evaluate_image(
    gt: &GroundTruth,
    preds: &PredictionSet,
    image_id: ImageId,
    opts: &EvalOptions,
) -> Result<(MatchSet, Vec<InstanceResult>), MetricError> {
    let info = gt.image(image_id).expect("image id from catalog");
    let scene = gt.scene(image_id);
    let gts = gt.instances(image_id);
    let preds = preds.for_image(image_id);
    let detections: Vec<_> = preds.iter().map(|p| p.detection).collect();
    let boxes: Vec<_> = gts.iter().map(|g| (g.instance_id, g.bbox)).collect();
    let matches = match_instances(&detections, &boxes, opts.match_threshold);

    let mut results = Vec::with_capacity(gts.len());
    for g in gts {
        let mut r = InstanceResult::empty(image_id, g.instance_id, scene);
        let Some(pair) = matches.matched_gt(g.instance_id) else {
            results.push(r);
            continue;
        };
        r.matched = true;
        r.detection_index = Some(pair.detection_index);
        r.box_iou = pair.iou;
        let pred = &preds[pair.detection_index];
        r.status = match (pred.origin, &pred.mask) {
            (MaskOrigin::Failed, _) | (_, None) => InstanceStatus::SegmentationFailed,
            (MaskOrigin::FromBox, _) if !opts.include_synthesized => {
                InstanceStatus::SynthesizedMask
            }
            (_, Some(pred_mask)) => {
                let gt_mask = g.mask(info.width, info.height)?;
                score_masks(&mut r, pred_mask, &gt_mask, &opts.relaxed_radii)?
            }
        };
        results.push(r);
    }
    Ok((matches, results))
}

fn score_masks(
    r: &mut InstanceResult,
    pred: &BinaryMask,
    gt: &BinaryMask,
    radii: &[u32],
) -> Result<InstanceStatus, MetricError> {
    let c = pixel_counts(pred, gt)?;
    if c.gt_area == 0 {
        log::warn!(
            "instance {} (image {}) rasterizes to an empty mask; excluded from mask metrics",
            r.instance_id,
            r.image_id
        );
        return Ok(InstanceStatus::DegenerateGt);
    }
    r.counts = Some(c);
    r.mask_iou = c.intersection as f64 / c.union as f64;
    r.dice = (2 * c.intersection) as f64 / (c.pred_area + c.gt_area) as f64;
    // An empty prediction has no precision; it scores as 0 here.
    r.pixel_precision = if c.pred_area == 0 {
        0.0
    } else {
        c.intersection as f64 / c.pred_area as f64
    };
    r.pixel_recall = c.intersection as f64 / c.gt_area as f64;
    for &radius in radii {
        r.relaxed_iou
            .insert(radius, super::relaxed_iou(pred, gt, radius)?);
    }
    Ok(InstanceStatus::Evaluated)
}
