use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DatasetError, Detection, GroundTruth, ImageId, MaskOrigin, PredictedInstance, PredictionSet,
};
use crate::raster::{mask_from_bbox, rle_decode, rle_encode, BBox, RasterError, RleMask};

/// COCO-results style `{"size": [h, w], "counts": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RleJson {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleJson {
    pub fn decode_for(
        &self,
        width: u32,
        height: u32,
    ) -> Result<crate::raster::BinaryMask, RasterError> {
        let [h, w] = self.size;
        if (h, w) != (height, width) {
            return Err(RasterError::MalformedRle(format!(
                "size [{h}, {w}] does not match image {height}x{width}"
            )));
        }
        rle_decode(&RleMask {
            height: h,
            width: w,
            counts: self.counts.clone(),
        })
    }

    pub fn from_rle(rle: RleMask) -> Self {
        RleJson {
            size: [rle.height, rle.width],
            counts: rle.counts,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    image_id: ImageId,
    bbox: BBox,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<RleJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quality: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    segmentation_failed: bool,
}

pub fn load_predictions(path: &Path, gt: &GroundTruth) -> Result<PredictionSet, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_predictions(&text, path, gt)
}

/// Parses a COCO-results array against the image catalog of `gt`.
///
/// Records without a segmentation get a box-rasterized mask flagged as
/// [`MaskOrigin::FromBox`].
pub fn parse_predictions(
    text: &str,
    origin: &Path,
    gt: &GroundTruth,
) -> Result<PredictionSet, DatasetError> {
    let records: Vec<PredictionRecord> =
        serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut set = PredictionSet::new();
    for (i, rec) in records.into_iter().enumerate() {
        let info = gt
            .image(rec.image_id)
            .ok_or_else(|| DatasetError::UnknownImage {
                image_id: rec.image_id,
                context: format!("prediction record {i}"),
            })?;
        let detection = Detection::new(rec.image_id, rec.bbox, rec.score)?;
        if let Some(q) = rec.quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(DatasetError::Schema(format!(
                    "prediction record {i}: quality {q} outside [0, 1]"
                )));
            }
        }
        let (mask, origin) = match (&rec.segmentation, rec.segmentation_failed) {
            (_, true) => (None, MaskOrigin::Failed),
            (Some(seg), false) => (
                Some(seg.decode_for(info.width, info.height)?),
                MaskOrigin::Segmenter,
            ),
            (None, false) => (
                Some(mask_from_bbox(&rec.bbox, info.width, info.height)?),
                MaskOrigin::FromBox,
            ),
        };
        set.push(PredictedInstance {
            detection,
            mask,
            quality: rec.quality,
            origin,
        });
    }
    Ok(set)
}

/// Serializes predictions as a COCO-results array, one record per line.
///
/// Box-derived masks are written without a segmentation so reloading
/// reproduces the same degraded-mode flag.
pub fn predictions_to_json(set: &PredictionSet) -> String {
    let mut out = String::from("[");
    let mut first = true;
    for (_, preds) in set.iter() {
        for p in preds {
            let segmentation = match p.origin {
                MaskOrigin::Segmenter => p.mask.as_ref().map(|m| RleJson::from_rle(rle_encode(m))),
                MaskOrigin::FromBox | MaskOrigin::Failed => None,
            };
            let rec = PredictionRecord {
                image_id: p.detection.image_id,
                bbox: p.detection.bbox,
                score: p.detection.score,
                segmentation,
                quality: p.quality,
                segmentation_failed: p.origin == MaskOrigin::Failed,
            };
            out.push_str(if first { "\n" } else { ",\n" });
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            first = false;
        }
    }
    out.push_str(if first { "]\n" } else { "\n]\n" });
    out
}
