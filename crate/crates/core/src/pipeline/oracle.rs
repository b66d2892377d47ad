use super::{BackendError, Candidate, Detector, ImageRef, ReplayBackend, Segmenter};
use crate::dataset::{perturb_gt, DatasetError, Detection, GroundTruth};
use crate::raster::BBox;

/// Backend that answers from ground truth under a known perturbation.
///
/// Detections are the ground-truth boxes shifted right by `shift` pixels,
/// with a fraction `drop_rate` removed; each prompt yields one candidate, the
/// equally shifted ground-truth mask, with quality 1.0.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    replay: ReplayBackend,
}

impl OracleBackend {
    pub fn new(
        gt: &GroundTruth,
        shift: u32,
        drop_rate: f64,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        let preds = perturb_gt(gt, shift, drop_rate, seed)?;
        Ok(Self {
            replay: ReplayBackend::from_predictions(&preds),
        })
    }
}

impl Detector for OracleBackend {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        self.replay.detect(image)
    }
}

impl Segmenter for OracleBackend {
    fn segment(
        &self,
        image: &ImageRef,
        prompt: &BBox,
        max_candidates: usize,
    ) -> Result<Vec<Candidate>, BackendError> {
        self.replay.segment(image, prompt, max_candidates)
    }
}
