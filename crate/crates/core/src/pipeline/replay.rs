use std::collections::BTreeMap;

use super::{BackendError, Candidate, Detector, ImageRef, Segmenter};
use crate::dataset::{Detection, ImageId, MaskOrigin, PredictionSet};
use crate::metrics::box_iou;
use crate::raster::BBox;

#[derive(Debug, Clone)]
struct Entry {
    detection: Detection,
    candidates: Vec<Candidate>,
}

/// Plays back stored detections and candidate masks.
///
/// A prompt is answered with the candidates of the stored detection whose
/// box equals it, or failing that overlaps it most (prompts may have been
/// clipped to the image).
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: BTreeMap<ImageId, Vec<Entry>>,
}

impl ReplayBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one detection with its stored candidates, in order.
    pub fn insert(&mut self, detection: Detection, candidates: Vec<Candidate>) {
        self.entries
            .entry(detection.image_id)
            .or_default()
            .push(Entry {
                detection,
                candidates,
            });
    }

    /// Records sharing an image and an identical box become one detection
    /// whose candidates are those records in file order.
    pub fn from_predictions(set: &PredictionSet) -> Self {
        let mut backend = Self::new();
        for (image_id, preds) in set.iter() {
            let entries = backend.entries.entry(image_id).or_default();
            for p in preds {
                let candidate = p.mask.as_ref().map(|m| Candidate {
                    mask: m.clone(),
                    quality: p.quality.unwrap_or(0.0),
                    synthesized: p.origin == MaskOrigin::FromBox,
                });
                match entries
                    .iter_mut()
                    .find(|e| e.detection.bbox == p.detection.bbox)
                {
                    Some(e) => e.candidates.extend(candidate),
                    None => entries.push(Entry {
                        detection: p.detection,
                        candidates: candidate.into_iter().collect(),
                    }),
                }
            }
        }
        backend
    }

    fn lookup(&self, image_id: ImageId, prompt: &BBox) -> Option<&Entry> {
        let entries = self.entries.get(&image_id)?;
        if let Some(e) = entries.iter().find(|e| e.detection.bbox == *prompt) {
            return Some(e);
        }
        let mut best: Option<(&Entry, f64)> = None;
        for e in entries {
            let iou = box_iou(&e.detection.bbox, prompt);
            if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((e, iou));
            }
        }
        best.map(|(e, _)| e)
    }
}

impl Detector for ReplayBackend {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        Ok(self
            .entries
            .get(&image.image_id)
            .map(|es| es.iter().map(|e| e.detection).collect())
            .unwrap_or_default())
    }
}

impl Segmenter for ReplayBackend {
    fn segment(
        &self,
        image: &ImageRef,
        prompt: &BBox,
        max_candidates: usize,
    ) -> Result<Vec<Candidate>, BackendError> {
        Ok(self
            .lookup(image.image_id, prompt)
            .map(|e| e.candidates.iter().take(max_candidates).cloned().collect())
            .unwrap_or_default())
    }
}
