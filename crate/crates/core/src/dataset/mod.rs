//! Ground truth, stored predictions and synthetic scenes.

mod coco;
mod predictions;
mod synthetic;

pub use coco::{ground_truth_to_json, load_ground_truth, parse_ground_truth, parse_scene_tags};
pub(crate) use predictions::RleJson;
pub use predictions::{load_predictions, parse_predictions, predictions_to_json};
pub use synthetic::{
    generate_dataset, generate_scene, perturb_gt, scene_image, write_pgm, SyntheticDatasetSpec,
    SyntheticSceneSpec,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{rasterize_polygons, BBox, BinaryMask, Polygon, RasterError};

pub type ImageId = u64;
pub type InstanceId = u64;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{context} references unknown image {image_id}")]
    UnknownImage { image_id: ImageId, context: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("synthetic generation failed: {0}")]
    Generation(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Scene stratum of an image.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Scene {
    Inshore,
    Offshore,
    #[default]
    Unknown,
}

impl Scene {
    pub const ALL: [Scene; 3] = [Scene::Inshore, Scene::Offshore, Scene::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Scene::Inshore => "inshore",
            Scene::Offshore => "offshore",
            Scene::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub instance_id: InstanceId,
    pub image_id: ImageId,
    pub bbox: BBox,
    pub polygons: Vec<Polygon>,
    pub scene: Scene,
}

impl GtInstance {
    pub fn mask(&self, width: u32, height: u32) -> Result<BinaryMask, RasterError> {
        rasterize_polygons(&self.polygons, width, height)
    }
}

/// Ground-truth instances grouped by image, in ascending image id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    images: BTreeMap<ImageId, ImageInfo>,
    scenes: BTreeMap<ImageId, Scene>,
    instances: BTreeMap<ImageId, Vec<GtInstance>>,
    warnings: Vec<String>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_image(&mut self, info: ImageInfo, scene: Scene) {
        self.scenes.insert(info.id, scene);
        self.instances.entry(info.id).or_default();
        self.images.insert(info.id, info);
    }

    /// Adds an instance; its scene tag is overwritten by the image's.
    pub fn add_instance(&mut self, mut inst: GtInstance) -> Result<(), DatasetError> {
        let Some(&scene) = self.scenes.get(&inst.image_id) else {
            return Err(DatasetError::UnknownImage {
                image_id: inst.image_id,
                context: format!("annotation {}", inst.instance_id),
            });
        };
        inst.scene = scene;
        if let Some(w) = bbox_enclosure_warning(&inst) {
            log::warn!("{w}");
            self.warnings.push(w);
        }
        self.instances.entry(inst.image_id).or_default().push(inst);
        Ok(())
    }

    pub fn set_scene(&mut self, image_id: ImageId, scene: Scene) -> Result<(), DatasetError> {
        let slot = self
            .scenes
            .get_mut(&image_id)
            .ok_or_else(|| DatasetError::UnknownImage {
                image_id,
                context: "scene tag".into(),
            })?;
        *slot = scene;
        for inst in self.instances.get_mut(&image_id).into_iter().flatten() {
            inst.scene = scene;
        }
        Ok(())
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageInfo> {
        self.images.get(&id)
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageInfo> {
        self.images.values()
    }

    pub fn image_ids(&self) -> Vec<ImageId> {
        self.images.keys().copied().collect()
    }

    pub fn scene(&self, id: ImageId) -> Scene {
        self.scenes.get(&id).copied().unwrap_or_default()
    }

    pub fn scenes(&self) -> &BTreeMap<ImageId, Scene> {
        &self.scenes
    }

    pub fn instances(&self, id: ImageId) -> &[GtInstance] {
        self.instances.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_instances(&self) -> impl Iterator<Item = &GtInstance> {
        self.instances.values().flatten()
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_instances(&self) -> usize {
        self.instances.values().map(Vec::len).sum()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// SHA-256 over the image ids and per-image instance counts.
    ///
    /// Two evaluations are comparable only if they share this digest.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (id, insts) in &self.instances {
            hasher.update(id.to_le_bytes());
            hasher.update((insts.len() as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

fn bbox_enclosure_warning(inst: &GtInstance) -> Option<String> {
    const SLACK: f64 = 1.0;
    let b = &inst.bbox;
    let outside = inst
        .polygons
        .iter()
        .flat_map(|p| p.vertices())
        .find(|&&(x, y)| {
            x < b.x - SLACK || x > b.right() + SLACK || y < b.y - SLACK || y > b.bottom() + SLACK
        })?;
    Some(format!(
        "annotation {} (image {}): polygon vertex ({}, {}) lies outside its bbox",
        inst.instance_id, inst.image_id, outside.0, outside.1
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: ImageId,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: ImageId, bbox: BBox, score: f64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DatasetError::Schema(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id,
            bbox,
            score,
        })
    }
}

/// Where a prediction's mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    Segmenter,
    /// Degraded mode: no mask was stored, so the box was rasterized.
    FromBox,
    /// The segmenter produced no candidate for this prompt.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedInstance {
    pub detection: Detection,
    /// `None` only when `origin` is [`MaskOrigin::Failed`].
    pub mask: Option<BinaryMask>,
    pub quality: Option<f64>,
    pub origin: MaskOrigin,
}

/// Predictions grouped by image; order within an image is the detection index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    by_image: BTreeMap<ImageId, Vec<PredictedInstance>>,
}

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pred: PredictedInstance) {
        self.by_image
            .entry(pred.detection.image_id)
            .or_default()
            .push(pred);
    }

    pub fn insert_image(&mut self, image_id: ImageId, preds: Vec<PredictedInstance>) {
        self.by_image.insert(image_id, preds);
    }

    pub fn for_image(&self, id: ImageId) -> &[PredictedInstance] {
        self.by_image.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ImageId, &[PredictedInstance])> {
        self.by_image.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.by_image.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
