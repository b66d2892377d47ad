use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, GroundTruth, GtInstance, ImageId, ImageInfo, Scene};
use crate::raster::{BBox, Polygon};

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<ImageInfo>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: ImageId,
    bbox: [f64; 4],
    #[serde(default)]
    segmentation: serde_json::Value,
}

#[derive(Serialize)]
struct CocoFileOut<'a> {
    images: Vec<&'a ImageInfo>,
    annotations: Vec<CocoAnnotationOut<'a>>,
    categories: [CocoCategory; 1],
}

#[derive(Serialize)]
struct CocoAnnotationOut<'a> {
    id: u64,
    image_id: ImageId,
    category_id: u32,
    bbox: BBox,
    area: f64,
    iscrowd: u8,
    segmentation: &'a [Polygon],
}

#[derive(Serialize)]
struct CocoCategory {
    id: u32,
    name: &'static str,
}

/// Reads a COCO-layout annotation file plus an optional scene-tag sidecar.
pub fn load_ground_truth(
    annotations: &Path,
    scene_tags: Option<&Path>,
) -> Result<GroundTruth, DatasetError> {
    let text = fs::read_to_string(annotations).map_err(|e| DatasetError::io(annotations, e))?;
    let mut gt = parse_ground_truth(&text, annotations)?;
    if let Some(tags_path) = scene_tags {
        let text = fs::read_to_string(tags_path).map_err(|e| DatasetError::io(tags_path, e))?;
        for (image_id, scene) in parse_scene_tags(&text, tags_path)? {
            if gt.image(image_id).is_none() {
                let w = format!(
                    "{}: scene tag for unknown image {image_id} ignored",
                    tags_path.display()
                );
                log::warn!("{w}");
                gt.warnings.push(w);
                continue;
            }
            gt.set_scene(image_id, scene)?;
        }
    }
    Ok(gt)
}

/// Parses COCO JSON; `origin` is only used in error messages.
pub fn parse_ground_truth(text: &str, origin: &Path) -> Result<GroundTruth, DatasetError> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut gt = GroundTruth::new();
    for img in file.images {
        if img.width == 0 || img.height == 0 {
            return Err(DatasetError::Schema(format!(
                "image {} has zero dimensions",
                img.id
            )));
        }
        gt.add_image(img, Scene::Unknown);
    }
    for ann in file.annotations {
        let bbox = BBox::try_from(ann.bbox)?;
        let polygons = parse_segmentation(&ann.segmentation)
            .map_err(|m| DatasetError::Schema(format!("annotation {}: {m}", ann.id)))?;
        gt.add_instance(GtInstance {
            instance_id: ann.id,
            image_id: ann.image_id,
            bbox,
            polygons,
            scene: Scene::Unknown,
        })?;
    }
    Ok(gt)
}

fn parse_segmentation(value: &serde_json::Value) -> Result<Vec<Polygon>, String> {
    let rings: Vec<Vec<f64>> = serde_json::from_value(value.clone())
        .map_err(|_| "segmentation must be a list of flat polygon arrays".to_string())?;
    if rings.is_empty() {
        return Err("segmentation has no polygon".into());
    }
    rings
        .iter()
        .map(|r| Polygon::from_flat(r).map_err(|e| e.to_string()))
        .collect()
}

/// Parses a `{"<image_id>": "inshore" | "offshore"}` sidecar.
pub fn parse_scene_tags(
    text: &str,
    origin: &Path,
) -> Result<BTreeMap<ImageId, Scene>, DatasetError> {
    let raw: BTreeMap<String, Scene> =
        serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<ImageId>()
                .map(|id| (id, v))
                .map_err(|_| DatasetError::Parse {
                    path: origin.to_path_buf(),
                    message: format!("scene tag key {k:?} is not an image id"),
                })
        })
        .collect()
}

/// Serializes ground truth back to COCO layout (single `ship` category).
pub fn ground_truth_to_json(gt: &GroundTruth) -> String {
    let annotations = gt
        .all_instances()
        .map(|inst| CocoAnnotationOut {
            id: inst.instance_id,
            image_id: inst.image_id,
            category_id: 1,
            bbox: inst.bbox,
            area: inst.bbox.area(),
            iscrowd: 0,
            segmentation: &inst.polygons,
        })
        .collect();
    let out = CocoFileOut {
        images: gt.images().collect(),
        annotations,
        categories: [CocoCategory {
            id: 1,
            name: "ship",
        }],
    };
    let mut s = serde_json::to_string_pretty(&out).expect("ground truth serializes");
    s.push('\n');
    s
}
