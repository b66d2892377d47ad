//! Synthetic scenes of axis-aligned rectangular ships.
//!
//! Rectangles have integer corners, so every pixel metric on them has a
//! closed form. All randomness comes from a seeded ChaCha8 stream.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    DatasetError, Detection, GroundTruth, GtInstance, ImageId, ImageInfo, InstanceId, MaskOrigin,
    PredictedInstance, PredictionSet, Scene,
};
use crate::raster::{BBox, BinaryMask};

const PLACEMENT_ATTEMPTS: usize = 2_000;
const SCENE_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub width: u32,
    pub height: u32,
    pub ships: usize,
    /// Inclusive ship width range in pixels.
    pub ship_width: (u32, u32),
    pub ship_height: (u32, u32),
    /// Minimum number of background pixels between two ships along the
    /// separating axis (Chebyshev gap between their pixel sets, minus one),
    /// and between any ship and the image border.
    pub min_separation: u32,
    pub scene: Scene,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    /// Inclusive range of ships per image.
    pub ships: (usize, usize),
    pub ship_width: (u32, u32),
    pub ship_height: (u32, u32),
    pub min_separation: u32,
    pub inshore_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            images: 20,
            width: 64,
            height: 64,
            ships: (1, 4),
            ship_width: (8, 8),
            ship_height: (4, 4),
            min_separation: 4,
            inshore_fraction: 0.25,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl Rect {
    /// Background pixels between the two rectangles along the best axis;
    /// negative when they overlap.
    fn gap(&self, o: &Rect) -> i64 {
        let gx = (o.x - (self.x + self.w)).max(self.x - (o.x + o.w));
        let gy = (o.y - (self.y + self.h)).max(self.y - (o.y + o.h));
        gx.max(gy)
    }
}

fn check_range<T: PartialOrd + std::fmt::Display>(
    name: &str,
    r: (T, T),
) -> Result<(), DatasetError> {
    if r.0 > r.1 {
        return Err(DatasetError::Generation(format!(
            "{name} range {}..={} is empty",
            r.0, r.1
        )));
    }
    Ok(())
}

fn validate_scene(spec: &SyntheticSceneSpec) -> Result<(), DatasetError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(DatasetError::Generation(
            "image size must be positive".into(),
        ));
    }
    check_range("ship width", spec.ship_width)?;
    check_range("ship height", spec.ship_height)?;
    if spec.ship_width.0 == 0 || spec.ship_height.0 == 0 {
        return Err(DatasetError::Generation(
            "ship size must be positive".into(),
        ));
    }
    if spec.ships == 0 {
        return Ok(());
    }
    let sep = spec.min_separation as u64;
    if spec.ship_width.0 as u64 + 2 * sep > spec.width as u64
        || spec.ship_height.0 as u64 + 2 * sep > spec.height as u64
    {
        return Err(DatasetError::Generation(format!(
            "min_separation constraint: a {}x{} ship kept {} px from the border does not fit a {}x{} image",
            spec.ship_width.0, spec.ship_height.0, spec.min_separation, spec.width, spec.height
        )));
    }
    if spec.ships >= 2 {
        // Two ships must be separated along x or y; neither axis has room.
        let fits_x = 2 * spec.ship_width.0 as u64 + 3 * sep <= spec.width as u64;
        let fits_y = 2 * spec.ship_height.0 as u64 + 3 * sep <= spec.height as u64;
        if !fits_x && !fits_y {
            return Err(DatasetError::Generation(format!(
                "min_separation constraint: {} px between two ships of at least {}x{} cannot fit a {}x{} image",
                spec.min_separation, spec.ship_width.0, spec.ship_height.0, spec.width, spec.height
            )));
        }
    }
    Ok(())
}

fn place_ships(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Option<Vec<Rect>> {
    let mut placed: Vec<Rect> = Vec::with_capacity(spec.ships);
    for _ in 0..spec.ships {
        let mut ok = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let m = spec.min_separation;
            let w = rng.random_range(spec.ship_width.0..=spec.ship_width.1.min(spec.width - 2 * m));
            let h =
                rng.random_range(spec.ship_height.0..=spec.ship_height.1.min(spec.height - 2 * m));
            let x = rng.random_range(m..=spec.width - w - m);
            let y = rng.random_range(m..=spec.height - h - m);
            let cand = Rect {
                x: x as i64,
                y: y as i64,
                w: w as i64,
                h: h as i64,
            };
            if placed
                .iter()
                .all(|p| p.gap(&cand) >= spec.min_separation as i64)
            {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

/// Generates the ships of one image. Instance ids start at `first_instance_id`.
pub fn generate_scene(
    spec: &SyntheticSceneSpec,
    image_id: ImageId,
    first_instance_id: InstanceId,
) -> Result<Vec<GtInstance>, DatasetError> {
    validate_scene(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rects = (0..SCENE_RESTARTS)
        .find_map(|_| place_ships(spec, &mut rng))
        .ok_or_else(|| {
            DatasetError::Generation(format!(
                "min_separation constraint: could not place {} ships {} px apart in a {}x{} image after {} restarts",
                spec.ships, spec.min_separation, spec.width, spec.height, SCENE_RESTARTS
            ))
        })?;
    Ok(rects
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bbox = BBox::new(r.x as f64, r.y as f64, r.w as f64, r.h as f64)
                .expect("positive ship size");
            GtInstance {
                instance_id: first_instance_id + i as u64,
                image_id,
                bbox,
                polygons: vec![bbox.to_polygon()],
                scene: spec.scene,
            }
        })
        .collect())
}

/// Generates a multi-image dataset. Image ids run from 1, file names are
/// `{id:06}.pgm`.
pub fn generate_dataset(spec: &SyntheticDatasetSpec) -> Result<GroundTruth, DatasetError> {
    check_range("ships per image", spec.ships)?;
    if !(0.0..=1.0).contains(&spec.inshore_fraction) {
        return Err(DatasetError::Generation(format!(
            "inshore fraction {} outside [0, 1]",
            spec.inshore_fraction
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gt = GroundTruth::new();
    let mut next_instance: InstanceId = 1;
    for idx in 0..spec.images {
        let image_id = idx as ImageId + 1;
        let ships = master.random_range(spec.ships.0..=spec.ships.1);
        let scene = if master.random::<f64>() < spec.inshore_fraction {
            Scene::Inshore
        } else {
            Scene::Offshore
        };
        let scene_spec = SyntheticSceneSpec {
            width: spec.width,
            height: spec.height,
            ships,
            ship_width: spec.ship_width,
            ship_height: spec.ship_height,
            min_separation: spec.min_separation,
            scene,
            seed: master.random(),
        };
        let instances = generate_scene(&scene_spec, image_id, next_instance)?;
        next_instance += instances.len() as u64;
        gt.add_image(
            ImageInfo {
                id: image_id,
                width: spec.width,
                height: spec.height,
                file_name: Some(format!("{image_id:06}.pgm")),
            },
            scene,
        );
        for inst in instances {
            gt.add_instance(inst)?;
        }
    }
    Ok(gt)
}

/// Union of all instance masks of one image.
pub fn scene_image(gt: &GroundTruth, image_id: ImageId) -> Result<BinaryMask, DatasetError> {
    let info = gt
        .image(image_id)
        .ok_or_else(|| DatasetError::UnknownImage {
            image_id,
            context: "scene image".into(),
        })?;
    let mut img = BinaryMask::new(info.width, info.height)?;
    for inst in gt.instances(image_id) {
        img.union_with(&inst.mask(info.width, info.height)?)?;
    }
    Ok(img)
}

/// Writes an 8-bit binary PGM (P5): set pixels 255, background 0.
pub fn write_pgm(mask: &BinaryMask, path: &Path) -> Result<(), DatasetError> {
    let mut buf = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    buf.extend(mask.data().iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
    let mut f = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    f.write_all(&buf).map_err(|e| DatasetError::io(path, e))
}

/// Predictions derived from ground truth with a known perturbation.
///
/// Each instance is kept with probability `1 - drop_rate`; kept instances are
/// translated by `(shift, 0)` and clipped, with a score in `[0.5, 1)` drawn
/// from `seed`. Instances shifted entirely out of the image are dropped.
pub fn perturb_gt(
    gt: &GroundTruth,
    shift: u32,
    drop_rate: f64,
    seed: u64,
) -> Result<PredictionSet, DatasetError> {
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(DatasetError::Schema(format!(
            "drop rate {drop_rate} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PredictionSet::new();
    for info in gt.images() {
        let mut preds = Vec::new();
        for inst in gt.instances(info.id) {
            // Always draw both values so the stream layout is independent of outcomes.
            let u: f64 = rng.random();
            let score = 0.5 + 0.5 * rng.random::<f64>();
            if u < drop_rate {
                continue;
            }
            let Some(bbox) = inst
                .bbox
                .translated(shift as f64, 0.0)
                .clip(info.width, info.height)
            else {
                continue;
            };
            let mask = inst
                .mask(info.width, info.height)?
                .translated(shift as i64, 0);
            preds.push(PredictedInstance {
                detection: Detection::new(info.id, bbox, score)?,
                mask: Some(mask),
                quality: Some(1.0),
                origin: MaskOrigin::Segmenter,
            });
        }
        set.insert_image(info.id, preds);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(ships: usize, sep: u32, seed: u64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            width: 64,
            height: 64,
            ships,
            ship_width: (8, 8),
            ship_height: (4, 4),
            min_separation: sep,
            scene: Scene::Offshore,
            seed,
        }
    }

    #[test]
    fn same_seed_same_geometry() {
        let a = generate_scene(&scene(1, 0, 7), 1, 1).unwrap();
        let b = generate_scene(&scene(1, 0, 7), 1, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].bbox.w, 8.0);
        assert_eq!(a[0].bbox.h, 4.0);
    }

    #[test]
    fn zero_ships() {
        assert!(generate_scene(&scene(0, 0, 1), 1, 1).unwrap().is_empty());
    }

    #[test]
    fn infeasible_separation_names_the_constraint() {
        let err = generate_scene(&scene(3, 100, 1), 1, 1).unwrap_err();
        assert!(err.to_string().contains("min_separation"), "{err}");
    }

    #[test]
    fn dataset_is_deterministic_and_tagged() {
        let spec = SyntheticDatasetSpec::default();
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_images(), 20);
        for info in a.images() {
            let n = a.instances(info.id).len();
            assert!((1..=4).contains(&n));
            assert_ne!(a.scene(info.id), Scene::Unknown);
        }
    }

    #[test]
    fn perturb_identity_and_full_drop() {
        let gt = generate_dataset(&SyntheticDatasetSpec::default()).unwrap();
        let same = perturb_gt(&gt, 0, 0.0, 3).unwrap();
        assert_eq!(same.len(), gt.num_instances());
        for info in gt.images() {
            for (p, g) in same.for_image(info.id).iter().zip(gt.instances(info.id)) {
                assert_eq!(p.detection.bbox, g.bbox);
                assert_eq!(p.mask.as_ref().unwrap(), &g.mask(64, 64).unwrap());
                assert!((0.5..1.0).contains(&p.detection.score));
            }
        }
        assert!(perturb_gt(&gt, 0, 1.0, 3).unwrap().is_empty());
        assert!(perturb_gt(&gt, 0, 1.5, 3).is_err());
    }

    #[test]
    fn pgm_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let m = BinaryMask::from_fn(3, 2, |r, c| r == 1 && c == 2).unwrap();
        write_pgm(&m, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 0, 0, 0, 0, 255]);
    }
}
