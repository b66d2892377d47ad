//! Binary mask rasters and the geometric primitives the metrics are built on.
//!
//! Masks are stored row-major, one byte per pixel, values restricted to 0/1.
//! Geometry uses continuous pixel coordinates where pixel `(row i, col j)`
//! covers `[j, j+1) x [i, i+1)` and is sampled at its center `(j+0.5, i+0.5)`.

mod morphology;
mod polygon;
mod rle;

pub use morphology::dilate;
pub use polygon::{mask_from_bbox, rasterize_polygon, rasterize_polygons};
pub use rle::{rle_decode, rle_encode, RleMask};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("degenerate polygon: {0} vertices, need at least 3")]
    DegeneratePolygon(usize),
    #[error("invalid polygon vertex ({x}, {y}): coordinates must be finite and non-negative")]
    InvalidVertex { x: f64, y: f64 },
    #[error(
        "invalid bounding box [{x}, {y}, {w}, {h}]: width and height must be positive and finite"
    )]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("invalid mask dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("mask data has {actual} elements, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("mask value {value} at index {index} is not binary")]
    NonBinary { index: usize, value: u8 },
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("malformed RLE: {0}")]
    MalformedRle(String),
}

/// Row-major binary mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    /// All-zero mask.
    pub fn new(width: u32, height: u32) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        })
    }

    pub fn filled(width: u32, height: u32) -> Result<Self, RasterError> {
        let mut m = Self::new(width, height)?;
        m.data.fill(1);
        Ok(m)
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(RasterError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(RasterError::NonBinary { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a mask by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, RasterError> {
        let mut m = Self::new(width, height)?;
        for row in 0..height {
            for col in 0..width {
                if f(row, col) {
                    m.data[row as usize * width as usize + col as usize] = 1;
                }
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value as u8;
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Pixelwise OR, in place.
    pub fn union_with(&mut self, other: &BinaryMask) -> Result<(), RasterError> {
        self.check_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
        Ok(())
    }

    /// Inclusive pixel bounds `(row0, col0, row1, col1)` of the set pixels.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let w = self.width as usize;
        let mut out: Option<(u32, u32, u32, u32)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let (r, c) = ((i / w) as u32, (i % w) as u32);
            out = Some(match out {
                None => (r, c, r, c),
                Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
            });
        }
        out
    }

    /// Copies the inclusive window `(row0, col0)..=(row1, col1)`.
    pub fn crop(&self, row0: u32, col0: u32, row1: u32, col1: u32) -> BinaryMask {
        debug_assert!(row0 <= row1 && row1 < self.height && col0 <= col1 && col1 < self.width);
        let (w, h) = (col1 - col0 + 1, row1 - row0 + 1);
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for r in row0..=row1 {
            let start = r as usize * self.width as usize + col0 as usize;
            data.extend_from_slice(&self.data[start..start + w as usize]);
        }
        BinaryMask {
            width: w,
            height: h,
            data,
        }
    }

    /// Integer translation by `(dx, dy)`; pixels leaving the image are dropped.
    pub fn translated(&self, dx: i64, dy: i64) -> BinaryMask {
        let mut out = BinaryMask {
            width: self.width,
            height: self.height,
            data: vec![0; self.data.len()],
        };
        let (w, h) = (self.width as i64, self.height as i64);
        for r in 0..h {
            let nr = r + dy;
            if nr < 0 || nr >= h {
                continue;
            }
            for c in 0..w {
                let nc = c + dx;
                if nc < 0 || nc >= w {
                    continue;
                }
                out.data[(nr * w + nc) as usize] = self.data[(r * w + c) as usize];
            }
        }
        out
    }

    fn check_shape(&self, other: &BinaryMask) -> Result<(), RasterError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(RasterError::ShapeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }
}

/// Axis-aligned box in continuous pixel coordinates, `[x, y, w, h]` convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, RasterError> {
        let ok = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !ok || w <= 0.0 || h <= 0.0 {
            return Err(RasterError::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Clips to `[0, width] x [0, height]`; `None` when nothing remains.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        BBox::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    /// Grows every side by `margin` pixels.
    pub fn expand(&self, margin: f64) -> Option<BBox> {
        BBox::new(
            self.x - margin,
            self.y - margin,
            self.w + 2.0 * margin,
            self.h + 2.0 * margin,
        )
        .ok()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: vec![
                (self.x, self.y),
                (self.right(), self.y),
                (self.right(), self.bottom()),
                (self.x, self.bottom()),
            ],
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = RasterError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Closed ring of vertices; serialized as a flat `[x1, y1, x2, y2, ...]` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, RasterError> {
        if vertices.len() < 3 {
            return Err(RasterError::DegeneratePolygon(vertices.len()));
        }
        for &(x, y) in &vertices {
            if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
                return Err(RasterError::InvalidVertex { x, y });
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_flat(coords: &[f64]) -> Result<Self, RasterError> {
        if !coords.len().is_multiple_of(2) {
            return Err(RasterError::DegeneratePolygon(coords.len() / 2));
        }
        Self::new(coords.chunks_exact(2).map(|p| (p[0], p[1])).collect())
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Tight bounding box of the vertices (`None` for zero-area extents).
    pub fn bounding_box(&self) -> Option<BBox> {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.vertices {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BBox::new(x0, y0, x1 - x0, y1 - y0).ok()
    }
}

impl TryFrom<Vec<f64>> for Polygon {
    type Error = RasterError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Polygon::from_flat(&v)
    }
}

impl From<Polygon> for Vec<f64> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().flat_map(|(x, y)| [x, y]).collect()
    }
}

/// Pixel overlap counts between a predicted and a reference mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub intersection: u64,
    pub pred_area: u64,
    pub gt_area: u64,
    pub union: u64,
}

pub fn pixel_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts, RasterError> {
    pred.check_shape(gt)?;
    let (mut intersection, mut pred_area, mut gt_area) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        intersection += (p & g) as u64;
        pred_area += p as u64;
        gt_area += g as u64;
    }
    Ok(ConfusionCounts {
        intersection,
        pred_area,
        gt_area,
        union: pred_area + gt_area - intersection,
    })
}
