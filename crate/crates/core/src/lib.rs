//! Detect-and-prompt instance segmentation harness.
//!
//! A detector proposes scored boxes, each surviving box prompts a promptable
//! segmenter, and the best candidate mask per prompt is kept. This crate
//! provides the raster primitives, ground-truth and prediction I/O, the
//! evaluation metrics (mask IoU, Dice, pixel precision/recall, relaxed IoU,
//! box matching, COCO mAP), the pipeline orchestration with pluggable
//! backends, and Table-style reports.

pub mod dataset;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod raster;
pub mod report;

pub use parallel::Parallelism;
