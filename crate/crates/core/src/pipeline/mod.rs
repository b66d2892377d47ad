//! Detect-and-prompt orchestration.
//!
//! For every image: run the detector, keep detections with score at or above
//! the confidence threshold, prompt the segmenter once per surviving box and
//! keep the candidate with the highest predicted quality. Wall time of each
//! stage is recorded through an injectable [`Clock`].

mod oracle;
mod process;
mod replay;
mod timing;

pub use oracle::OracleBackend;
pub use process::ProcessBackend;
pub use replay::ReplayBackend;
pub use timing::{
    summarize_timing, Clock, ManualClock, ModeledTotal, MonotonicClock, TimingRecord, TimingSummary,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    load_predictions, DatasetError, Detection, GroundTruth, ImageId, ImageInfo, MaskOrigin,
    PredictedInstance, PredictionSet,
};
use crate::parallel::{map_ordered, Parallelism};
use crate::raster::{BBox, BinaryMask};
use timing::millis;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend failed on image {image_id}: {message}")]
    Failed { image_id: ImageId, message: String },
    #[error("backend protocol error at response line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("backend I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("backend error on image {image_id}")]
    Backend {
        image_id: ImageId,
        #[source]
        source: BackendError,
    },
    #[error("segmenter returned no candidate mask")]
    EmptyCandidates,
    #[error("dataset has no images")]
    EmptyDataset,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPolicy {
    /// Record the failure, continue with the next image.
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub confidence_threshold: f64,
    pub max_candidates: usize,
    pub relaxed_radii: Vec<u32>,
    pub match_threshold: f64,
    /// Worker count; 1 runs sequentially, 0 uses every core.
    pub jobs: usize,
    /// Pixels added on every side of a detection box before prompting.
    pub prompt_margin: f64,
    pub on_error: ErrorPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            max_candidates: 3,
            relaxed_radii: vec![0, 1, 2, 3],
            match_threshold: 0.5,
            jobs: 1,
            prompt_margin: 0.0,
            on_error: ErrorPolicy::Skip,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.confidence_threshold) {
            return Err(PipelineError::Config(format!(
                "confidence_threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        if !unit.contains(&self.match_threshold) {
            return Err(PipelineError::Config(format!(
                "match_threshold {} outside [0, 1]",
                self.match_threshold
            )));
        }
        if self.max_candidates == 0 {
            return Err(PipelineError::Config(
                "max_candidates must be at least 1".into(),
            ));
        }
        if !self.prompt_margin.is_finite() {
            return Err(PipelineError::Config("prompt_margin must be finite".into()));
        }
        Ok(())
    }

    pub fn parallelism(&self) -> Parallelism {
        Parallelism::from_jobs(self.jobs)
    }
}

/// What a backend needs to locate an image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRef {
    pub image_id: ImageId,
    pub width: u32,
    pub height: u32,
    pub path: Option<PathBuf>,
}

impl ImageRef {
    pub fn from_info(info: &ImageInfo, images_dir: Option<&Path>) -> Self {
        let path = info.file_name.as_ref().map(|f| match images_dir {
            Some(dir) => dir.join(f),
            None => PathBuf::from(f),
        });
        Self {
            image_id: info.id,
            width: info.width,
            height: info.height,
            path,
        }
    }

    /// Identifier sent to external backends: the path, or the image id.
    pub fn locator(&self) -> String {
        match &self.path {
            Some(p) => p.display().to_string(),
            None => self.image_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: BinaryMask,
    /// Segmenter's own estimate of the mask IoU.
    pub quality: f64,
    pub synthesized: bool,
}

impl Candidate {
    pub fn new(mask: BinaryMask, quality: f64) -> Self {
        Self {
            mask,
            quality,
            synthesized: false,
        }
    }
}

/// Stage 1: scored boxes for an image.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError>;
}

/// Stage 2: candidate masks for one box prompt, ranked by predicted quality.
pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        image: &ImageRef,
        prompt: &BBox,
        max_candidates: usize,
    ) -> Result<Vec<Candidate>, BackendError>;
}

/// Keeps detections with `score >= threshold`, preserving order.
pub fn filter_detections(detections: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| d.score >= threshold)
        .collect()
}

/// Index of the candidate with the highest quality; ties go to the lowest index.
pub fn select_mask(candidates: &[Candidate]) -> Result<usize, PipelineError> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.is_none_or(|b| c.quality > candidates[b].quality) {
            best = Some(i);
        }
    }
    best.ok_or(PipelineError::EmptyCandidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image_id: ImageId,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub predictions: PredictionSet,
    pub timings: Vec<TimingRecord>,
    /// Skipped images and failed prompts, in image order.
    pub failures: Vec<ImageFailure>,
    /// Prompts for which no mask could be selected.
    pub segmentation_failures: usize,
}

impl PipelineOutput {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

struct ImageOutcome {
    predictions: Vec<PredictedInstance>,
    timing: Option<TimingRecord>,
    failures: Vec<ImageFailure>,
    segmentation_failures: usize,
}

/// Runs detect → filter → segment → select over every image of `gt`.
///
/// Output is ordered by image id and independent of `config.jobs` as long
/// as the backends are deterministic.
pub fn run_pipeline(
    gt: &GroundTruth,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
    clock: &dyn Clock,
    images_dir: Option<&Path>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    if gt.num_images() == 0 {
        return Err(PipelineError::EmptyDataset);
    }
    let refs: Vec<ImageRef> = gt
        .images()
        .map(|info| ImageRef::from_info(info, images_dir))
        .collect();
    let outcomes = map_ordered(&refs, config.parallelism(), |image| {
        process_image(image, detector, segmenter, config, clock)
    });

    let mut out = PipelineOutput::default();
    for (image, outcome) in refs.iter().zip(outcomes) {
        let outcome = outcome?;
        out.predictions
            .insert_image(image.image_id, outcome.predictions);
        out.timings.extend(outcome.timing);
        out.failures.extend(outcome.failures);
        out.segmentation_failures += outcome.segmentation_failures;
    }
    Ok(out)
}

fn process_image(
    image: &ImageRef,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<ImageOutcome, PipelineError> {
    let backend_err = |source| PipelineError::Backend {
        image_id: image.image_id,
        source,
    };
    let failure = |stage: &str, message: String| ImageFailure {
        image_id: image.image_id,
        stage: stage.into(),
        message,
    };
    let mut outcome = ImageOutcome {
        predictions: Vec::new(),
        timing: None,
        failures: Vec::new(),
        segmentation_failures: 0,
    };

    let t0 = clock.now();
    let detections = match detector.detect(image) {
        Ok(d) => d,
        Err(e) if config.on_error == ErrorPolicy::Skip => {
            log::warn!("image {}: detection failed, skipping: {e}", image.image_id);
            outcome.failures.push(failure("detect", e.to_string()));
            return Ok(outcome);
        }
        Err(e) => return Err(backend_err(e)),
    };
    let detect_ms = millis(clock.now() - t0);
    let prompts = filter_detections(detections, config.confidence_threshold);

    let mut segment_ms = Vec::with_capacity(prompts.len());
    for det in &prompts {
        let prompt = det
            .bbox
            .expand(config.prompt_margin)
            .and_then(|b| b.clip(image.width, image.height));
        let t = clock.now();
        let candidates = match prompt {
            Some(p) => segmenter.segment(image, &p, config.max_candidates),
            None => Ok(Vec::new()),
        };
        segment_ms.push(millis(clock.now() - t));
        let candidates = match candidates {
            Ok(c) => c,
            Err(e) if config.on_error == ErrorPolicy::Skip => {
                outcome.failures.push(failure("segment", e.to_string()));
                Vec::new()
            }
            Err(e) => return Err(backend_err(e)),
        };
        let chosen = select_mask(&candidates[..candidates.len().min(config.max_candidates)]);
        let predicted = match chosen {
            Ok(i) => {
                let c = &candidates[i];
                PredictedInstance {
                    detection: *det,
                    mask: Some(c.mask.clone()),
                    quality: Some(c.quality),
                    origin: if c.synthesized {
                        MaskOrigin::FromBox
                    } else {
                        MaskOrigin::Segmenter
                    },
                }
            }
            Err(_) => {
                outcome.segmentation_failures += 1;
                PredictedInstance {
                    detection: *det,
                    mask: None,
                    quality: None,
                    origin: MaskOrigin::Failed,
                }
            }
        };
        outcome.predictions.push(predicted);
    }
    outcome.timing = Some(TimingRecord {
        image_id: image.image_id,
        detect_ms,
        ships: segment_ms.len(),
        segment_ms,
    });
    Ok(outcome)
}

/// Declarative backend choice, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendDescriptor {
    /// Stored predictions (COCO-results JSON) played back verbatim.
    Replay { predictions: PathBuf },
    /// Ground truth perturbed by a known shift and drop rate.
    SyntheticOracle {
        shift: u32,
        drop_rate: f64,
        seed: u64,
    },
    /// A child process speaking newline-delimited JSON.
    ExternalProcess {
        command: Vec<String>,
        processes: usize,
    },
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), PipelineError> {
        match self {
            BackendDescriptor::Replay { predictions } if predictions.as_os_str().is_empty() => Err(
                PipelineError::Config("replay backend needs a predictions file".into()),
            ),
            BackendDescriptor::SyntheticOracle { drop_rate, .. }
                if !(0.0..=1.0).contains(drop_rate) =>
            {
                Err(PipelineError::Config(format!(
                    "oracle drop rate {drop_rate} outside [0, 1]"
                )))
            }
            BackendDescriptor::ExternalProcess { command, processes }
                if command.is_empty() || *processes == 0 =>
            {
                Err(PipelineError::Config(
                    "external-process backend needs a command and at least one process".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn build(&self, gt: &GroundTruth) -> Result<Backend, PipelineError> {
        self.validate()?;
        Ok(match self {
            BackendDescriptor::Replay { predictions } => Backend::Replay(Arc::new(
                ReplayBackend::from_predictions(&load_predictions(predictions, gt)?),
            )),
            BackendDescriptor::SyntheticOracle {
                shift,
                drop_rate,
                seed,
            } => Backend::Oracle(Arc::new(OracleBackend::new(gt, *shift, *drop_rate, *seed)?)),
            BackendDescriptor::ExternalProcess { command, processes } => Backend::Process(
                Arc::new(ProcessBackend::spawn(command, *processes).map_err(|e| {
                    PipelineError::Config(format!("could not start {:?}: {e}", command[0]))
                })?),
            ),
        })
    }
}

enum Backend {
    Replay(Arc<ReplayBackend>),
    Oracle(Arc<OracleBackend>),
    Process(Arc<ProcessBackend>),
}

impl Backend {
    fn detector(&self) -> Arc<dyn Detector> {
        match self {
            Backend::Replay(b) => b.clone(),
            Backend::Oracle(b) => b.clone(),
            Backend::Process(b) => b.clone(),
        }
    }

    fn segmenter(&self) -> Arc<dyn Segmenter> {
        match self {
            Backend::Replay(b) => b.clone(),
            Backend::Oracle(b) => b.clone(),
            Backend::Process(b) => b.clone(),
        }
    }
}

pub type Backends = (Arc<dyn Detector>, Arc<dyn Segmenter>);

/// Instantiates both stages; identical descriptors share one backend.
pub fn build_backends(
    detector: &BackendDescriptor,
    segmenter: &BackendDescriptor,
    gt: &GroundTruth,
) -> Result<Backends, PipelineError> {
    let det = detector.build(gt)?;
    if detector == segmenter {
        return Ok((det.detector(), det.segmenter()));
    }
    let seg = segmenter.build(gt)?;
    Ok((det.detector(), seg.segmenter()))
}
