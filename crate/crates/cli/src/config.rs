//! Run settings: defaults, then a TOML file, then `--set key=value`, then
//! dedicated flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use detprompt::metrics::{EvalOptions, ThresholdGrid};
use detprompt::pipeline::{BackendDescriptor, ErrorPolicy, PipelineConfig};
use detprompt::report::AggregateOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Replay,
    SyntheticOracle,
    ExternalProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub gt: Option<PathBuf>,
    pub scenes: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub run_id: Option<String>,
    pub method: String,
    pub supervision: String,
    pub detector: Option<BackendKind>,
    pub segmenter: Option<BackendKind>,
    pub detector_command: Vec<String>,
    pub segmenter_command: Vec<String>,
    pub processes: usize,
    pub oracle_shift: u32,
    pub oracle_drop_rate: f64,
    pub seed: Option<u64>,
    pub confidence_threshold: f64,
    pub max_candidates: usize,
    pub match_threshold: f64,
    pub relaxed_radii: Vec<u32>,
    pub prompt_margin: f64,
    pub on_error: ErrorPolicy,
    pub include_unmatched: bool,
    pub include_synthesized: bool,
    pub curve_step: f64,
    pub timing_ships: Vec<usize>,
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            gt: None,
            scenes: None,
            images_dir: None,
            predictions: None,
            out: None,
            run_id: None,
            method: "detect-and-prompt".into(),
            supervision: "zero-shot".into(),
            detector: None,
            segmenter: None,
            detector_command: Vec::new(),
            segmenter_command: Vec::new(),
            processes: 1,
            oracle_shift: 0,
            oracle_drop_rate: 0.0,
            seed: None,
            confidence_threshold: p.confidence_threshold,
            max_candidates: p.max_candidates,
            match_threshold: p.match_threshold,
            relaxed_radii: p.relaxed_radii,
            prompt_margin: p.prompt_margin,
            on_error: p.on_error,
            include_unmatched: false,
            include_synthesized: false,
            curve_step: 0.05,
            timing_ships: Vec::new(),
            jobs: p.jobs,
        }
    }
}

/// Every configuration key with a one-line description, as shown in `--help`.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("gt", "ground-truth annotations (COCO layout)"),
    (
        "scenes",
        "scene-tag sidecar {\"<image_id>\": \"inshore\"|\"offshore\"}",
    ),
    (
        "images_dir",
        "directory joined to each image file_name for backends",
    ),
    (
        "predictions",
        "stored predictions (eval input, replay backend)",
    ),
    ("out", "output directory"),
    ("run_id", "run identifier [default: output directory name]"),
    (
        "method",
        "method label for reports [default: detect-and-prompt]",
    ),
    (
        "supervision",
        "supervision label for reports [default: zero-shot]",
    ),
    ("detector", "replay | synthetic-oracle | external-process"),
    ("segmenter", "as detector [default: same as detector]"),
    (
        "detector_command",
        "program and arguments of the external detector",
    ),
    (
        "segmenter_command",
        "program and arguments of the external segmenter",
    ),
    (
        "processes",
        "external worker processes per backend [default: 1]",
    ),
    (
        "oracle_shift",
        "oracle horizontal shift in pixels [default: 0]",
    ),
    (
        "oracle_drop_rate",
        "oracle fraction of dropped instances [default: 0]",
    ),
    ("seed", "seed for the synthetic oracle"),
    (
        "confidence_threshold",
        "minimum detection score [default: 0.5]",
    ),
    ("max_candidates", "candidate masks per prompt [default: 3]"),
    (
        "match_threshold",
        "box IoU needed for a match [default: 0.5]",
    ),
    (
        "relaxed_radii",
        "dilation radii for relaxed IoU [default: [0, 1, 2, 3]]",
    ),
    (
        "prompt_margin",
        "pixels added around each prompt box [default: 0]",
    ),
    (
        "on_error",
        "skip | abort on backend failure [default: skip]",
    ),
    (
        "include_unmatched",
        "count unmatched instances as IoU 0 in table stats",
    ),
    (
        "include_synthesized",
        "score box-derived masks like real ones",
    ),
    (
        "curve_step",
        "threshold-curve grid step on [0, 1] [default: 0.05]",
    ),
    (
        "timing_ships",
        "ship counts for modeled latency [default: observed mean]",
    ),
    ("jobs", "worker threads; 0 = all cores [default: 1]"),
];

/// Reads the TOML value of a `--set` right-hand side; bare words are strings.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Settings {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .filter(|(k, _)| !k.trim().is_empty())
                .ok_or_else(|| anyhow!("--set expects key=value, got {o:?}"))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let settings: Settings = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("invalid configuration: {e}"))?;
        Ok(settings)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            confidence_threshold: self.confidence_threshold,
            max_candidates: self.max_candidates,
            relaxed_radii: self.relaxed_radii.clone(),
            match_threshold: self.match_threshold,
            jobs: self.jobs,
            prompt_margin: self.prompt_margin,
            on_error: self.on_error,
        }
    }

    pub fn eval_options(&self) -> Result<EvalOptions> {
        if self.relaxed_radii.windows(2).any(|w| w[0] >= w[1]) {
            bail!("relaxed_radii must be strictly increasing");
        }
        Ok(EvalOptions {
            match_threshold: self.match_threshold,
            relaxed_radii: self.relaxed_radii.clone(),
            include_synthesized: self.include_synthesized,
            map_thresholds: ThresholdGrid::coco(),
            parallelism: self.pipeline().parallelism(),
        })
    }

    pub fn aggregate(&self) -> AggregateOptions {
        AggregateOptions {
            include_unmatched: self.include_unmatched,
        }
    }

    pub fn curve_grid(&self) -> Result<ThresholdGrid> {
        Ok(ThresholdGrid::linspace(0.0, 1.0, self.curve_step)?)
    }

    fn descriptor(&self, kind: BackendKind, command: &[String]) -> Result<BackendDescriptor> {
        Ok(match kind {
            BackendKind::Replay => BackendDescriptor::Replay {
                predictions: self
                    .predictions
                    .clone()
                    .ok_or_else(|| anyhow!("the replay backend needs `predictions`"))?,
            },
            BackendKind::SyntheticOracle => BackendDescriptor::SyntheticOracle {
                shift: self.oracle_shift,
                drop_rate: self.oracle_drop_rate,
                seed: self
                    .seed
                    .ok_or_else(|| anyhow!("the synthetic oracle needs `seed`"))?,
            },
            BackendKind::ExternalProcess => BackendDescriptor::ExternalProcess {
                command: command.to_vec(),
                processes: self.processes,
            },
        })
    }

    /// Detector and segmenter descriptors.
    pub fn backends(&self) -> Result<(BackendDescriptor, BackendDescriptor)> {
        let det_kind = self
            .detector
            .ok_or_else(|| anyhow!("configuration key `detector` is required"))?;
        let seg_kind = self.segmenter.unwrap_or(det_kind);
        let seg_command = if self.segmenter_command.is_empty() {
            &self.detector_command
        } else {
            &self.segmenter_command
        };
        Ok((
            self.descriptor(det_kind, &self.detector_command)?,
            self.descriptor(seg_kind, seg_command)?,
        ))
    }

    /// The settings that shaped the results, for the run record.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("settings serialize");
        if let Some(obj) = v.as_object_mut() {
            for volatile in ["jobs", "out", "run_id"] {
                obj.remove(volatile);
            }
        }
        v
    }

    pub fn from_snapshot(v: serde_json::Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| anyhow!("unreadable config snapshot: {e}"))
    }
}
