//! Scene-stratified aggregates, run records, comparisons and file output.

mod compare;
mod emit;

pub use compare::{compare, ComparisonRow, ComparisonTable, DeltaRow};
pub use emit::{
    emit, format_ratio, load_run_record, render_table_csv, EmitFormats, PROVENANCE_FILE, RUN_FILE,
    TABLE_COLUMNS, TABLE_FILE,
};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{GroundTruth, ImageId, Scene};
use crate::metrics::{
    fraction_at_least, Evaluation, InstanceResult, MapResult, MetricError, ThresholdCurve,
    ThresholdGrid,
};
use crate::pipeline::{ImageFailure, TimingSummary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A scene stratum or the pooled overall row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Inshore,
    Offshore,
    Unknown,
    Overall,
}

impl Stratum {
    pub fn contains(self, scene: Scene) -> bool {
        match self {
            Stratum::Overall => true,
            Stratum::Inshore => scene == Scene::Inshore,
            Stratum::Offshore => scene == Scene::Offshore,
            Stratum::Unknown => scene == Scene::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Inshore => "inshore",
            Stratum::Offshore => "offshore",
            Stratum::Unknown => "unknown",
            Stratum::Overall => "overall",
        }
    }
}

impl From<Scene> for Stratum {
    fn from(s: Scene) -> Self {
        match s {
            Scene::Inshore => Stratum::Inshore,
            Scene::Offshore => Stratum::Offshore,
            Scene::Unknown => Stratum::Unknown,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the segmentation table.
///
/// Mask statistics are `None` when no instance of the stratum has a scored
/// mask (e.g. nothing was detected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: Stratum,
    /// Ground-truth instances in the stratum.
    pub n: usize,
    /// Instances entering the IoU/Dice/precision/recall statistics.
    pub n_scored: usize,
    pub iou_mean: Option<f64>,
    pub iou_std: Option<f64>,
    pub iou_median: Option<f64>,
    pub dice: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou_at_50: Option<f64>,
    pub iou_at_75: Option<f64>,
    pub relaxed_iou_r1: Option<f64>,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregateOptions {
    /// Count unmatched instances as IoU 0 in the mean/std/median columns.
    pub include_unmatched: bool,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation (divisor N).
fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

/// Middle value; mean of the two middle values for even counts.
fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// IoUs entering the threshold curve: scored instances plus unmatched as 0.
pub fn curve_ious<'a>(results: impl IntoIterator<Item = &'a InstanceResult>) -> Vec<f64> {
    results
        .into_iter()
        .filter(|r| r.in_curve())
        .map(|r| r.mask_iou)
        .collect()
}

/// Aggregates the instances of one stratum into a table row.
pub fn aggregate(
    results: &[InstanceResult],
    stratum: Stratum,
    opts: AggregateOptions,
) -> Result<SceneReport, MetricError> {
    let members: Vec<&InstanceResult> = results
        .iter()
        .filter(|r| stratum.contains(r.scene))
        .collect();
    if members.is_empty() {
        return Err(MetricError::Undefined(format!(
            "aggregate over empty stratum {stratum}"
        )));
    }
    let scored: Vec<&InstanceResult> = members
        .iter()
        .copied()
        .filter(|r| r.has_mask_metrics() || (opts.include_unmatched && !r.matched))
        .collect();
    let column = |f: fn(&InstanceResult) -> f64| scored.iter().map(|r| f(r)).collect::<Vec<_>>();
    let ious = column(|r| r.mask_iou);
    let relaxed: Vec<f64> = scored
        .iter()
        .filter_map(|r| {
            if r.matched {
                r.relaxed_iou.get(&1).copied()
            } else {
                Some(0.0)
            }
        })
        .collect();
    let relaxed_r1 = if relaxed.len() == scored.len() {
        mean(&relaxed)
    } else {
        None
    };
    let curve = curve_ious(members.iter().copied());
    let at = |t| fraction_at_least(&curve, t).ok();
    let matched = members.iter().filter(|r| r.matched).count();
    Ok(SceneReport {
        scene: stratum,
        n: members.len(),
        n_scored: scored.len(),
        iou_mean: mean(&ious),
        iou_std: std_dev(&ious),
        iou_median: median(&ious),
        dice: mean(&column(|r| r.dice)),
        precision: mean(&column(|r| r.pixel_precision)),
        recall: mean(&column(|r| r.pixel_recall)),
        iou_at_50: at(0.5),
        iou_at_75: at(0.75),
        relaxed_iou_r1: relaxed_r1,
        detection_rate: matched as f64 / members.len() as f64,
    })
}

/// Rows for every scene present (inshore, offshore, unknown) plus overall.
pub fn scene_reports(
    results: &[InstanceResult],
    opts: AggregateOptions,
) -> Result<Vec<SceneReport>, MetricError> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let mut strata: Vec<Stratum> = Scene::ALL
        .into_iter()
        .filter(|&s| results.iter().any(|r| r.scene == s))
        .map(Stratum::from)
        .collect();
    strata.push(Stratum::Overall);
    strata
        .into_iter()
        .map(|s| aggregate(results, s, opts))
        .collect()
}

/// Where the inputs of a run live, relative to the run directory or as given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSources {
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_tags: Option<String>,
    pub predictions: String,
}

/// A complete evaluation, as persisted to `run.json`.
///
/// `timing` and `created_at` depend on the wall clock; they are written to a
/// separate provenance file so `run.json` is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub method: String,
    pub supervision: String,
    pub config: serde_json::Value,
    pub gt_digest: String,
    pub num_images: usize,
    pub sources: RunSources,
    pub aggregate: AggregateOptions,
    pub curve_grid: ThresholdGrid,
    pub map: Option<MapResult>,
    pub scene_reports: Vec<SceneReport>,
    pub failures: Vec<ImageFailure>,
    pub segmentation_failures: usize,
    pub instances: Vec<InstanceResult>,
    #[serde(skip)]
    pub timing: Option<TimingSummary>,
    #[serde(skip)]
    pub created_at: Option<String>,
}

/// Descriptive fields of a run, supplied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub method: String,
    pub supervision: String,
    pub config: serde_json::Value,
    pub sources: RunSources,
    pub aggregate: AggregateOptions,
    pub curve_grid: ThresholdGrid,
}

impl RunRecord {
    pub fn build(
        meta: RunMeta,
        gt: &GroundTruth,
        evaluation: Evaluation,
        failures: Vec<ImageFailure>,
        segmentation_failures: usize,
    ) -> Result<Self, MetricError> {
        let scene_reports = scene_reports(&evaluation.instances, meta.aggregate)?;
        Ok(Self {
            run_id: meta.run_id,
            method: meta.method,
            supervision: meta.supervision,
            config: meta.config,
            gt_digest: gt.digest(),
            num_images: gt.num_images(),
            sources: meta.sources,
            aggregate: meta.aggregate,
            curve_grid: meta.curve_grid,
            map: evaluation.map,
            scene_reports,
            failures,
            segmentation_failures,
            instances: evaluation.instances,
            timing: None,
            created_at: None,
        })
    }

    pub fn report(&self, stratum: Stratum) -> Option<&SceneReport> {
        self.scene_reports.iter().find(|r| r.scene == stratum)
    }

    pub fn strata(&self) -> impl Iterator<Item = Stratum> + '_ {
        self.scene_reports.iter().map(|r| r.scene)
    }

    pub fn threshold_curve(&self, stratum: Stratum) -> Result<ThresholdCurve, MetricError> {
        let ious = curve_ious(self.instances.iter().filter(|r| stratum.contains(r.scene)));
        crate::metrics::threshold_curve(&ious, &self.curve_grid)
    }

    /// Mean relaxed IoU per stored radius over the scored matched instances.
    pub fn relaxed_sweep(&self, stratum: Stratum) -> Result<Vec<(u32, f64)>, MetricError> {
        let scored: Vec<&InstanceResult> = self
            .instances
            .iter()
            .filter(|r| stratum.contains(r.scene) && r.has_mask_metrics())
            .collect();
        let Some(first) = scored.first() else {
            return Err(MetricError::Undefined(format!(
                "relaxed sweep over no scored instances in {stratum}"
            )));
        };
        first
            .relaxed_iou
            .keys()
            .map(|&radius| {
                let mut sum = 0.0;
                for r in &scored {
                    sum += r.relaxed_iou.get(&radius).copied().ok_or_else(|| {
                        MetricError::InvalidInput(format!(
                            "instance {} lacks relaxed IoU at radius {radius}",
                            r.instance_id
                        ))
                    })?;
                }
                Ok((radius, sum / scored.len() as f64))
            })
            .collect()
    }

    pub fn image_ids(&self) -> Vec<ImageId> {
        let mut ids: Vec<ImageId> = self.instances.iter().map(|r| r.image_id).collect();
        ids.dedup();
        ids
    }
}
