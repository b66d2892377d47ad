use serde::{Deserialize, Serialize};

use super::emit::format_ratio;
use super::{ReportError, RunRecord, Stratum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub supervision: String,
    pub scene: Stratum,
    pub iou: Option<f64>,
    pub dice: Option<f64>,
}

/// `a − b` for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub scene: Stratum,
    pub iou: Option<f64>,
    pub dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<DeltaRow>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Side-by-side IoU/Dice of two runs over the same ground truth.
pub fn compare(a: &RunRecord, b: &RunRecord) -> Result<ComparisonTable, ReportError> {
    if a.gt_digest != b.gt_digest {
        return Err(ReportError::IncompatibleRuns(format!(
            "{} and {} were evaluated on different ground truth",
            a.run_id, b.run_id
        )));
    }
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for ra in &a.scene_reports {
        let Some(rb) = b.report(ra.scene) else {
            continue;
        };
        for (run, r) in [(a, ra), (b, rb)] {
            rows.push(ComparisonRow {
                method: run.method.clone(),
                supervision: run.supervision.clone(),
                scene: r.scene,
                iou: r.iou_mean,
                dice: r.dice,
            });
        }
        deltas.push(DeltaRow {
            scene: ra.scene,
            iou: diff(ra.iou_mean, rb.iou_mean),
            dice: diff(ra.dice, rb.dice),
        });
    }
    Ok(ComparisonTable { rows, deltas })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ComparisonTable {
    /// Run rows followed by one `delta` row per stratum.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,method,supervision,iou,dice\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scene,
                csv_field(&r.method),
                csv_field(&r.supervision),
                format_ratio(r.iou),
                format_ratio(r.dice)
            ));
        }
        for d in &self.deltas {
            out.push_str(&format!(
                "{},delta,,{},{}\n",
                d.scene,
                format_ratio(d.iou),
                format_ratio(d.dice)
            ));
        }
        out
    }
}
