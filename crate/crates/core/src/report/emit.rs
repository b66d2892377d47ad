use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReportError, RunRecord, SceneReport};
use crate::pipeline::TimingSummary;

/// Column order of the segmentation table.
pub const TABLE_COLUMNS: [&str; 12] = [
    "scene",
    "n",
    "iou_mean",
    "iou_std",
    "iou_median",
    "dice",
    "precision",
    "recall",
    "iou_at_50",
    "iou_at_75",
    "relaxed_iou_r1",
    "detection_rate",
];

pub const TABLE_FILE: &str = "report.csv";
pub const RUN_FILE: &str = "run.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitFormats {
    pub table: bool,
    pub json: bool,
    pub curves: bool,
}

impl Default for EmitFormats {
    fn default() -> Self {
        Self {
            table: true,
            json: true,
            curves: true,
        }
    }
}

/// Wall-clock dependent data kept out of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Provenance {
    created_at: Option<String>,
    timing: Option<TimingSummary>,
}

/// Three decimals; empty for undefined values; never `-0.000`.
pub fn format_ratio(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) => {
            let s = format!("{v:.3}");
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
    }
}

fn table_row(r: &SceneReport) -> String {
    let mut cells = vec![r.scene.to_string(), r.n.to_string()];
    cells.extend(
        [
            r.iou_mean,
            r.iou_std,
            r.iou_median,
            r.dice,
            r.precision,
            r.recall,
            r.iou_at_50,
            r.iou_at_75,
            r.relaxed_iou_r1,
            Some(r.detection_rate),
        ]
        .map(format_ratio),
    );
    cells.join(",")
}

pub fn render_table_csv(reports: &[SceneReport]) -> String {
    let mut out = TABLE_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        out.push_str(&table_row(r));
        out.push('\n');
    }
    out
}

fn render_pairs<T: std::fmt::Display>(header: &str, rows: &[(T, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (k, v) in rows {
        writeln!(out, "{k},{}", format_ratio(Some(*v))).unwrap();
    }
    out
}

fn write(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("run record serializes");
    s.push('\n');
    s
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn emit(
    run: &RunRecord,
    dir: &Path,
    formats: EmitFormats,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if formats.table {
        write(
            dir,
            TABLE_FILE,
            &render_table_csv(&run.scene_reports),
            &mut written,
        )?;
    }
    if formats.json {
        write(dir, RUN_FILE, &to_json(run), &mut written)?;
        if run.timing.is_some() || run.created_at.is_some() {
            let prov = Provenance {
                created_at: run.created_at.clone(),
                timing: run.timing.clone(),
            };
            write(dir, PROVENANCE_FILE, &to_json(&prov), &mut written)?;
        }
    }
    if formats.curves {
        for stratum in run.strata() {
            let curve = run.threshold_curve(stratum)?;
            write(
                dir,
                &format!("threshold_curve_{stratum}.csv"),
                &render_pairs("threshold,fraction", &curve.points),
                &mut written,
            )?;
            let sweep = run.relaxed_sweep(stratum).unwrap_or_default();
            write(
                dir,
                &format!("relaxed_sweep_{stratum}.csv"),
                &render_pairs("radius,relaxed_iou", &sweep),
                &mut written,
            )?;
        }
    }
    Ok(written)
}

/// Loads `run.json` (given directly or as its directory) and, when present,
/// the provenance file beside it.
pub fn load_run_record(path: &Path) -> Result<RunRecord, ReportError> {
    let file = if path.is_dir() {
        path.join(RUN_FILE)
    } else {
        path.to_path_buf()
    };
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| ReportError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let parse_err = |p: &Path, e: serde_json::Error| ReportError::Parse {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let text = read(&file)?;
    let mut run: RunRecord = serde_json::from_str(&text).map_err(|e| parse_err(&file, e))?;
    let prov_path = file.with_file_name(PROVENANCE_FILE);
    if prov_path.is_file() {
        let prov: Provenance =
            serde_json::from_str(&read(&prov_path)?).map_err(|e| parse_err(&prov_path, e))?;
        run.created_at = prov.created_at;
        run.timing = prov.timing;
    }
    Ok(run)
}
