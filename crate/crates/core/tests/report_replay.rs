mod common;

use std::fs;

use common::{exact, ratio};
use detprompt::dataset::Scene;
use detprompt::metrics::{InstanceResult, ThresholdGrid};
use detprompt::report::{
    compare, emit, format_ratio, load_run_record, render_table_csv, scene_reports,
    AggregateOptions, EmitFormats, ReportError, RunRecord, RunSources, Stratum, PROVENANCE_FILE,
    TABLE_COLUMNS,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

const FIXTURE: &str = include_str!("fixtures/table_replay_instances.json");

const TABLE: &str = "\
scene,n,iou_mean,iou_std,iou_median,dice,precision,recall,iou_at_50,iou_at_75,relaxed_iou_r1,detection_rate
inshore,46,0.571,0.200,0.637,0.702,0.676,0.820,0.674,0.152,0.598,0.870
offshore,186,0.653,0.147,0.678,0.779,0.774,0.823,0.871,0.301,0.680,0.898
overall,232,0.637,0.162,0.667,0.764,0.755,0.822,0.832,0.272,0.664,0.892
";

fn instances() -> Vec<InstanceResult> {
    serde_json::from_str(FIXTURE).unwrap()
}

fn record(run_id: &str, method: &str, instances: Vec<InstanceResult>) -> RunRecord {
    let aggregate = AggregateOptions::default();
    RunRecord {
        run_id: run_id.into(),
        method: method.into(),
        supervision: "zero-shot".into(),
        config: serde_json::json!({"match_threshold": 0.5}),
        gt_digest: "0123abcd".into(),
        num_images: 116,
        sources: RunSources {
            ground_truth: "gt.json".into(),
            scene_tags: None,
            predictions: "predictions.json".into(),
        },
        aggregate,
        curve_grid: ThresholdGrid::linspace(0.0, 1.0, 0.05).unwrap(),
        map: None,
        scene_reports: scene_reports(&instances, aggregate).unwrap(),
        failures: Vec::new(),
        segmentation_failures: 0,
        instances,
        timing: None,
        created_at: None,
    }
}

/// Rounds to three decimals, half away from zero, for a non-negative value.
fn round3(q: &BigRational) -> String {
    let k = (q * ratio(1000, 1) + ratio(1, 2)).floor().to_integer();
    let thousand = BigInt::from(1000);
    format!("{}.{:03}", &k / &thousand, &k % &thousand)
}

fn mean(v: &[BigRational]) -> BigRational {
    v.iter().cloned().fold(BigRational::zero(), |a, b| a + b) / ratio(v.len() as u64, 1)
}

struct Exact {
    n: usize,
    ious: Vec<BigRational>,
    dice: Vec<BigRational>,
    precision: Vec<BigRational>,
    recall: Vec<BigRational>,
    relaxed: Vec<BigRational>,
    curve: Vec<BigRational>,
    matched: usize,
}

fn exact_stratum(all: &[InstanceResult], stratum: Stratum) -> Exact {
    let members: Vec<&InstanceResult> = all.iter().filter(|r| stratum.contains(r.scene)).collect();
    let mut e = Exact {
        n: members.len(),
        ious: vec![],
        dice: vec![],
        precision: vec![],
        recall: vec![],
        relaxed: vec![],
        curve: vec![],
        matched: members.iter().filter(|r| r.matched).count(),
    };
    for r in members {
        let Some(c) = r.counts else {
            e.curve.push(BigRational::zero());
            continue;
        };
        let iou = ratio(c.intersection, c.union);
        e.ious.push(iou.clone());
        e.curve.push(iou);
        e.dice
            .push(ratio(2 * c.intersection, c.pred_area + c.gt_area));
        e.precision.push(ratio(c.intersection, c.pred_area));
        e.recall.push(ratio(c.intersection, c.gt_area));
        e.relaxed.push(exact(r.relaxed_iou[&1]));
    }
    e
}

fn exact_row(stratum: Stratum, e: &Exact) -> String {
    let m = mean(&e.ious);
    let var = mean(
        &e.ious
            .iter()
            .map(|x| (x - &m) * (x - &m))
            .collect::<Vec<_>>(),
    );
    let mut sorted = e.ious.clone();
    sorted.sort();
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (&sorted[mid - 1] + &sorted[mid]) / ratio(2, 1)
    } else {
        sorted[mid].clone()
    };
    let at = |t: BigRational| {
        ratio(
            e.curve.iter().filter(|x| **x >= t).count() as u64,
            e.curve.len() as u64,
        )
    };
    // Rounded square root: the largest k with (k - 1/2)/1000 <= sqrt(var).
    let k = (1..=1000u64)
        .take_while(|&k| ratio(2 * k - 1, 2000) * ratio(2 * k - 1, 2000) <= var)
        .last()
        .unwrap_or(0);
    let std = ratio(k, 1000);
    [
        stratum.as_str().to_string(),
        e.n.to_string(),
        round3(&m),
        round3(&std),
        round3(&median),
        round3(&mean(&e.dice)),
        round3(&mean(&e.precision)),
        round3(&mean(&e.recall)),
        round3(&at(ratio(1, 2))),
        round3(&at(ratio(3, 4))),
        round3(&mean(&e.relaxed)),
        round3(&ratio(e.matched as u64, e.n as u64)),
    ]
    .join(",")
}

#[test]
fn replayed_instances_reproduce_the_table() {
    let reports = scene_reports(&instances(), AggregateOptions::default()).unwrap();
    assert_eq!(render_table_csv(&reports), TABLE);
}

#[test]
fn table_agrees_with_exact_arithmetic() {
    let all = instances();
    let reports = scene_reports(&all, AggregateOptions::default()).unwrap();
    let mut lines = TABLE.lines().skip(1);
    for r in &reports {
        let e = exact_stratum(&all, r.scene);
        assert_eq!(exact_row(r.scene, &e), lines.next().unwrap());
        let got = exact(r.iou_mean.unwrap()) - mean(&e.ious);
        assert!(got.abs() < ratio(1, 1_000_000_000_000));
    }
}

#[test]
fn overall_mean_is_the_weighted_mean_of_the_scenes() {
    let all = instances();
    let inshore = exact_stratum(&all, Stratum::Inshore);
    let offshore = exact_stratum(&all, Stratum::Offshore);
    let overall = exact_stratum(&all, Stratum::Overall);
    let (a, b) = (inshore.ious.len() as u64, offshore.ious.len() as u64);
    let weighted =
        (mean(&inshore.ious) * ratio(a, 1) + mean(&offshore.ious) * ratio(b, 1)) / ratio(a + b, 1);
    assert_eq!(mean(&overall.ious), weighted);

    let reports = scene_reports(&all, AggregateOptions::default()).unwrap();
    let f = |s: usize| reports[s].iou_mean.unwrap();
    let w = (f(0) * a as f64 + f(1) * b as f64) / (a + b) as f64;
    assert!((f(2) - w).abs() < 1e-12);
}

#[test]
fn two_scene_run_has_three_rows_of_twelve() {
    let table = render_table_csv(&record("a", "m", instances()).scene_reports);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(TABLE_COLUMNS.len(), 12);
    assert!(lines.iter().all(|l| l.split(',').count() == 12));
}

#[test]
fn emission_is_deterministic_and_round_trips() {
    let run = record("a", "detect-and-prompt", instances());
    let (d1, d2, d3) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let first = emit(&run, d1.path(), EmitFormats::default()).unwrap();
    emit(&run, d2.path(), EmitFormats::default()).unwrap();
    let loaded = load_run_record(d1.path()).unwrap();
    assert_eq!(loaded, run);
    emit(&loaded, d3.path(), EmitFormats::default()).unwrap();

    assert!(!d1.path().join(PROVENANCE_FILE).exists());
    assert_eq!(first.len(), 2 + 2 * 3);
    for path in &first {
        let name = path.file_name().unwrap();
        let bytes = fs::read(path).unwrap();
        assert_eq!(bytes, fs::read(d2.path().join(name)).unwrap(), "{name:?}");
        assert_eq!(bytes, fs::read(d3.path().join(name)).unwrap(), "{name:?}");
    }

    let curve = fs::read_to_string(d1.path().join("threshold_curve_overall.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "threshold,fraction");
    assert_eq!(rows.len(), 1 + 21);
}

#[test]
fn provenance_is_kept_out_of_the_run_file() {
    let mut run = record("a", "m", instances());
    let dir = tempfile::tempdir().unwrap();
    emit(&run, dir.path(), EmitFormats::default()).unwrap();
    let plain = fs::read(dir.path().join("run.json")).unwrap();
    run.created_at = Some("2026-01-01T00:00:00Z".into());
    emit(&run, dir.path(), EmitFormats::default()).unwrap();
    assert_eq!(fs::read(dir.path().join("run.json")).unwrap(), plain);
    assert_eq!(
        load_run_record(dir.path()).unwrap().created_at,
        run.created_at
    );
}

/// Shifts every IoU of the fixture so the overall mean moves by `delta`.
fn shifted(delta: f64) -> Vec<InstanceResult> {
    let mut v = instances();
    for r in v.iter_mut().filter(|r| r.has_mask_metrics()) {
        r.mask_iou += delta;
    }
    v
}

#[test]
fn comparison_reports_signed_deltas() {
    let a = record("a", "detect-and-prompt", instances());
    let b = record("b", "baseline", shifted(0.075));
    assert_eq!(
        format_ratio(b.report(Stratum::Overall).unwrap().iou_mean),
        "0.712"
    );
    let table = compare(&a, &b).unwrap();
    let csv = table.to_csv();
    assert!(csv.starts_with("scene,method,supervision,iou,dice\n"));
    assert!(csv.contains("overall,detect-and-prompt,zero-shot,0.637,0.764\n"));
    assert!(csv.contains("overall,baseline,zero-shot,0.712,0.764\n"));
    assert!(csv.contains("overall,delta,,-0.075,0.000\n"));
    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.deltas.len(), 3);
}

#[test]
fn identical_runs_have_zero_deltas() {
    let a = record("a", "m", instances());
    let table = compare(&a, &a.clone()).unwrap();
    assert!(table
        .deltas
        .iter()
        .all(|d| d.iou == Some(0.0) && d.dice == Some(0.0)));
}

#[test]
fn comparison_refuses_different_ground_truth() {
    let a = record("a", "m", instances());
    let mut b = a.clone();
    b.gt_digest = "ffff".into();
    assert!(matches!(
        compare(&a, &b),
        Err(ReportError::IncompatibleRuns(_))
    ));
}

#[test]
fn unmatched_can_count_as_zero() {
    let all = instances();
    let opts = AggregateOptions {
        include_unmatched: true,
    };
    let reports = scene_reports(&all, opts).unwrap();
    let overall = &reports[2];
    assert_eq!(overall.n_scored, 232);
    let e = exact_stratum(&all, Stratum::Overall);
    let with_zeros = mean(&e.curve);
    assert_eq!(format_ratio(overall.iou_mean), round3(&with_zeros));
    assert!(all.iter().any(|r| r.scene == Scene::Inshore && !r.matched));
}
