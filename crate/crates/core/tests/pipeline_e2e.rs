mod common;

use std::time::Duration;

use common::oracle_counts;
use detprompt::dataset::{
    generate_dataset, predictions_to_json, Detection, GroundTruth, SyntheticDatasetSpec,
};
use detprompt::metrics::{evaluate, EvalOptions, Evaluation};
use detprompt::pipeline::{
    run_pipeline, summarize_timing, BackendError, Candidate, Detector, ImageRef, ManualClock,
    OracleBackend, PipelineConfig, PipelineOutput, Segmenter,
};
use detprompt::raster::{BBox, BinaryMask};
use detprompt::report::{format_ratio, scene_reports, AggregateOptions};
use detprompt::Parallelism;

fn dataset(seed: u64) -> GroundTruth {
    generate_dataset(&SyntheticDatasetSpec {
        images: 24,
        seed,
        ..SyntheticDatasetSpec::default()
    })
    .unwrap()
}

fn run(gt: &GroundTruth, shift: u32, jobs: usize) -> (PipelineOutput, Evaluation) {
    let oracle = OracleBackend::new(gt, shift, 0.0, 3).unwrap();
    let config = PipelineConfig {
        jobs,
        ..PipelineConfig::default()
    };
    let out = run_pipeline(gt, &oracle, &oracle, &config, &ManualClock::new(), None).unwrap();
    let opts = EvalOptions {
        parallelism: Parallelism::from_jobs(jobs),
        ..EvalOptions::default()
    };
    let eval = evaluate(gt, &out.predictions, &opts).unwrap();
    (out, eval)
}

#[test]
fn unperturbed_oracle_is_a_fixed_point() {
    let gt = dataset(1);
    let (out, eval) = run(&gt, 0, 1);
    assert!(out.failures.is_empty());
    for r in &eval.instances {
        assert!(r.matched);
        assert_eq!((r.mask_iou, r.dice), (1.0, 1.0));
    }
    for row in scene_reports(&eval.instances, AggregateOptions::default()).unwrap() {
        assert_eq!(row.iou_mean, Some(1.0));
        assert_eq!(row.dice, Some(1.0));
        assert_eq!(row.detection_rate, 1.0);
    }
    assert_eq!(eval.map.unwrap().map, 1.0);
}

#[test]
fn two_pixel_shift_gives_six_tenths_everywhere() {
    let gt = dataset(2);
    let (_, eval) = run(&gt, 2, 1);
    for r in &eval.instances {
        let info = gt.image(r.image_id).unwrap();
        let inst = gt
            .instances(r.image_id)
            .iter()
            .find(|g| g.instance_id == r.instance_id)
            .unwrap();
        let g = inst.mask(info.width, info.height).unwrap();
        let shifted = BinaryMask::from_fn(info.width, info.height, |row, col| {
            col >= 2 && g.get(row, col - 2)
        })
        .unwrap();
        let (i, _, _, u) = oracle_counts(&shifted, &g);
        // An 8-pixel-wide ship moved 2 pixels: (8 - 2) / (8 + 2).
        assert_eq!(10 * i, 6 * u);
        assert_eq!(r.mask_iou, i as f64 / u as f64);
        assert_eq!(r.mask_iou, 0.6);
    }
    let rows = scene_reports(&eval.instances, AggregateOptions::default()).unwrap();
    for row in rows {
        assert!((row.iou_mean.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(format_ratio(row.iou_mean), "0.600");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let gt = dataset(3);
    let (seq_out, seq_eval) = run(&gt, 1, 1);
    for jobs in [0, 2, 8] {
        let (par_out, par_eval) = run(&gt, 1, jobs);
        assert_eq!(
            predictions_to_json(&par_out.predictions),
            predictions_to_json(&seq_out.predictions)
        );
        assert_eq!(par_eval.instances, seq_eval.instances);
        assert_eq!(par_eval.map, seq_eval.map);
    }
}

/// Oracle answers with fixed simulated latencies.
struct Timed<'a> {
    inner: OracleBackend,
    clock: &'a ManualClock,
}

impl Detector for Timed<'_> {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        self.clock.advance(Duration::from_millis(8));
        self.inner.detect(image)
    }
}

impl Segmenter for Timed<'_> {
    fn segment(
        &self,
        image: &ImageRef,
        prompt: &BBox,
        max_candidates: usize,
    ) -> Result<Vec<Candidate>, BackendError> {
        self.clock.advance(Duration::from_millis(85));
        self.inner.segment(image, prompt, max_candidates)
    }
}

#[test]
fn fixed_latencies_give_linear_totals() {
    let gt = dataset(4);
    let clock = ManualClock::new();
    let backend = Timed {
        inner: OracleBackend::new(&gt, 0, 0.0, 3).unwrap(),
        clock: &clock,
    };
    let out = run_pipeline(
        &gt,
        &backend,
        &backend,
        &PipelineConfig::default(),
        &clock,
        None,
    )
    .unwrap();
    assert_eq!(out.timings.len(), 24);
    let s = summarize_timing(&out.timings, &[2, 4]).unwrap();
    assert_eq!(s.prompts, gt.num_instances());
    assert_eq!((s.detect_mean_ms, s.detect_std_ms), (8.0, 0.0));
    assert_eq!((s.segment_mean_ms, s.segment_std_ms), (85.0, 0.0));
    let totals: Vec<f64> = s.modeled_totals.iter().map(|m| m.total_ms).collect();
    assert_eq!(totals, [178.0, 348.0]);
}
