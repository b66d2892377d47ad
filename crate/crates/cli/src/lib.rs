//! The `detprompt` command line.

pub mod args;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use detprompt::dataset::{
    generate_dataset, ground_truth_to_json, load_ground_truth, load_predictions,
    predictions_to_json, scene_image, write_pgm, GroundTruth, SyntheticDatasetSpec,
};
use detprompt::metrics::evaluate;
use detprompt::pipeline::{
    build_backends, run_pipeline, summarize_timing, MonotonicClock, PipelineError,
};
use detprompt::report::{
    compare, emit, load_run_record, render_table_csv, scene_reports, EmitFormats, ReportError,
    RunMeta, RunRecord, RunSources,
};

pub use args::Cli;
use args::{CompareArgs, ConfigArgs, EvalArgs, ReportArgs, RunArgs, SweepArgs, SynthArgs};
pub use config::{Settings, CONFIG_KEYS};

pub const GT_FILE: &str = "gt.json";
pub const SCENES_FILE: &str = "scenes.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Finished, but some images were skipped.
    Partial,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or input files.
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Backend { .. } | PipelineError::EmptyCandidates => {
            Failure::Runtime(e.into())
        }
        _ => Failure::Usage(e.into()),
    }
}

/// Every way a run file can fail to load is a problem with the input.
fn load_failure(e: ReportError) -> Failure {
    Failure::Usage(e.into())
}

fn report_failure(e: ReportError) -> Failure {
    match e {
        ReportError::Io { .. } | ReportError::Metric(_) => Failure::Runtime(e.into()),
        _ => Failure::Usage(e.into()),
    }
}

pub fn execute(cli: Cli) -> Result<Outcome, Failure> {
    use args::Command;
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Run(a) => run(&a),
        Command::Eval(a) => eval(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a),
        Command::Compare(a) => compare_runs(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| anyhow!("writing {}: {e}", path.display()))
        .runtime()
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path)
        .map_err(|e| anyhow!("creating {}: {e}", path.display()))
        .runtime()
}

fn synth(a: &SynthArgs) -> Result<Outcome, Failure> {
    let spec = SyntheticDatasetSpec {
        images: a.images,
        width: a.size.0,
        height: a.size.1,
        ships: (a.ships.0, a.ships.1),
        ship_width: (a.ship_width.0, a.ship_width.1),
        ship_height: (a.ship_height.0, a.ship_height.1),
        min_separation: a.min_sep,
        inshore_fraction: a.inshore_fraction,
        seed: a.seed,
    };
    let gt = generate_dataset(&spec).usage()?;
    create_dir(&a.out)?;
    write_file(&a.out.join(GT_FILE), &ground_truth_to_json(&gt))?;
    write_file(&a.out.join(SCENES_FILE), &scene_tags_json(&gt))?;
    if a.pgm {
        let dir = a.out.join("images");
        create_dir(&dir)?;
        for info in gt.images() {
            let name = info
                .file_name
                .clone()
                .unwrap_or_else(|| format!("{}.pgm", info.id));
            let image = scene_image(&gt, info.id).runtime()?;
            write_pgm(&image, &dir.join(name)).runtime()?;
        }
    }
    println!(
        "{} images, {} ships -> {}",
        gt.num_images(),
        gt.num_instances(),
        a.out.display()
    );
    Ok(Outcome::Success)
}

fn settings(c: &ConfigArgs) -> Result<Settings, Failure> {
    let mut s = Settings::load(c.config.as_deref(), &c.set).usage()?;
    if c.gt.is_some() {
        s.gt.clone_from(&c.gt);
    }
    if c.scenes.is_some() {
        s.scenes.clone_from(&c.scenes);
    }
    if c.out.is_some() {
        s.out.clone_from(&c.out);
    }
    if c.run_id.is_some() {
        s.run_id.clone_from(&c.run_id);
    }
    if let Some(j) = c.jobs {
        s.jobs = j;
    }
    Ok(s)
}

fn require<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    v.as_deref()
        .ok_or_else(|| {
            anyhow!(
                "configuration key `{key}` (or --{}) is required",
                key.replace('_', "-")
            )
        })
        .usage()
}

fn load_gt(gt: &Path, scenes: Option<&Path>) -> Result<GroundTruth, Failure> {
    let gt = load_ground_truth(gt, scenes).usage()?;
    for w in gt.warnings() {
        log::warn!("{w}");
    }
    Ok(gt)
}

fn run_id(s: &Settings, out: &Path) -> String {
    s.run_id.clone().unwrap_or_else(|| {
        out.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn meta(s: &Settings, out: &Path, sources: RunSources) -> Result<RunMeta, Failure> {
    Ok(RunMeta {
        run_id: run_id(s, out),
        method: s.method.clone(),
        supervision: s.supervision.clone(),
        config: s.snapshot(),
        sources,
        aggregate: s.aggregate(),
        curve_grid: s.curve_grid().usage()?,
    })
}

fn display(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn run(a: &RunArgs) -> Result<Outcome, Failure> {
    let mut s = settings(&a.config)?;
    if a.images_dir.is_some() {
        s.images_dir.clone_from(&a.images_dir);
    }
    let out = require(&s.out, "out")?.to_path_buf();
    let gt_path = require(&s.gt, "gt")?.to_path_buf();
    let (det_desc, seg_desc) = s.backends().usage()?;
    let pipeline = s.pipeline();
    pipeline.validate().map_err(pipeline_failure)?;
    let opts = s.eval_options().usage()?;
    let sources = RunSources {
        ground_truth: gt_path.display().to_string(),
        scene_tags: display(&s.scenes),
        predictions: PREDICTIONS_FILE.into(),
    };
    let meta = meta(&s, &out, sources)?;

    let gt = load_gt(&gt_path, s.scenes.as_deref())?;
    let (detector, segmenter) =
        build_backends(&det_desc, &seg_desc, &gt).map_err(pipeline_failure)?;
    let clock = MonotonicClock::default();
    let output = run_pipeline(
        &gt,
        detector.as_ref(),
        segmenter.as_ref(),
        &pipeline,
        &clock,
        s.images_dir.as_deref(),
    )
    .map_err(pipeline_failure)?;
    drop((detector, segmenter));

    create_dir(&out)?;
    write_file(
        &out.join(PREDICTIONS_FILE),
        &predictions_to_json(&output.predictions),
    )?;
    let evaluation = evaluate(&gt, &output.predictions, &opts).runtime()?;
    let mut record = RunRecord::build(
        meta,
        &gt,
        evaluation,
        output.failures.clone(),
        output.segmentation_failures,
    )
    .runtime()?;
    record.timing = summarize_timing(&output.timings, &s.timing_ships).ok();
    record.created_at = Some(now());
    emit(&record, &out, EmitFormats::default()).map_err(report_failure)?;
    print!("{}", render_table_csv(&record.scene_reports));

    if output.is_partial() {
        for f in &output.failures {
            eprintln!("skipped image {} ({}): {}", f.image_id, f.stage, f.message);
        }
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Success)
}

fn eval(a: &EvalArgs) -> Result<Outcome, Failure> {
    let mut s = settings(&a.config)?;
    if a.predictions.is_some() {
        s.predictions.clone_from(&a.predictions);
    }
    let out = require(&s.out, "out")?.to_path_buf();
    let gt_path = require(&s.gt, "gt")?.to_path_buf();
    let preds_path = require(&s.predictions, "predictions")?.to_path_buf();
    let opts = s.eval_options().usage()?;
    let sources = RunSources {
        ground_truth: gt_path.display().to_string(),
        scene_tags: display(&s.scenes),
        predictions: preds_path.display().to_string(),
    };
    let meta = meta(&s, &out, sources)?;

    let gt = load_gt(&gt_path, s.scenes.as_deref())?;
    let preds = load_predictions(&preds_path, &gt).usage()?;
    let evaluation = evaluate(&gt, &preds, &opts).runtime()?;
    let mut record = RunRecord::build(meta, &gt, evaluation, Vec::new(), 0).runtime()?;
    record.created_at = Some(now());
    emit(&record, &out, EmitFormats::default()).map_err(report_failure)?;
    print!("{}", render_table_csv(&record.scene_reports));
    Ok(Outcome::Success)
}

fn run_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// A recorded source path: relative to the run directory if it exists
/// there, otherwise as recorded.
fn resolve(dir: &Path, recorded: &str) -> PathBuf {
    let inside = dir.join(recorded);
    if inside.exists() {
        inside
    } else {
        PathBuf::from(recorded)
    }
}

fn sweep(a: &SweepArgs) -> Result<Outcome, Failure> {
    let record = load_run_record(&a.run).map_err(load_failure)?;
    let dir = run_dir(&a.run);
    let mut s = Settings::from_snapshot(record.config.clone()).usage()?;
    if !a.radii.is_empty() {
        s.relaxed_radii.clone_from(&a.radii);
    }
    if let Some(step) = a.grid_step {
        s.curve_step = step;
    }
    s.jobs = a.jobs;
    let opts = s.eval_options().usage()?;

    let gt_path = resolve(&dir, &record.sources.ground_truth);
    let scenes = record
        .sources
        .scene_tags
        .as_deref()
        .map(|p| resolve(&dir, p));
    let preds_path = resolve(&dir, &record.sources.predictions);
    for p in [Some(&gt_path), scenes.as_ref(), Some(&preds_path)]
        .into_iter()
        .flatten()
    {
        if !p.is_file() {
            return Err(Failure::Usage(anyhow!(
                "cannot re-derive mask pairs: {} not found",
                p.display()
            )));
        }
    }
    let gt = load_gt(&gt_path, scenes.as_deref())?;
    if gt.digest() != record.gt_digest {
        return Err(Failure::Usage(anyhow!(
            "{} no longer matches the ground truth of run {}",
            gt_path.display(),
            record.run_id
        )));
    }
    let preds = load_predictions(&preds_path, &gt).usage()?;
    let evaluation = evaluate(&gt, &preds, &opts).runtime()?;
    let meta = RunMeta {
        run_id: record.run_id.clone(),
        method: record.method.clone(),
        supervision: record.supervision.clone(),
        config: s.snapshot(),
        sources: record.sources.clone(),
        aggregate: record.aggregate,
        curve_grid: s.curve_grid().usage()?,
    };
    let swept = RunRecord::build(
        meta,
        &gt,
        evaluation,
        record.failures.clone(),
        record.segmentation_failures,
    )
    .runtime()?;
    let out = a.out.clone().unwrap_or(dir);
    let formats = EmitFormats {
        table: false,
        json: false,
        curves: true,
    };
    for path in emit(&swept, &out, formats).map_err(report_failure)? {
        println!("{}", path.display());
    }
    Ok(Outcome::Success)
}

fn report(a: &ReportArgs) -> Result<Outcome, Failure> {
    let mut record = load_run_record(&a.run).map_err(load_failure)?;
    if a.include_unmatched && !record.aggregate.include_unmatched {
        record.aggregate.include_unmatched = true;
        record.scene_reports = scene_reports(&record.instances, record.aggregate).runtime()?;
    }
    print!("{}", render_table_csv(&record.scene_reports));
    if let Some(map) = &record.map {
        log::info!("mAP@[0.50:0.95] = {:.3}", map.map);
    }
    if let Some(out) = &a.out {
        emit(&record, out, EmitFormats::default()).map_err(report_failure)?;
    }
    Ok(Outcome::Success)
}

fn compare_runs(a: &CompareArgs) -> Result<Outcome, Failure> {
    let ra = load_run_record(&a.a).map_err(load_failure)?;
    let rb = load_run_record(&a.b).map_err(load_failure)?;
    let csv = compare(&ra, &rb).map_err(report_failure)?.to_csv();
    match &a.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(Outcome::Success)
}

/// Scene tags as written by `synth`, keyed by image id.
pub fn scene_tags_json(gt: &GroundTruth) -> String {
    let mut s = serde_json::to_string_pretty(gt.scenes()).expect("scene map serializes");
    s.push('\n');
    s
}
