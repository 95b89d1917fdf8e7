//! `egodepth`: label frames with relative depth, evaluate labels, and render
//! synthetic test sequences.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration or
//! arguments, 3 empty or unreadable input, 4 a run that produced no labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use egodepth_core::depth::to_relative;
use egodepth_core::eval::{
    eigen_metrics, l1_relative, ordinal_agreement, EvalReport, DEFAULT_CAP_M, DEFAULT_MIN_M,
    DEFAULT_ORDINAL_MARGIN, DEFAULT_ORDINAL_PAIRS,
};
use egodepth_core::flow_io::{read_depth_pfm, DepthMap};
use egodepth_core::pipeline::{run_pipeline, ConfigOverrides, PipelineConfig, PipelineError};
use egodepth_core::synth::{write_sequence, SceneError, SceneSpec};

#[derive(Parser)]
#[command(name = "egodepth", version, about = "Relative-depth labels from egomotion flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select frame pairs, estimate egomotion and write relative-depth labels.
    Run(RunArgs),
    /// Compare predicted depth maps against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic sequence with exact flow and depth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// external or baseline.
    #[arg(long)]
    flow_source: Option<String>,
    /// citydriving, kitti or cityscapes.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted `.pfm` depth maps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth `.pfm` depth maps with matching names.
    #[arg(long)]
    gt: PathBuf,
    /// Rescale each prediction by the ratio of ground-truth to predicted medians.
    #[arg(long)]
    median_scale: bool,
    #[arg(long, default_value_t = DEFAULT_CAP_M)]
    cap: f64,
    #[arg(long, default_value_t = DEFAULT_ORDINAL_MARGIN)]
    margin: f64,
    #[arg(long, default_value_t = DEFAULT_ORDINAL_PAIRS)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the pooled report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML scene description.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the frame count in the scene file.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure tagged with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::InputEmpty(_) => 3,
            PipelineError::Output(_) => 1,
        };
        Self::new(code, e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let overrides = ConfigOverrides {
        flow_source: a.flow_source.as_deref().map(str::parse).transpose()?,
        preset: a.preset.as_deref().map(str::parse).transpose()?,
        worker_count: a.workers,
        seed: a.seed,
        output_dir: a.output,
    };
    let cfg = PipelineConfig::load(&a.config, &overrides)?;
    let summary = run_pipeline(&cfg)?;
    let c = summary.counts;
    println!("pairs            {}", c.pairs);
    println!("accepted         {}", c.accepted);
    println!("too slow         {}", c.too_slow);
    println!("too fast         {}", c.too_fast);
    println!("duplicate        {}", c.duplicate);
    println!("flow failed      {}", c.flow_failed);
    println!("labeled          {}", c.labeled);
    println!("no translation   {}", c.insufficient_translation);
    println!("no convergence   {}", c.no_convergence);
    println!("failed           {}", c.processing_failed);
    println!("output           {}", summary.output_dir.display());
    if c.labeled == 0 {
        return Err(Failure::new(4, anyhow!("no pair produced a label")));
    }
    Ok(())
}

fn pfm_maps(dir: &Path) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(|e| Failure::new(3, e))?;
    let mut maps = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::new(3, e))?.path();
        if path.extension().is_some_and(|e| e == "pfm") {
            if let Some(stem) = path.file_stem() {
                maps.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    Ok(maps)
}

fn median_valid(d: &DepthMap) -> Option<f64> {
    let mut v: Vec<f64> = (0..d.len()).filter(|&i| d.valid[i]).map(|i| d.z[i]).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

fn evaluate_one(pred: &DepthMap, gt: &DepthMap, a: &EvalArgs) -> Result<EvalReport> {
    let pred = match (a.median_scale, median_valid(pred), median_valid(gt)) {
        (true, Some(mp), Some(mg)) if mp > 0.0 => pred.map(|z| z * mg / mp),
        _ => pred.clone(),
    };
    let mut report = eigen_metrics(&pred, gt, DEFAULT_MIN_M, a.cap)?;
    let pred_rel = to_relative(&pred)?;
    report.ordinal_agreement = ordinal_agreement(&pred_rel, gt, a.pairs, a.margin, a.seed).ok();
    report.l1_relative = l1_relative(&pred_rel, &to_relative(gt)?).ok();
    Ok(report)
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if !(a.cap > DEFAULT_MIN_M) || !(a.margin >= 0.0) {
        return Err(Failure::new(2, anyhow!("cap must exceed {DEFAULT_MIN_M} and margin must be non-negative")));
    }
    let preds = pfm_maps(&a.pred)?;
    let gts = pfm_maps(&a.gt)?;
    let mut reports = Vec::new();
    for (name, gt_path) in &gts {
        let Some(pred_path) = preds.get(name) else {
            log::warn!("no prediction for {name}");
            continue;
        };
        let gt = read_depth_pfm(gt_path).with_context(|| gt_path.display().to_string())?;
        let pred = read_depth_pfm(pred_path).with_context(|| pred_path.display().to_string())?;
        let report = evaluate_one(&pred, &gt, &a).with_context(|| name.clone())?;
        reports.push(report);
    }
    let Some(pooled) = EvalReport::pooled(&reports) else {
        return Err(Failure::new(3, anyhow!("no prediction matched a ground-truth map")));
    };
    if a.json {
        println!("{}", serde_json::to_string(&pooled).context("encoding report")?);
    } else {
        println!("{pooled}");
        println!("maps {}", reports.len());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let scene_err = |e: SceneError| {
        let code = match e {
            SceneError::Invalid(_) | SceneError::Parse(_) | SceneError::UncoveredPixel { .. } => 2,
            SceneError::Io(_) | SceneError::Artifact(_) => 1,
        };
        Failure::new(code, e)
    };
    let (scene, mut opts) = SceneSpec::load(&a.scene).map_err(scene_err)?;
    if let Some(n) = a.frames {
        opts.frames = n;
    }
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    if opts.frames < 2 {
        return Err(Failure::new(2, anyhow!("a sequence needs at least two frames")));
    }
    let paths = write_sequence(&scene, &opts, &a.output).map_err(scene_err)?;
    println!(
        "wrote {} frames, {} flow fields, {} depth maps to {}",
        paths.frames.len(),
        paths.flows.len(),
        paths.ground_truth.len(),
        a.output.display()
    );
    Ok(())
}
