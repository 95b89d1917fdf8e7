use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowSource, PipelineConfig, PipelineError};
use crate::baseline_flow::estimate_flow;
use crate::depth::{recover_depth, to_relative};
use crate::egomotion::{estimate_rotation, EgomotionError};
use crate::flow_io::{
    read_flow_file, select_pairs, write_atomic, write_depth_outputs, write_pair_manifest,
    EstimateRecord, FlowIoError, Intrinsics, MotionField, PairManifest, PairStatus,
};
use crate::imageops::{crop_flow_rows, kept_rows, resize_flow, GrayFrame};

pub const PAIR_MANIFEST: &str = "pairs.jsonl";
pub const DATASET_MANIFEST: &str = "dataset.jsonl";
pub const RUN_SUMMARY: &str = "summary.json";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "ppm", "pgm"];

/// Image files directly inside `dir`, sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| PipelineError::InputEmpty(format!("{}: {e}", dir.display())))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

/// Per-status tallies. `too_slow + too_fast + duplicate + flow_failed +
/// accepted == pairs`, and every accepted pair ends up in exactly one of
/// `labeled`, `insufficient_translation`, `no_convergence` or
/// `processing_failed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub pairs: usize,
    pub accepted: usize,
    pub too_slow: usize,
    pub too_fast: usize,
    pub duplicate: usize,
    pub flow_failed: usize,
    pub labeled: usize,
    pub insufficient_translation: usize,
    pub no_convergence: usize,
    pub processing_failed: usize,
}

/// One line of the training manifest. Paths are relative to the output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_path: PathBuf,
    pub relative_depth_path: PathBuf,
    pub t_dir: [f64; 3],
    pub omega: [f64; 3],
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub counts: RunCounts,
    pub manifest: PairManifest,
    pub records: Vec<DatasetRecord>,
    pub output_dir: PathBuf,
}

/// Native and working-resolution camera for one frame size.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    native: (usize, usize),
    rows: usize,
    work: Intrinsics,
}

impl Geometry {
    fn new(cfg: &PipelineConfig, width: usize, height: usize) -> Self {
        let mut k = Intrinsics::from_size(width, height);
        if let Some(f) = cfg.intrinsics.focal {
            k.focal = f;
            k.focal_y = f;
        }
        k.cx = cfg.intrinsics.cx.unwrap_or(k.cx);
        k.cy = cfg.intrinsics.cy.unwrap_or(k.cy);
        let rows = kept_rows(height, cfg.bottom_crop_fraction);
        let mut work = k.crop_rows(rows);
        if let Some((w, h)) = cfg.resize {
            work = work.resized(w, h);
        }
        Self {
            native: (width, height),
            rows,
            work,
        }
    }

    fn frame_to_work(&self, frame: &GrayFrame) -> GrayFrame {
        let cropped = frame.crop_rows(self.rows);
        if (cropped.width, cropped.height) == (self.work.width, self.work.height) {
            cropped
        } else {
            cropped.resize(self.work.width, self.work.height)
        }
    }

    fn flow_to_work(&self, flow: &MotionField) -> MotionField {
        let cropped = crop_flow_rows(flow, self.rows);
        if (cropped.width, cropped.height) == (self.work.width, self.work.height) {
            cropped
        } else {
            resize_flow(&cropped, self.work.width, self.work.height)
        }
    }

    /// Working-resolution pixel flow expressed in native pixels.
    fn work_to_native_units(&self, flow: &MotionField) -> MotionField {
        let sx = self.native.0 as f64 / self.work.width as f64;
        let sy = self.rows as f64 / self.work.height as f64;
        let mut out = flow.clone();
        out.u.iter_mut().for_each(|u| *u *= sx);
        out.v.iter_mut().for_each(|v| *v *= sy);
        out
    }
}

fn frame_size(path: &Path) -> Result<(usize, usize), String> {
    image::image_dimensions(path)
        .map(|(w, h)| (w as usize, h as usize))
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn flow_path(cfg: &PipelineConfig, frame_a: &Path) -> PathBuf {
    let dir = cfg
        .flow_dir
        .clone()
        .unwrap_or_else(|| cfg.input_dir.clone());
    let stem = frame_a.file_stem().unwrap_or_default();
    dir.join(stem).with_extension("flo")
}

fn read_external(cfg: &PipelineConfig, a: &Path, w: usize, h: usize) -> Result<MotionField, String> {
    let path = flow_path(cfg, a);
    let flow = read_flow_file(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if (flow.width, flow.height) != (w, h) {
        return Err(format!(
            "{} is {}x{} but the frame is {w}x{h}",
            path.display(),
            flow.width,
            flow.height
        ));
    }
    Ok(flow)
}

/// Pixel flow for one pair at working resolution.
fn pair_flow(cfg: &PipelineConfig, a: &Path, b: &Path) -> Result<(Geometry, MotionField), String> {
    let (w, h) = frame_size(a)?;
    let geo = Geometry::new(cfg, w, h);
    match cfg.flow_source {
        FlowSource::External => {
            let flow = read_external(cfg, a, w, h)?;
            Ok((geo, geo.flow_to_work(&flow)))
        }
        FlowSource::Baseline => {
            let load = |p: &Path| GrayFrame::load(p).map_err(|e| format!("{}: {e}", p.display()));
            let (fa, fb) = (load(a)?, load(b)?);
            if (fb.width, fb.height) != (w, h) {
                return Err(format!("{} and {} differ in size", a.display(), b.display()));
            }
            let flow = estimate_flow(&geo.frame_to_work(&fa), &geo.frame_to_work(&fb), &cfg.flow_params)
                .map_err(|e| e.to_string())?;
            Ok((geo, flow))
        }
    }
}

/// Median flow magnitude of a pair in native pixels.
fn pair_stat(cfg: &PipelineConfig, a: &Path, b: &Path) -> Result<f64, String> {
    let native = match cfg.flow_source {
        FlowSource::External => {
            let (w, h) = frame_size(a)?;
            let flow = read_external(cfg, a, w, h)?;
            crop_flow_rows(&flow, kept_rows(h, cfg.bottom_crop_fraction))
        }
        FlowSource::Baseline => {
            let (geo, flow) = pair_flow(cfg, a, b)?;
            geo.work_to_native_units(&flow)
        }
    };
    native
        .median_magnitude()
        .ok_or_else(|| "flow has no valid pixels".to_owned())
}

enum PairResult {
    Labeled(EstimateRecord, DatasetRecord),
    InsufficientTranslation(String),
    NoConvergence(EstimateRecord),
    Failed(String),
}

fn stem_of(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn label_pair(cfg: &PipelineConfig, a: &Path, b: &Path) -> PairResult {
    let (geo, flow) = match pair_flow(cfg, a, b) {
        Ok(v) => v,
        Err(e) => return PairResult::Failed(e),
    };
    let k = geo.work;
    let mut ego = cfg.egomotion;
    ego.seed = cfg.seed;
    let est = match estimate_rotation(&flow.to_normalized(&k), &k, &ego) {
        Ok(est) => est,
        Err(EgomotionError::InsufficientTranslation(why)) => return PairResult::InsufficientTranslation(why),
        Err(EgomotionError::NoConvergence(best)) => return PairResult::NoConvergence(best.record()),
        Err(e) => return PairResult::Failed(e.to_string()),
    };
    let rel = recover_depth(&est.trans_field, &est.t_dir, &k, &est.inlier, cfg.epsilon_px / k.focal)
        .and_then(|d| to_relative(&d));
    let rel = match rel {
        Ok(r) => r,
        Err(e) => return PairResult::Failed(e.to_string()),
    };

    let stem = stem_of(a);
    let depth_rel = Path::new("depth").join(&stem);
    let image_rel = Path::new("images").join(&stem).with_extension("png");
    let written = write_depth_outputs(&rel, cfg.output_dir.join(&depth_rel))
        .map_err(|e| e.to_string())
        .and_then(|_| write_work_image(a, &geo, &cfg.output_dir.join(&image_rel)));
    if let Err(e) = written {
        return PairResult::Failed(e);
    }
    PairResult::Labeled(
        est.record(),
        DatasetRecord {
            image_path: image_rel,
            relative_depth_path: depth_rel.with_extension("png"),
            t_dir: [est.t_dir.x, est.t_dir.y, est.t_dir.z],
            omega: [est.omega.x, est.omega.y, est.omega.z],
            n_valid: rel.valid_count(),
        },
    )
}

/// Copy of the first frame at working resolution, for pairing with its label.
fn write_work_image(src: &Path, geo: &Geometry, dst: &Path) -> Result<(), String> {
    let img = image::open(src).map_err(|e| format!("{}: {e}", src.display()))?.to_rgb8();
    let cropped = image::imageops::crop_imm(&img, 0, 0, img.width(), geo.rows as u32).to_image();
    let (w, h) = (geo.work.width as u32, geo.work.height as u32);
    let out = if (cropped.width(), cropped.height()) == (w, h) {
        cropped
    } else {
        image::imageops::resize(&cropped, w, h, image::imageops::FilterType::Triangle)
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    out.write_to(&mut bytes, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    write_atomic(dst, &bytes.into_inner()).map_err(|e| e.to_string())
}

/// Selects pairs, labels the accepted ones, and writes the depth maps, the
/// pair manifest, the dataset manifest and a summary under `output_dir`.
/// Output is identical for every `worker_count`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let frames = list_frames(&cfg.input_dir)?;
    if frames.len() < 2 {
        return Err(PipelineError::InputEmpty(format!(
            "{} holds {} frame(s); at least two are needed",
            cfg.input_dir.display(),
            frames.len()
        )));
    }
    if cfg.flow_source == FlowSource::External && cfg.flow_dir.is_none() {
        info!("reading flow from {}", cfg.input_dir.display());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;

    for sub in ["depth", "images"] {
        fs::create_dir_all(cfg.output_dir.join(sub))?;
    }

    let stats: Vec<Result<f64, String>> = pool.install(|| {
        frames
            .par_windows(2)
            .map(|w| pair_stat(cfg, &w[0], &w[1]))
            .collect()
    });
    let medians: Vec<Option<f64>> = stats.iter().map(|s| s.as_ref().ok().copied()).collect();
    let mut manifest = select_pairs(&frames, &medians, &cfg.selection)
        .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
    for (entry, stat) in manifest.entries.iter_mut().zip(&stats) {
        if cfg.flow_source == FlowSource::External {
            entry.flow_path = Some(flow_path(cfg, &entry.frame_a));
        }
        if let Err(e) = stat {
            warn!("{}: {e}", entry.frame_a.display());
            entry.outcome = Some(format!("flow unavailable: {e}"));
        }
    }

    let accepted: Vec<usize> = manifest.accepted().map(|(i, _)| i).collect();
    let results: Vec<PairResult> = pool.install(|| {
        accepted
            .par_iter()
            .map(|&i| {
                let e = &manifest.entries[i];
                label_pair(cfg, &e.frame_a, &e.frame_b)
            })
            .collect()
    });

    let mut counts = RunCounts {
        pairs: manifest.entries.len(),
        accepted: accepted.len(),
        too_slow: manifest.count(PairStatus::TooSlow),
        too_fast: manifest.count(PairStatus::TooFast),
        duplicate: manifest.count(PairStatus::Duplicate),
        flow_failed: manifest.count(PairStatus::Failed),
        ..Default::default()
    };
    let mut records = Vec::new();
    for (&i, result) in accepted.iter().zip(results) {
        let entry = &mut manifest.entries[i];
        match result {
            PairResult::Labeled(est, rec) => {
                counts.labeled += 1;
                entry.outcome = Some("labeled".into());
                entry.estimate = Some(est);
                records.push(rec);
            }
            PairResult::InsufficientTranslation(why) => {
                counts.insufficient_translation += 1;
                entry.outcome = Some(format!("insufficient_translation: {why}"));
            }
            PairResult::NoConvergence(best) => {
                counts.no_convergence += 1;
                entry.outcome = Some("no_convergence".into());
                entry.estimate = Some(best);
            }
            PairResult::Failed(why) => {
                counts.processing_failed += 1;
                warn!("{}: {why}", entry.frame_a.display());
                entry.outcome = Some(format!("failed: {why}"));
            }
        }
    }

    write_pair_manifest(&manifest, cfg.output_dir.join(PAIR_MANIFEST))?;
    let summary = RunSummary {
        counts,
        manifest,
        records,
        output_dir: cfg.output_dir.clone(),
    };
    make_dataset_manifest(&summary, cfg.output_dir.join(DATASET_MANIFEST))?;
    let mut json = serde_json::to_vec_pretty(&summary.counts).map_err(FlowIoError::from)?;
    json.push(b'\n');
    write_atomic(&cfg.output_dir.join(RUN_SUMMARY), &json)?;
    info!(
        "{} pairs, {} accepted, {} labeled",
        counts.pairs, counts.accepted, counts.labeled
    );
    Ok(summary)
}

/// Writes one JSON line per labeled pair and returns the number written.
pub fn make_dataset_manifest(summary: &RunSummary, path: impl AsRef<Path>) -> Result<usize, PipelineError> {
    let mut out = Vec::new();
    for rec in &summary.records {
        serde_json::to_writer(&mut out, rec).map_err(FlowIoError::from)?;
        out.push(b'\n');
    }
    write_atomic(path.as_ref(), &out)?;
    Ok(summary.records.len())
}
