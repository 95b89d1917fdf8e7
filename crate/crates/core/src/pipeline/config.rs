use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::baseline_flow::FlowParams;
use crate::depth::DEFAULT_EPSILON_PX;
use crate::egomotion::EgomotionConfig;
use crate::flow_io::SelectionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    /// `.flo` files next to the frames (or in `flow_dir`), one per consecutive
    /// pair, named after the first frame.
    External,
    Baseline,
}

impl FromStr for FlowSource {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "external" => Ok(Self::External),
            "baseline" => Ok(Self::Baseline),
            other => Err(PipelineError::ConfigInvalid(format!(
                "unknown flow source {other:?} (expected external or baseline)"
            ))),
        }
    }
}

/// Dataset-specific preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Dashcam video resized to 224 x 416 (rows x cols).
    Citydriving,
    /// Resized to 352 x 1212.
    Kitti,
    /// Bottom 20% (car hood) discarded, then resized to 384 x 992.
    Cityscapes,
}

impl Preset {
    /// `(width, height)` of the working resolution.
    pub fn resize(self) -> (usize, usize) {
        match self {
            Preset::Citydriving => (416, 224),
            Preset::Kitti => (1212, 352),
            Preset::Cityscapes => (992, 384),
        }
    }

    pub fn bottom_crop_fraction(self) -> f64 {
        match self {
            Preset::Cityscapes => 0.2,
            Preset::Citydriving | Preset::Kitti => 0.0,
        }
    }
}

impl FromStr for Preset {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "citydriving" => Ok(Self::Citydriving),
            "kitti" => Ok(Self::Kitti),
            "cityscapes" => Ok(Self::Cityscapes),
            other => Err(PipelineError::ConfigInvalid(format!(
                "unknown preset {other:?} (expected citydriving, kitti or cityscapes)"
            ))),
        }
    }
}

/// Native-resolution calibration; missing values use focal = width and the
/// image center.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsOverride {
    pub focal: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub flow_source: FlowSource,
    pub flow_dir: Option<PathBuf>,
    pub intrinsics: IntrinsicsOverride,
    /// Working `(width, height)`; `None` keeps the cropped native size.
    pub resize: Option<(usize, usize)>,
    pub bottom_crop_fraction: f64,
    pub selection: SelectionConfig,
    pub egomotion: EgomotionConfig,
    pub flow_params: FlowParams,
    /// Focus-of-expansion exclusion in working-resolution pixels.
    pub epsilon_px: f64,
    pub worker_count: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            flow_source: FlowSource::External,
            flow_dir: None,
            intrinsics: IntrinsicsOverride::default(),
            resize: None,
            bottom_crop_fraction: 0.0,
            selection: SelectionConfig::default(),
            egomotion: EgomotionConfig::default(),
            flow_params: FlowParams::default(),
            epsilon_px: DEFAULT_EPSILON_PX,
            worker_count: 1,
            seed: 0,
        }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        self.resize = Some(preset.resize());
        self.bottom_crop_fraction = preset.bottom_crop_fraction();
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        if self.input_dir.as_os_str().is_empty() {
            return bad("input_dir is required".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is required".into());
        }
        if !(0.0..1.0).contains(&self.bottom_crop_fraction) {
            return bad(format!(
                "bottom_crop_fraction {} must lie in [0, 1)",
                self.bottom_crop_fraction
            ));
        }
        if let Some((w, h)) = self.resize {
            if w == 0 || h == 0 {
                return bad("resize dimensions must be positive".into());
            }
        }
        if let Some(f) = self.intrinsics.focal {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("focal {f} must be positive"));
            }
        }
        if self.worker_count == 0 {
            return bad("worker_count must be at least 1".into());
        }
        if !(self.epsilon_px >= 0.0 && self.epsilon_px.is_finite()) {
            return bad("epsilon_px must be non-negative".into());
        }
        self.selection
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.egomotion
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        if self.flow_source == FlowSource::Baseline {
            self.flow_params
                .validate()
                .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Reads a flat TOML document; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>, overrides: &ConfigOverrides) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, overrides)
    }

    pub fn from_toml_str(text: &str, base: &Path, overrides: &ConfigOverrides) -> Result<Self, PipelineError> {
        let doc: ConfigDocument =
            toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.message().to_owned()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let mut cfg = Self::new(
            doc.input_dir.map(resolve).unwrap_or_default(),
            doc.output_dir.map(resolve).unwrap_or_default(),
        );
        if let Some(preset) = overrides.preset.or(doc.preset) {
            cfg.apply_preset(preset);
        }
        if let Some(s) = doc.flow_source {
            cfg.flow_source = s;
        }
        cfg.flow_dir = doc.flow_dir.map(resolve);
        cfg.intrinsics = IntrinsicsOverride {
            focal: doc.focal,
            cx: doc.cx,
            cy: doc.cy,
        };
        match (doc.resize_width, doc.resize_height) {
            (Some(w), Some(h)) => cfg.resize = Some((w, h)),
            (None, None) => {}
            _ => {
                return Err(PipelineError::ConfigInvalid(
                    "resize_width and resize_height must be given together".into(),
                ))
            }
        }
        set(&mut cfg.bottom_crop_fraction, doc.bottom_crop_fraction);
        set(&mut cfg.selection.lo_px, doc.motion_lo_px);
        set(&mut cfg.selection.hi_px, doc.motion_hi_px);
        set(&mut cfg.selection.dedup_gap, doc.dedup_gap);
        set(&mut cfg.epsilon_px, doc.epsilon_px);
        set(&mut cfg.worker_count, doc.worker_count);
        set(&mut cfg.seed, doc.seed);

        let e = &mut cfg.egomotion;
        set(&mut e.mag_floor_px, doc.mag_floor_px);
        set(&mut e.min_support_fraction, doc.min_support_fraction);
        set(&mut e.inlier_angle_deg, doc.inlier_angle_deg);
        set(&mut e.omega_max, doc.omega_max);
        set(&mut e.omega_grid, doc.omega_grid);
        set(&mut e.max_evals, doc.max_evals);
        set(&mut e.objective_tol, doc.objective_tol);
        set(&mut e.max_search_pixels, doc.max_search_pixels);
        set(&mut e.robust_refits, doc.robust_refits);

        let f = &mut cfg.flow_params;
        set(&mut f.pyramid_levels, doc.pyramid_levels);
        set(&mut f.scale_per_level, doc.scale_per_level);
        set(&mut f.iterations_per_level, doc.iterations_per_level);
        set(&mut f.smoothness_weight, doc.smoothness_weight);

        overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Command-line flags that take precedence over the config document.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub flow_source: Option<FlowSource>,
    pub preset: Option<Preset>,
    pub worker_count: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(s) = self.flow_source {
            cfg.flow_source = s;
        }
        if let Some(w) = self.worker_count {
            cfg.worker_count = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
    }
}

/// Flat key-value form of [`PipelineConfig`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    input_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    flow_source: Option<FlowSource>,
    flow_dir: Option<PathBuf>,
    preset: Option<Preset>,
    focal: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    resize_width: Option<usize>,
    resize_height: Option<usize>,
    bottom_crop_fraction: Option<f64>,
    motion_lo_px: Option<f64>,
    motion_hi_px: Option<f64>,
    dedup_gap: Option<usize>,
    epsilon_px: Option<f64>,
    worker_count: Option<usize>,
    seed: Option<u64>,
    mag_floor_px: Option<f64>,
    min_support_fraction: Option<f64>,
    inlier_angle_deg: Option<f64>,
    omega_max: Option<f64>,
    omega_grid: Option<usize>,
    max_evals: Option<usize>,
    objective_tol: Option<f64>,
    max_search_pixels: Option<usize>,
    robust_refits: Option<usize>,
    pyramid_levels: Option<usize>,
    scale_per_level: Option<f64>,
    iterations_per_level: Option<usize>,
    smoothness_weight: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, o: &ConfigOverrides) -> Result<PipelineConfig, PipelineError> {
        PipelineConfig::from_toml_str(text, Path::new("/data"), o)
    }

    #[test]
    fn presets_carry_preprocessing_constants() {
        let cfg = parse("input_dir = \"in\"\noutput_dir = \"out\"\npreset = \"cityscapes\"\n", &Default::default()).unwrap();
        assert_eq!(cfg.resize, Some((992, 384)));
        assert_eq!(cfg.bottom_crop_fraction, 0.2);
        assert_eq!(cfg.input_dir, PathBuf::from("/data/in"));
        assert_eq!(Preset::Citydriving.resize(), (416, 224));
        assert_eq!(Preset::Kitti.resize(), (1212, 352));
    }

    #[test]
    fn explicit_keys_beat_preset_and_flags_beat_file() {
        let o = ConfigOverrides {
            preset: Some(Preset::Kitti),
            worker_count: Some(4),
            flow_source: Some(FlowSource::Baseline),
            ..Default::default()
        };
        let cfg = parse(
            "input_dir = \"/in\"\noutput_dir = \"o\"\npreset = \"cityscapes\"\nresize_width = 64\nresize_height = 32\nworker_count = 2\n",
            &o,
        )
        .unwrap();
        assert_eq!(cfg.resize, Some((64, 32)));
        assert_eq!(cfg.bottom_crop_fraction, 0.0);
        assert_eq!(cfg.worker_count, 4);
        assert_eq!(cfg.flow_source, FlowSource::Baseline);
        assert_eq!(cfg.input_dir, PathBuf::from("/in"));
    }

    #[test]
    fn invalid_documents() {
        let d = ConfigOverrides::default();
        for text in [
            "input_dir = \"i\"\noutput_dir = \"o\"\nbottom_crop_fraction = 1.0\n",
            "input_dir = \"i\"\noutput_dir = \"o\"\nunknown_key = 3\n",
            "input_dir = \"i\"\noutput_dir = \"o\"\nresize_width = 10\n",
            "input_dir = \"i\"\noutput_dir = \"o\"\ndedup_gap = 1\n",
            "input_dir = \"i\"\noutput_dir = \"o\"\nflow_source = \"magic\"\n",
            "output_dir = \"o\"\n",
        ] {
            assert!(matches!(parse(text, &d), Err(PipelineError::ConfigInvalid(_))), "{text}");
        }
    }
}
