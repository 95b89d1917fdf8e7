//! Closed-form scenes: exact depth and instantaneous motion fields for a
//! camera translating with `speed * t_dir` and rotating with `omega`.
//!
//! Depth at a pixel is the nearest primitive along its ray. The translational
//! flow is `((x W - U) / Z, (y W - V) / Z)`, so forward motion (`W > 0`)
//! expands outward from the image center.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::egomotion::rotational_flow;
use crate::flow_io::{self, DepthMap, FlowIoError, Intrinsics, MotionField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMotion {
    pub t_dir: Vector3<f64>,
    pub speed: f64,
    pub omega: Vector3<f64>,
}

impl CameraMotion {
    /// Normalizes `t` and stores its length as the speed.
    pub fn from_velocity(t: Vector3<f64>, omega: Vector3<f64>) -> Self {
        let speed = t.norm();
        let t_dir = if speed > 0.0 { t / speed } else { Vector3::z() };
        Self {
            t_dir,
            speed,
            omega,
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.t_dir * self.speed
    }

    pub fn is_valid(&self) -> bool {
        (self.t_dir.norm() - 1.0).abs() <= 1e-9
            && self.speed >= 0.0
            && self.speed.is_finite()
            && self.omega.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Plane `Z = z0` covering the whole image.
    FrontoWall { z0: f64 },
    /// Plane at `height` below the camera. Rows at or above `horizon_row`
    /// (default: principal point row) see it at infinity and stay invalid.
    GroundPlane {
        height: f64,
        #[serde(default)]
        horizon_row: Option<f64>,
    },
    /// Fronto-parallel patch at `z0` over pixel rows `rect[0]..rect[2]` and
    /// columns `rect[1]..rect[3]` (half-open).
    Slab { z0: f64, rect: [usize; 4] },
}

/// `None`: the primitive does not cover the pixel. `Some(inf)`: covered but
/// infinitely far (the ground plane above its horizon).
fn primitive_depth(p: &Primitive, k: &Intrinsics, col: usize, row: usize) -> Option<f64> {
    let (_, y) = k.normalized(col, row);
    match *p {
        Primitive::FrontoWall { z0 } => Some(z0),
        Primitive::GroundPlane {
            height,
            horizon_row,
        } => {
            let y_h = horizon_row.map_or(0.0, |r| (r - k.cy) / k.focal_y);
            Some(if y > y_h { height / (y - y_h) } else { f64::INFINITY })
        }
        Primitive::Slab { z0, rect } => {
            let [r0, c0, r1, c1] = rect;
            ((r0..r1).contains(&row) && (c0..c1).contains(&col)).then_some(z0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub intrinsics: Intrinsics,
    pub motion: CameraMotion,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("pixel (row {row}, col {col}) is not covered by any primitive")]
    UncoveredPixel { row: usize, col: usize },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("scene document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Artifact(#[from] FlowIoError),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.intrinsics.is_valid() {
            return Err(SceneError::Invalid("intrinsics must be positive and finite".into()));
        }
        if !self.motion.is_valid() {
            return Err(SceneError::Invalid(
                "t_dir must be a unit vector and speed non-negative".into(),
            ));
        }
        if self.primitives.is_empty() {
            return Err(SceneError::Invalid("scene has no primitives".into()));
        }
        for p in &self.primitives {
            let ok = match *p {
                Primitive::FrontoWall { z0 } | Primitive::Slab { z0, .. } => z0 > 0.0 && z0.is_finite(),
                Primitive::GroundPlane { height, horizon_row } => {
                    height > 0.0 && height.is_finite() && horizon_row.is_none_or(f64::is_finite)
                }
            };
            if !ok {
                return Err(SceneError::Invalid(format!("non-positive depth parameter in {p:?}")));
            }
        }
        Ok(())
    }

    /// Nearest-primitive depth; `None` when uncovered.
    fn depth_at(&self, col: usize, row: usize) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| primitive_depth(p, &self.intrinsics, col, row))
            .reduce(f64::min)
    }

    /// Scene parsed from a TOML document (see the README for the keys).
    pub fn from_toml_str(text: &str) -> Result<(Self, SequenceOptions), SceneError> {
        let doc: SceneDocument = toml::from_str(text)?;
        let mut k = Intrinsics::from_size(doc.width, doc.height);
        if let Some(f) = doc.focal {
            k = Intrinsics::new(doc.width, doc.height, f);
        }
        k = k.with_principal_point(doc.cx.unwrap_or(k.cx), doc.cy.unwrap_or(k.cy));
        let t = Vector3::from(doc.motion.t_dir);
        let tn = t.norm();
        if !(tn > 0.0) {
            return Err(SceneError::Invalid("t_dir must be non-zero".into()));
        }
        let scene = SceneSpec {
            primitives: doc.primitive,
            intrinsics: k,
            motion: CameraMotion {
                t_dir: t / tn,
                speed: doc.motion.speed,
                omega: Vector3::from(doc.motion.omega),
            },
        };
        scene.validate()?;
        Ok((
            scene,
            SequenceOptions {
                frames: doc.frames,
                seed: doc.seed,
            },
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, SequenceOptions), SceneError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    width: usize,
    height: usize,
    focal: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    #[serde(default = "default_frames")]
    frames: usize,
    #[serde(default)]
    seed: u64,
    motion: MotionDocument,
    primitive: Vec<Primitive>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionDocument {
    t_dir: [f64; 3],
    speed: f64,
    #[serde(default)]
    omega: [f64; 3],
}

fn default_frames() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceOptions {
    pub frames: usize,
    pub seed: u64,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            frames: default_frames(),
            seed: 0,
        }
    }
}

/// True depth; infinitely distant pixels are invalid. Fails if any pixel is
/// covered by no primitive.
pub fn render_depth(scene: &SceneSpec) -> Result<DepthMap, SceneError> {
    scene.validate()?;
    let k = &scene.intrinsics;
    let mut z = Vec::with_capacity(k.num_pixels());
    for row in 0..k.height {
        for col in 0..k.width {
            z.push(scene.depth_at(col, row).ok_or(SceneError::UncoveredPixel { row, col })?);
        }
    }
    Ok(DepthMap::from_values(k.width, k.height, z))
}

/// Instantaneous motion field in normalized units. Pixels without finite
/// depth are invalid.
pub fn render_motion_field(scene: &SceneSpec) -> Result<MotionField, SceneError> {
    scene.validate()?;
    let k = &scene.intrinsics;
    let t = scene.motion.translation();
    let mut f = MotionField::zeros(k.width, k.height);
    for row in 0..k.height {
        for col in 0..k.width {
            let i = f.index(col, row);
            let (x, y) = k.normalized(col, row);
            match scene.depth_at(col, row) {
                Some(z) if z.is_finite() => {
                    let (ur, vr) = rotational_flow(&scene.motion.omega, x, y);
                    f.u[i] = (-t.x + x * t.z) / z + ur;
                    f.v[i] = (-t.y + y * t.z) / z + vr;
                }
                _ => {
                    f.u[i] = 0.0;
                    f.v[i] = 0.0;
                    f.valid[i] = false;
                }
            }
        }
    }
    Ok(f)
}

/// Smooth band-limited texture evaluated at continuous pixel positions.
#[derive(Debug, Clone)]
pub struct ProceduralTexture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl ProceduralTexture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..12)
            .map(|_| {
                let period = rng.random_range(6.0..28.0);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / period;
                (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.3..1.0))
            })
            .collect();
        Self { waves }
    }

    pub fn sample(&self, col: f64, row: f64) -> f64 {
        let total: f64 = self.waves.iter().map(|w| w.3).sum();
        let s: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * (kx * col + ky * row + phase).sin())
            .sum();
        (0.5 + 0.45 * s / total * 2.0).clamp(0.0, 1.0)
    }
}

/// Frame `k` of a sequence: the texture advected by `k` steps of the pixel
/// flow, `I_k(p) = T(p - k * flow(p))`.
pub fn render_frame(texture: &ProceduralTexture, flow_px: &MotionField, step: usize) -> Vec<f32> {
    let s = step as f64;
    (0..flow_px.len())
        .map(|i| {
            let (col, row) = ((i % flow_px.width) as f64, (i / flow_px.width) as f64);
            let (du, dv) = if flow_px.valid[i] {
                (flow_px.u[i], flow_px.v[i])
            } else {
                (0.0, 0.0)
            };
            texture.sample(col - s * du, row - s * dv) as f32
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SequencePaths {
    pub frames: Vec<PathBuf>,
    pub flows: Vec<PathBuf>,
    pub ground_truth: Vec<PathBuf>,
}

/// Writes `frames/frame_NNNN.png`, `flow/frame_NNNN.flo` (pixel units, one per
/// consecutive pair) and `gt/frame_NNNN.pfm` (true depth) under `out`.
///
/// The instantaneous model holds the scene fixed, so every pair shares one
/// flow field and every frame one depth map.
pub fn write_sequence(scene: &SceneSpec, opts: &SequenceOptions, out: impl AsRef<Path>) -> Result<SequencePaths, SceneError> {
    let out = out.as_ref();
    let depth = render_depth(scene)?;
    let flow_px = render_motion_field(scene)?.to_pixels(&scene.intrinsics);
    let texture = ProceduralTexture::new(opts.seed);
    for sub in ["frames", "flow", "gt"] {
        fs::create_dir_all(out.join(sub))?;
    }
    let k = &scene.intrinsics;
    let mut paths = SequencePaths {
        frames: Vec::new(),
        flows: Vec::new(),
        ground_truth: Vec::new(),
    };
    for f in 0..opts.frames {
        let stem = format!("frame_{f:04}");
        let pixels = render_frame(&texture, &flow_px, f);
        let img = GrayImage::from_fn(k.width as u32, k.height as u32, |c, r| {
            let v = pixels[r as usize * k.width + c as usize];
            Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
        });
        let frame = out.join("frames").join(format!("{stem}.png"));
        img.save(&frame).map_err(FlowIoError::from)?;
        paths.frames.push(frame);

        let gt = out.join("gt").join(format!("{stem}.pfm"));
        flow_io::write_depth_pfm(&depth, &gt)?;
        paths.ground_truth.push(gt);

        if f + 1 < opts.frames {
            let flo = out.join("flow").join(format!("{stem}.flo"));
            flow_io::write_flow_file(&flow_px, &flo)?;
            paths.flows.push(flo);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(primitives: Vec<Primitive>, motion: CameraMotion) -> SceneSpec {
        SceneSpec {
            primitives,
            intrinsics: Intrinsics::new(40, 30, 50.0),
            motion,
        }
    }

    fn forward(speed: f64) -> CameraMotion {
        CameraMotion {
            t_dir: Vector3::z(),
            speed,
            omega: Vector3::zeros(),
        }
    }

    #[test]
    fn wall_is_constant() {
        let d = render_depth(&scene(vec![Primitive::FrontoWall { z0: 10.0 }], forward(1.0))).unwrap();
        assert!(d.z.iter().all(|&z| z == 10.0));
        assert_eq!(d.valid_count(), 1200);
    }

    #[test]
    fn ground_plane_depth() {
        let s = scene(
            vec![Primitive::GroundPlane {
                height: 1.5,
                horizon_row: None,
            }],
            forward(1.0),
        );
        let d = render_depth(&s).unwrap();
        let k = s.intrinsics;
        for row in 0..k.height {
            for col in 0..k.width {
                let (_, y) = k.normalized(col, row);
                let i = row * k.width + col;
                if y > 0.0 {
                    assert!(d.valid[i]);
                    assert_eq!(d.z[i], 1.5 / y);
                } else {
                    assert!(!d.valid[i]);
                }
            }
        }
        let f = render_motion_field(&s).unwrap();
        assert_eq!(f.valid, d.valid);
    }

    #[test]
    fn slab_in_front_of_wall() {
        let s = scene(
            vec![
                Primitive::FrontoWall { z0: 20.0 },
                Primitive::Slab {
                    z0: 5.0,
                    rect: [5, 10, 15, 30],
                },
            ],
            forward(1.0),
        );
        let d = render_depth(&s).unwrap();
        for row in 0..30 {
            for col in 0..40 {
                let inside = (5..15).contains(&row) && (10..30).contains(&col);
                assert_eq!(d.z[row * 40 + col], if inside { 5.0 } else { 20.0 });
            }
        }
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let s = scene(
            vec![Primitive::Slab {
                z0: 5.0,
                rect: [0, 0, 10, 10],
            }],
            forward(1.0),
        );
        assert!(matches!(
            render_depth(&s),
            Err(SceneError::UncoveredPixel { row: 0, col: 10 })
        ));
        let f = render_motion_field(&s).unwrap();
        assert_eq!(f.valid_count(), 100);
    }

    #[test]
    fn forward_motion_on_wall_is_radial() {
        let s = scene(vec![Primitive::FrontoWall { z0: 8.0 }], forward(2.0));
        let f = render_motion_field(&s).unwrap();
        for row in 0..30 {
            for col in 0..40 {
                let (x, y) = s.intrinsics.normalized(col, row);
                let i = f.index(col, row);
                assert!((f.u[i] - x * 2.0 / 8.0).abs() < 1e-15);
                assert!((f.v[i] - y * 2.0 / 8.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_roll_independent_of_depth() {
        let w = 0.01;
        let s = scene(
            vec![
                Primitive::FrontoWall { z0: 30.0 },
                Primitive::Slab {
                    z0: 2.0,
                    rect: [0, 0, 15, 20],
                },
            ],
            CameraMotion {
                t_dir: Vector3::z(),
                speed: 0.0,
                omega: Vector3::new(0.0, 0.0, w),
            },
        );
        let f = render_motion_field(&s).unwrap();
        for row in 0..30 {
            for col in 0..40 {
                let (x, y) = s.intrinsics.normalized(col, row);
                let i = f.index(col, row);
                assert_eq!((f.u[i], f.v[i]), (w * y, -w * x));
            }
        }
    }

    #[test]
    fn matches_shared_rotational_field_bit_for_bit() {
        let omega = Vector3::new(0.01, -0.02, 0.005);
        let s = scene(
            vec![Primitive::FrontoWall { z0: 30.0 }],
            CameraMotion {
                t_dir: Vector3::z(),
                speed: 0.0,
                omega,
            },
        );
        let f = render_motion_field(&s).unwrap();
        let r = crate::egomotion::rotational_field(&omega, &s.intrinsics);
        assert_eq!(f, r);
    }

    #[test]
    fn ground_plane_with_yaw_is_sum_of_parts() {
        let k = Intrinsics::new(40, 30, 50.0);
        let s = SceneSpec {
            primitives: vec![Primitive::GroundPlane {
                height: 1.5,
                horizon_row: None,
            }],
            intrinsics: k,
            motion: CameraMotion {
                t_dir: Vector3::z(),
                speed: 1.0,
                omega: Vector3::new(0.0, 0.01, 0.0),
            },
        };
        let f = render_motion_field(&s).unwrap();
        // Independent per-pixel recomputation with Z = h / y.
        for row in 0..30 {
            for col in 0..40 {
                let x = (col as f64 - 20.0) / 50.0;
                let y = (row as f64 - 15.0) / 50.0;
                let i = row * 40 + col;
                if y <= 0.0 {
                    assert!(!f.valid[i]);
                    continue;
                }
                let z = 1.5 / y;
                let u = x / z - 0.01 * (1.0 + x * x);
                let v = y / z - 0.01 * x * y;
                assert!((f.u[i] - u).abs() < 1e-15, "{row} {col}");
                assert!((f.v[i] - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn toml_document() {
        let (s, seq) = SceneSpec::from_toml_str(
            r#"
            width = 64
            height = 48
            focal = 60.0
            frames = 4
            seed = 3

            [motion]
            t_dir = [0.0, 0.0, 2.0]
            speed = 0.5
            omega = [0.0, 0.01, 0.0]

            [[primitive]]
            kind = "fronto_wall"
            z0 = 20.0

            [[primitive]]
            kind = "ground_plane"
            height = 1.5

            [[primitive]]
            kind = "slab"
            z0 = 6.0
            rect = [10, 10, 30, 20]
            "#,
        )
        .unwrap();
        assert_eq!(seq, SequenceOptions { frames: 4, seed: 3 });
        assert_eq!(s.motion.t_dir, Vector3::z());
        assert_eq!(s.primitives.len(), 3);
        assert_eq!(s.intrinsics.focal, 60.0);
        assert!(SceneSpec::from_toml_str("width = 1\nheight = 1\nbogus = 2\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_motion() -> impl Strategy<Value = CameraMotion> {
            (
                (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
                0.0f64..3.0,
                (-0.05f64..0.05, -0.05f64..0.05, -0.05f64..0.05),
            )
                .prop_map(|(t, speed, w)| CameraMotion {
                    t_dir: Vector3::new(t.0, t.1, t.2).normalize(),
                    speed,
                    omega: Vector3::new(w.0, w.1, w.2),
                })
        }

        fn scene_with(m: CameraMotion) -> SceneSpec {
            SceneSpec {
                primitives: vec![
                    Primitive::FrontoWall { z0: 25.0 },
                    Primitive::GroundPlane {
                        height: 1.2,
                        horizon_row: Some(12.0),
                    },
                    Primitive::Slab {
                        z0: 4.0,
                        rect: [3, 5, 12, 14],
                    },
                ],
                intrinsics: Intrinsics::new(24, 18, 20.0),
                motion: m,
            }
        }

        proptest! {
            #[test]
            fn superposition_and_speed_scaling(m in arb_motion()) {
                let full = render_motion_field(&scene_with(m)).unwrap();
                let trans = render_motion_field(&scene_with(CameraMotion { omega: Vector3::zeros(), ..m })).unwrap();
                let rot = render_motion_field(&scene_with(CameraMotion { speed: 0.0, ..m })).unwrap();
                prop_assert_eq!(&full, &trans.add(&rot));

                let doubled = render_motion_field(&scene_with(CameraMotion { omega: Vector3::zeros(), speed: 2.0 * m.speed, ..m })).unwrap();
                prop_assert_eq!(doubled, trans.scaled(2.0));
            }

            #[test]
            fn pure_translation_is_radial(m in arb_motion()) {
                let m = CameraMotion { omega: Vector3::zeros(), ..m };
                let s = scene_with(m);
                let f = render_motion_field(&s).unwrap();
                for i in (0..f.len()).filter(|&i| f.valid[i]) {
                    let (x, y) = s.intrinsics.normalized(i % f.width, i / f.width);
                    let d = crate::egomotion::radial_direction(&m.t_dir, x, y);
                    let cross = f.u[i] * d.1 - f.v[i] * d.0;
                    prop_assert!(cross.abs() <= 1e-12 * (1.0 + d.0.hypot(d.1)));
                    prop_assert!(f.u[i] * d.0 + f.v[i] * d.1 >= 0.0);
                }
            }
        }
    }
}
