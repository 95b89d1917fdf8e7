//! Camera rotation and translation direction from a motion field.
//!
//! Under pure translation every flow vector points away from the focus of
//! expansion, so the flow *angles* alone constrain the translation direction
//! `(U, V, W)`. The rotation `omega` is found as the one whose removal leaves
//! a field best explained that way: an outer simplex search over `omega`
//! wraps an inner search over unit directions (sphere sampling or a linear
//! start, finished by Levenberg–Marquardt on the angle residuals).

mod objective;
pub mod simplex;
pub mod sphere;

use nalgebra::Vector3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow_io::{median_in_place, EstimateRecord, Intrinsics, MotionField};
use objective::{InnerOptions, Sample};
use simplex::SimplexOptions;

/// Rotational flow at normalized image position `(x, y)`.
#[inline]
pub fn rotational_flow(omega: &Vector3<f64>, x: f64, y: f64) -> (f64, f64) {
    let (wx, wy, wz) = (omega.x, omega.y, omega.z);
    (
        wx * x * y - wy * (1.0 + x * x) + wz * y,
        wx * (1.0 + y * y) - wy * x * y - wz * x,
    )
}

/// Exact rotational field in normalized units; every pixel is valid.
pub fn rotational_field(omega: &Vector3<f64>, intrinsics: &Intrinsics) -> MotionField {
    let mut f = MotionField::zeros(intrinsics.width, intrinsics.height);
    for row in 0..intrinsics.height {
        for col in 0..intrinsics.width {
            let (x, y) = intrinsics.normalized(col, row);
            let i = f.index(col, row);
            (f.u[i], f.v[i]) = rotational_flow(omega, x, y);
        }
    }
    f
}

/// Unsigned angle between two planar vectors, in `[0, pi]`.
///
/// A zero-length input has no direction and yields 0.
#[inline]
pub fn angdiff(a: (f64, f64), b: (f64, f64)) -> f64 {
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    cross.abs().atan2(dot)
}

/// Direction of translational flow at `(x, y)` for camera translation `t`.
#[inline]
pub fn radial_direction(t: &Vector3<f64>, x: f64, y: f64) -> (f64, f64) {
    (x * t.z - t.x, y * t.z - t.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgomotionConfig {
    /// Flow magnitude (pixels) at which a pixel's angle gets full weight.
    pub mag_floor_px: f64,
    /// Fraction of all pixels that must move faster than `mag_floor_px`.
    pub min_support_fraction: f64,
    pub inlier_angle_deg: f64,
    /// Half-width of the rotation search cube, radians per frame.
    pub omega_max: f64,
    /// Samples per axis of the coarse rotation grid.
    pub omega_grid: usize,
    /// Budget of outer objective evaluations per refinement.
    pub max_evals: usize,
    pub objective_tol: f64,
    pub omega_tol: f64,
    /// Objective (rad^2) above which a slow field counts as degenerate.
    pub degenerate_threshold: f64,
    /// Pixels used by the refinement; larger fields are subsampled.
    pub max_search_pixels: usize,
    /// Pixels used by the coarse rotation grid.
    pub coarse_search_pixels: usize,
    /// Re-fits restricted to the current inliers.
    pub robust_refits: usize,
    pub seed: u64,
}

impl Default for EgomotionConfig {
    fn default() -> Self {
        Self {
            mag_floor_px: 0.15,
            min_support_fraction: 0.01,
            inlier_angle_deg: 25.0,
            omega_max: 0.05,
            omega_grid: 5,
            max_evals: 2000,
            objective_tol: 1e-7,
            omega_tol: 1e-7,
            degenerate_threshold: 0.5,
            max_search_pixels: 4096,
            coarse_search_pixels: 1024,
            robust_refits: 2,
            seed: 0,
        }
    }
}

impl EgomotionConfig {
    pub fn validate(&self) -> Result<(), EgomotionError> {
        let bad = |m: &'static str| Err(EgomotionError::InvalidConfig(m));
        if !(self.mag_floor_px > 0.0 && self.mag_floor_px.is_finite()) {
            return bad("mag_floor_px must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_support_fraction) {
            return bad("min_support_fraction must lie in [0, 1]");
        }
        if !(self.inlier_angle_deg > 0.0 && self.inlier_angle_deg <= 180.0) {
            return bad("inlier_angle_deg must lie in (0, 180]");
        }
        if !(self.omega_max >= 0.0 && self.omega_max.is_finite()) {
            return bad("omega_max must be non-negative");
        }
        if self.omega_grid == 0 || self.max_evals == 0 {
            return bad("omega_grid and max_evals must be positive");
        }
        if self.max_search_pixels < 16 || self.coarse_search_pixels < 16 {
            return bad("search pixel budgets must be at least 16");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EgomotionError {
    #[error("insufficient translation: {0}")]
    InsufficientTranslation(String),
    #[error("rotation refinement did not converge within the evaluation budget")]
    NoConvergence(Box<EgomotionEstimate>),
    #[error("field is {field:?} but intrinsics are {intrinsics:?}")]
    DimensionMismatch {
        field: (usize, usize),
        intrinsics: (usize, usize),
    },
    #[error("invalid egomotion config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone)]
pub struct TranslationEstimate {
    pub t_dir: Vector3<f64>,
    /// Per-pixel angle to the fitted radial direction; 0 at invalid pixels.
    pub angular_residual: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct EgomotionEstimate {
    pub omega: Vector3<f64>,
    pub t_dir: Vector3<f64>,
    /// Input minus the rotational field of `omega`, normalized units.
    pub trans_field: MotionField,
    pub angular_residual: Vec<f64>,
    pub inlier: Vec<bool>,
    pub objective_value: f64,
    pub evaluations: usize,
}

impl EgomotionEstimate {
    pub fn n_inliers(&self) -> usize {
        self.inlier.iter().filter(|&&b| b).count()
    }

    pub fn record(&self) -> EstimateRecord {
        EstimateRecord {
            omega: [self.omega.x, self.omega.y, self.omega.z],
            t_dir: [self.t_dir.x, self.t_dir.y, self.t_dir.z],
            objective: self.objective_value,
            n_inliers: self.n_inliers(),
        }
    }
}

/// Thresholds converted to normalized units for one image.
struct Resolved {
    mag_floor: f64,
    min_support: usize,
    inlier_angle: f64,
}

fn resolve(cfg: &EgomotionConfig, intrinsics: &Intrinsics) -> Resolved {
    Resolved {
        mag_floor: cfg.mag_floor_px / intrinsics.focal,
        min_support: ((cfg.min_support_fraction * intrinsics.num_pixels() as f64).ceil() as usize)
            .max(1),
        inlier_angle: cfg.inlier_angle_deg.to_radians(),
    }
}

fn check_dims(field: &MotionField, intrinsics: &Intrinsics) -> Result<(), EgomotionError> {
    if (field.width, field.height) != (intrinsics.width, intrinsics.height) || !field.is_consistent() {
        return Err(EgomotionError::DimensionMismatch {
            field: (field.width, field.height),
            intrinsics: (intrinsics.width, intrinsics.height),
        });
    }
    Ok(())
}

fn support(field: &MotionField, mask: &[bool], mag_floor: f64) -> usize {
    (0..field.len())
        .filter(|&i| mask[i] && field.valid[i] && field.u[i].hypot(field.v[i]) > mag_floor)
        .count()
}

/// Valid pixels, subsampled without replacement when above `budget`.
fn pick_samples(
    field: &MotionField,
    intrinsics: &Intrinsics,
    mask: &[bool],
    budget: usize,
    seed: u64,
) -> Vec<Sample> {
    let mut idx: Vec<usize> = (0..field.len())
        .filter(|&i| mask[i] && field.valid[i])
        .collect();
    if idx.len() > budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep: Vec<usize> = index::sample(&mut rng, idx.len(), budget).into_vec();
        keep.sort_unstable();
        idx = keep.into_iter().map(|k| idx[k]).collect();
    }
    idx.into_iter()
        .map(|i| {
            let (x, y) = intrinsics.normalized(i % field.width, i / field.width);
            Sample {
                x,
                y,
                u: field.u[i],
                v: field.v[i],
            }
        })
        .collect()
}

fn residual_angles(field: &MotionField, intrinsics: &Intrinsics, t: &Vector3<f64>) -> Vec<f64> {
    (0..field.len())
        .map(|i| {
            if !field.valid[i] {
                return 0.0;
            }
            let (x, y) = intrinsics.normalized(i % field.width, i / field.width);
            angdiff((field.u[i], field.v[i]), radial_direction(t, x, y))
        })
        .collect()
}

fn degenerate(field: &MotionField, objective: f64, cfg: &EgomotionConfig, mag_floor: f64) -> bool {
    if objective <= cfg.degenerate_threshold {
        return false;
    }
    let mut mags: Vec<f64> = (0..field.len())
        .filter(|&i| field.valid[i])
        .map(|i| field.u[i].hypot(field.v[i]))
        .collect();
    median_in_place(&mut mags).is_none_or(|m| m < 2.0 * mag_floor)
}

/// Best unit direction for a field that already contains no rotation.
pub fn estimate_translation_direction(
    trans_field: &MotionField,
    intrinsics: &Intrinsics,
    cfg: &EgomotionConfig,
) -> Result<TranslationEstimate, EgomotionError> {
    cfg.validate()?;
    check_dims(trans_field, intrinsics)?;
    let r = resolve(cfg, intrinsics);
    let all = vec![true; trans_field.len()];
    let s = support(trans_field, &all, r.mag_floor);
    if s < r.min_support {
        return Err(EgomotionError::InsufficientTranslation(format!(
            "{s} pixels move faster than {} px, need {}",
            cfg.mag_floor_px, r.min_support
        )));
    }
    let samples = pick_samples(trans_field, intrinsics, &all, cfg.max_search_pixels, cfg.seed);
    let res = objective::residuals(&samples, &Vector3::zeros(), r.mag_floor);
    let (t_dir, objective) = objective::solve_direction_global(&res, &InnerOptions::default());
    if degenerate(trans_field, objective, cfg, r.mag_floor) {
        return Err(EgomotionError::InsufficientTranslation(format!(
            "objective {objective:.3} rad^2 on a near-static field"
        )));
    }
    Ok(TranslationEstimate {
        t_dir,
        angular_residual: residual_angles(trans_field, intrinsics, &t_dir),
        objective,
    })
}

struct Search {
    omega: Vector3<f64>,
    t: Vector3<f64>,
    objective: f64,
    evals: usize,
    converged: bool,
}

const MULTI_START: usize = 4;

/// Spacing of the coarse rotation grid.
fn step_of(cfg: &EgomotionConfig) -> f64 {
    if cfg.omega_grid > 1 {
        2.0 * cfg.omega_max / (cfg.omega_grid - 1) as f64
    } else {
        cfg.omega_max.max(1e-3)
    }
}

/// Looser budget for the multi-start probes.
fn coarse_cfg(cfg: &EgomotionConfig) -> EgomotionConfig {
    EgomotionConfig {
        max_evals: cfg.max_evals.min(400),
        objective_tol: cfg.objective_tol.max(1e-9),
        omega_tol: cfg.omega_tol.max(1e-6),
        ..*cfg
    }
}

/// Inner objective at one rotation: the best direction for the residual
/// field and its angle objective.
fn inner_solve(samples: &[Sample], omega: &Vector3<f64>, mag_floor: f64, inner: &InnerOptions) -> (Vector3<f64>, f64) {
    let res = objective::residuals(samples, omega, mag_floor);
    objective::solve_direction_local(&res, inner).unwrap_or((Vector3::z(), f64::INFINITY))
}

/// Simplex descent over `omega` on the inner objective.
fn refine_rotation(
    samples: &[Sample],
    start: Vector3<f64>,
    step: f64,
    cfg: &EgomotionConfig,
    mag_floor: f64,
    inner: &InnerOptions,
) -> Search {
    // Far outside the search cube the residual is dominated by a large
    // rotation, whose field the angle objective can also explain; the
    // descent is kept within one grid step of the cube.
    let bound = cfg.omega_max + step_of(cfg);
    let result = simplex::minimize(
        |w| {
            if w.iter().any(|c| c.abs() > bound) {
                return f64::INFINITY;
            }
            inner_solve(samples, &Vector3::new(w[0], w[1], w[2]), mag_floor, inner).1
        },
        start.as_slice(),
        &[step; 3],
        SimplexOptions {
            max_evals: cfg.max_evals,
            ftol: cfg.objective_tol,
            xtol: cfg.omega_tol,
        },
    );
    let omega = Vector3::new(result.x[0], result.x[1], result.x[2]);
    // Settle the direction at the final rotation, keeping the better of the
    // local and the global solutions.
    let res = objective::residuals(samples, &omega, mag_floor);
    let local = objective::solve_direction_local(&res, inner).unwrap_or((Vector3::z(), f64::INFINITY));
    let global = objective::solve_direction_global(&res, inner);
    let (t, objective) = if global.1 < local.1 { global } else { local };
    Search {
        omega,
        t,
        objective,
        evals: result.evals,
        converged: result.converged,
    }
}

/// Grid points over `[-omega_max, omega_max]^3` that score no worse than
/// any of their neighbours, best first, at most `keep` of them.
fn coarse_rotations(samples: &[Sample], cfg: &EgomotionConfig, mag_floor: f64, inner: &InnerOptions, keep: usize) -> Vec<Vector3<f64>> {
    let n = cfg.omega_grid;
    let axis: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n)
            .map(|i| -cfg.omega_max + 2.0 * cfg.omega_max * i as f64 / (n - 1) as f64)
            .collect()
    };
    let cell = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut grid = Vec::with_capacity(n * n * n);
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                grid.push(Vector3::new(a, b, c));
            }
        }
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|omega| inner_solve(samples, omega, mag_floor, inner).1)
        .collect();

    let near = |i: usize, d: isize| {
        let j = i as isize + d;
        (0..n as isize).contains(&j).then_some(j as usize)
    };
    let mut minima: Vec<(f64, usize)> = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let here = scores[cell(a, b, c)];
                let mut is_min = true;
                for da in -1..=1 {
                    for db in -1..=1 {
                        for dc in -1..=1 {
                            if let (Some(x), Some(y), Some(z)) = (near(a, da), near(b, db), near(c, dc)) {
                                if scores[cell(x, y, z)] < here {
                                    is_min = false;
                                }
                            }
                        }
                    }
                }
                if is_min {
                    minima.push((here, cell(a, b, c)));
                }
            }
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    minima.into_iter().take(keep.max(1)).map(|(_, i)| grid[i]).collect()
}

/// Full egomotion fit for a flow field in normalized units.
///
/// Coarse grid over `[-omega_max, omega_max]^3`, simplex refinement, then up
/// to `robust_refits` re-fits on the pixels inside the inlier angle. The
/// returned inlier mask covers all pixels.
pub fn estimate_rotation(
    flow: &MotionField,
    intrinsics: &Intrinsics,
    cfg: &EgomotionConfig,
) -> Result<EgomotionEstimate, EgomotionError> {
    cfg.validate()?;
    check_dims(flow, intrinsics)?;
    let r = resolve(cfg, intrinsics);
    let plain = InnerOptions::default();
    // Until outliers are known, angles past the inlier threshold cost a
    // constant so that moving objects cannot drag the search.
    let robust = InnerOptions {
        cap: r.inlier_angle,
        ..plain
    };
    let all = vec![true; flow.len()];
    let s = support(flow, &all, r.mag_floor);
    if s < r.min_support {
        return Err(EgomotionError::InsufficientTranslation(format!(
            "{s} pixels move faster than {} px, need {}",
            cfg.mag_floor_px, r.min_support
        )));
    }

    let coarse = pick_samples(flow, intrinsics, &all, cfg.coarse_search_pixels, cfg.seed);
    let grid_step = step_of(cfg);
    // The objective over omega is multimodal along the rotation/translation
    // ambiguity, so the best few grid minima each get a short descent on the coarse
    // subsample before the winner is refined on the full one.
    let starts = coarse_rotations(&coarse, cfg, r.mag_floor, &robust, MULTI_START);
    let mut evaluations = 0;
    let mut omega0 = starts[0];
    let mut best_f = f64::INFINITY;
    for start in starts {
        let probe = refine_rotation(&coarse, start, 0.5 * grid_step, &coarse_cfg(cfg), r.mag_floor, &robust);
        evaluations += probe.evals;
        if probe.objective < best_f {
            best_f = probe.objective;
            omega0 = probe.omega;
        }
    }

    let samples = pick_samples(flow, intrinsics, &all, cfg.max_search_pixels, cfg.seed);
    let mut search = refine_rotation(&samples, omega0, 0.1 * grid_step, cfg, r.mag_floor, &robust);
    evaluations += search.evals;
    let mut converged = search.converged;

    let mut mask = all.clone();
    for round in 0..cfg.robust_refits {
        let trans = flow.add(&rotational_field(&(-search.omega), intrinsics));
        let angles = residual_angles(&trans, intrinsics, &search.t);
        let inliers: Vec<bool> = (0..flow.len())
            .map(|i| flow.valid[i] && angles[i] < r.inlier_angle)
            .collect();
        let next: Vec<bool> = (0..flow.len()).map(|i| inliers[i] || !flow.valid[i]).collect();
        if next == mask || support(flow, &next, r.mag_floor) < r.min_support {
            break;
        }
        log::debug!(
            "refit {round}: {} of {} valid pixels inside {} deg",
            inliers.iter().filter(|&&b| b).count(),
            flow.valid_count(),
            cfg.inlier_angle_deg
        );
        mask = next;
        let sub = pick_samples(flow, intrinsics, &mask, cfg.max_search_pixels, cfg.seed);
        search = refine_rotation(
            &sub,
            search.omega,
            0.1 * grid_step,
            cfg,
            r.mag_floor,
            &plain,
        );
        evaluations += search.evals;
        converged = search.converged;
    }

    let trans_field = flow.add(&rotational_field(&(-search.omega), intrinsics));
    let angular_residual = residual_angles(&trans_field, intrinsics, &search.t);
    let inlier: Vec<bool> = (0..flow.len())
        .map(|i| flow.valid[i] && angular_residual[i] < r.inlier_angle)
        .collect();

    let moving = support(&trans_field, &all, r.mag_floor);
    if moving < r.min_support {
        return Err(EgomotionError::InsufficientTranslation(format!(
            "{moving} pixels keep more than {} px of flow after removing rotation, need {}",
            cfg.mag_floor_px, r.min_support
        )));
    }
    if degenerate(&trans_field, search.objective, cfg, r.mag_floor) {
        return Err(EgomotionError::InsufficientTranslation(format!(
            "objective {:.3} rad^2 on a near-static field",
            search.objective
        )));
    }

    let estimate = EgomotionEstimate {
        omega: search.omega,
        t_dir: search.t,
        trans_field,
        angular_residual,
        inlier,
        objective_value: search.objective,
        evaluations,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(EgomotionError::NoConvergence(Box::new(estimate)))
    }
}
