//! Coarse-to-fine Horn-Schunck optical flow.
//!
//! Each pyramid level linearizes brightness constancy around the flow
//! upsampled from the coarser level (by warping the second frame) and runs
//! Jacobi relaxation of the data + quadratic-smoothness objective.

use serde::{Deserialize, Serialize};

use crate::flow_io::MotionField;
use crate::imageops::{gaussian_blur, resize_bilinear, GrayFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub scale_per_level: f64,
    pub iterations_per_level: usize,
    /// Smoothness weight alpha, in 8-bit intensity units
    /// (the objective uses `(alpha / 255)^2` on `[0, 1]` images).
    pub smoothness_weight: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 5,
            scale_per_level: 0.5,
            iterations_per_level: 50,
            smoothness_weight: 15.0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FlowError {
    #[error("frames are {0:?} and {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("smallest side {min_side} px is below {required} px needed for {levels} pyramid levels")]
    TooSmallForPyramid {
        min_side: usize,
        required: usize,
        levels: usize,
    },
    #[error("invalid flow params: {0}")]
    InvalidParams(&'static str),
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.pyramid_levels < 1 {
            return Err(FlowError::InvalidParams("pyramid_levels must be at least 1"));
        }
        if !(0.25..=0.75).contains(&self.scale_per_level) {
            return Err(FlowError::InvalidParams("scale_per_level must lie in [0.25, 0.75]"));
        }
        if self.iterations_per_level < 1 {
            return Err(FlowError::InvalidParams("iterations_per_level must be at least 1"));
        }
        if !(self.smoothness_weight > 0.0 && self.smoothness_weight.is_finite()) {
            return Err(FlowError::InvalidParams("smoothness_weight must be positive"));
        }
        Ok(())
    }

    pub fn min_side(&self) -> usize {
        (1usize << (self.pyramid_levels - 1).min(20)) * 8
    }
}

struct Level {
    w: usize,
    h: usize,
    a: Vec<f32>,
    b: Vec<f32>,
}

fn pyramid(a: &GrayFrame, b: &GrayFrame, p: &FlowParams) -> Vec<Level> {
    let s = p.scale_per_level;
    let sigma = (0.5 * (1.0 / (s * s) - 1.0).sqrt()) as f32;
    let mut levels = vec![Level {
        w: a.width,
        h: a.height,
        a: a.data.clone(),
        b: b.data.clone(),
    }];
    for _ in 1..p.pyramid_levels {
        let prev = levels.last().unwrap();
        let w = ((prev.w as f64 * s).round() as usize).max(1);
        let h = ((prev.h as f64 * s).round() as usize).max(1);
        let down = |img: &[f32]| resize_bilinear(&gaussian_blur(img, prev.w, prev.h, sigma), prev.w, prev.h, w, h);
        let next = Level {
            w,
            h,
            a: down(&prev.a),
            b: down(&prev.b),
        };
        levels.push(next);
    }
    levels
}

/// Horn-Schunck neighbourhood average (edges 1/6, corners 1/12), replicated borders.
fn local_average(f: &[f32], w: usize, h: usize, out: &mut [f32]) {
    for r in 0..h {
        let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let edges = f[ru * w + c] + f[rd * w + c] + f[r * w + cl] + f[r * w + cr];
            let corners = f[ru * w + cl] + f[ru * w + cr] + f[rd * w + cl] + f[rd * w + cr];
            out[r * w + c] = edges / 6.0 + corners / 12.0;
        }
    }
}

fn gradient(img: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
            gx[r * w + c] = (img[r * w + cr] - img[r * w + cl]) / (cr - cl).max(1) as f32;
            gy[r * w + c] = (img[rd * w + c] - img[ru * w + c]) / (rd - ru).max(1) as f32;
        }
    }
    (gx, gy)
}

fn refine_level(level: &Level, u0: &[f32], v0: &[f32], alpha2: f32, iterations: usize) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (level.w, level.h);
    let warped: Vec<f32> = (0..w * h)
        .map(|i| {
            let (c, r) = ((i % w) as f32, (i / w) as f32);
            crate::imageops::sample_bilinear(&level.b, w, h, c + u0[i], r + v0[i])
        })
        .collect();
    let (ax, ay) = gradient(&level.a, w, h);
    let (bx, by) = gradient(&warped, w, h);
    let ix: Vec<f32> = ax.iter().zip(&bx).map(|(a, b)| 0.5 * (a + b)).collect();
    let iy: Vec<f32> = ay.iter().zip(&by).map(|(a, b)| 0.5 * (a + b)).collect();
    let it: Vec<f32> = warped.iter().zip(&level.a).map(|(b, a)| b - a).collect();

    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut ubar = vec![0.0; w * h];
    let mut vbar = vec![0.0; w * h];
    for _ in 0..iterations {
        local_average(&u, w, h, &mut ubar);
        local_average(&v, w, h, &mut vbar);
        for i in 0..w * h {
            let (gx, gy) = (ix[i], iy[i]);
            let residual = gx * (ubar[i] - u0[i]) + gy * (vbar[i] - v0[i]) + it[i];
            let k = residual / (alpha2 + gx * gx + gy * gy);
            u[i] = ubar[i] - gx * k;
            v[i] = vbar[i] - gy * k;
        }
    }
    (u, v)
}

/// Dense flow from `frame_a` to `frame_b` in pixels: `a(p) ~ b(p + flow(p))`.
pub fn estimate_flow(frame_a: &GrayFrame, frame_b: &GrayFrame, params: &FlowParams) -> Result<MotionField, FlowError> {
    params.validate()?;
    if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height) {
        return Err(FlowError::DimensionMismatch(
            (frame_a.width, frame_a.height),
            (frame_b.width, frame_b.height),
        ));
    }
    let min_side = frame_a.width.min(frame_a.height);
    if min_side < params.min_side() {
        return Err(FlowError::TooSmallForPyramid {
            min_side,
            required: params.min_side(),
            levels: params.pyramid_levels,
        });
    }
    let alpha = (params.smoothness_weight / 255.0) as f32;
    let alpha2 = alpha * alpha;
    let levels = pyramid(frame_a, frame_b, params);

    let coarsest = levels.last().unwrap();
    let mut u = vec![0.0f32; coarsest.w * coarsest.h];
    let mut v = vec![0.0f32; coarsest.w * coarsest.h];
    let (mut pw, mut ph) = (coarsest.w, coarsest.h);
    for level in levels.iter().rev() {
        if (level.w, level.h) != (pw, ph) {
            let (sx, sy) = (level.w as f32 / pw as f32, level.h as f32 / ph as f32);
            u = resize_bilinear(&u, pw, ph, level.w, level.h).iter().map(|x| x * sx).collect();
            v = resize_bilinear(&v, pw, ph, level.w, level.h).iter().map(|x| x * sy).collect();
            (pw, ph) = (level.w, level.h);
        }
        (u, v) = refine_level(level, &u, &v, alpha2, params.iterations_per_level);
    }

    let mut field = MotionField::zeros(frame_a.width, frame_a.height);
    field.u = u.into_iter().map(f64::from).collect();
    field.v = v.into_iter().map(f64::from).collect();
    Ok(field)
}
