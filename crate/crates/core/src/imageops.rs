//! Small raster helpers: grayscale frames, bilinear resampling, blur.

use std::path::Path;

use crate::flow_io::MotionField;

/// Single-channel frame with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::new(width, height, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, image::ImageError> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Ok(Self::new(w, h, data))
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Bilinear sample with edge clamping.
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        sample_bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Keeps the top `rows` rows.
    pub fn crop_rows(&self, rows: usize) -> Self {
        let rows = rows.min(self.height);
        Self::new(self.width, rows, self.data[..rows * self.width].to_vec())
    }

    pub fn resize(&self, width: usize, height: usize) -> Self {
        Self::new(
            width,
            height,
            resize_bilinear(&self.data, self.width, self.height, width, height),
        )
    }
}

pub fn sample_bilinear(data: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
    let bottom = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Center-aligned bilinear resize.
pub fn resize_bilinear(src: &[f32], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    let (sx, sy) = (w as f32 / nw as f32, h as f32 / nh as f32);
    let mut out = Vec::with_capacity(nw * nh);
    for r in 0..nh {
        let y = (r as f32 + 0.5) * sy - 0.5;
        for c in 0..nw {
            let x = (c as f32 + 0.5) * sx - 0.5;
            out.push(sample_bilinear(src, w, h, x, y));
        }
    }
    out
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f32 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|k| k / norm).collect();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * src[r * w + clampi(c as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp[clampi(r as isize + k as isize - radius, h) * w + c])
                .sum();
        }
    }
    out
}

/// Pixel flow resampled to a new size: components interpolated bilinearly
/// and rescaled per axis; a pixel stays valid only if all four source
/// neighbours are valid.
pub fn resize_flow(f: &MotionField, nw: usize, nh: usize) -> MotionField {
    let (w, h) = (f.width, f.height);
    let (sx, sy) = (w as f64 / nw as f64, h as f64 / nh as f64);
    let mut out = MotionField::zeros(nw, nh);
    for r in 0..nh {
        let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, fy) = (y.floor() as usize, y - y.floor());
        let y1 = (y0 + 1).min(h - 1);
        for c in 0..nw {
            let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, fx) = (x.floor() as usize, x - x.floor());
            let x1 = (x0 + 1).min(w - 1);
            let idx = [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1];
            let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            let o = r * nw + c;
            out.valid[o] = idx.iter().all(|&i| f.valid[i]);
            if out.valid[o] {
                out.u[o] = idx.iter().zip(&wts).map(|(&i, wt)| wt * f.u[i]).sum::<f64>() / sx;
                out.v[o] = idx.iter().zip(&wts).map(|(&i, wt)| wt * f.v[i]).sum::<f64>() / sy;
            } else {
                out.u[o] = 0.0;
                out.v[o] = 0.0;
            }
        }
    }
    out
}

/// Keeps the top `rows` rows of a flow field.
pub fn crop_flow_rows(f: &MotionField, rows: usize) -> MotionField {
    let n = rows.min(f.height) * f.width;
    MotionField {
        width: f.width,
        height: rows.min(f.height),
        u: f.u[..n].to_vec(),
        v: f.v[..n].to_vec(),
        valid: f.valid[..n].to_vec(),
    }
}

/// Rows kept after discarding the bottom `fraction` of `height`.
pub fn kept_rows(height: usize, fraction: f64) -> usize {
    ((height as f64 * (1.0 - fraction)).floor() as usize).max(1)
}
