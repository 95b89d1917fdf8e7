use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixels.
///
/// Normalized image coordinates have their origin at the principal point:
/// `x = (col - cx) / focal`, `y = (row - cy) / focal_y`. The two focal
/// lengths only differ after an anisotropic resize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub focal_y: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels, principal point at `(width / 2, height / 2)`.
    pub fn new(width: usize, height: usize, focal: f64) -> Self {
        Self {
            width,
            height,
            focal,
            focal_y: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Focal length defaults to the image width when no calibration is known.
    pub fn from_size(width: usize, height: usize) -> Self {
        Self::new(width, height, width as f64)
    }

    pub fn with_principal_point(mut self, cx: f64, cy: f64) -> Self {
        self.cx = cx;
        self.cy = cy;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0
            && self.height > 0
            && self.focal.is_finite()
            && self.focal > 0.0
            && self.focal_y.is_finite()
            && self.focal_y > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
    }

    #[inline]
    pub fn normalized(&self, col: usize, row: usize) -> (f64, f64) {
        (
            (col as f64 - self.cx) / self.focal,
            (row as f64 - self.cy) / self.focal_y,
        )
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Keep the top `rows` rows; the principal point does not move.
    pub fn crop_rows(&self, rows: usize) -> Self {
        Self {
            height: rows,
            ..*self
        }
    }

    /// Intrinsics after a center-aligned bilinear resize to `width x height`.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            width,
            height,
            focal: self.focal * sx,
            focal_y: self.focal_y * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
        }
    }
}

/// Dense per-pixel flow, row-major.
///
/// Units depend on the producer: `.flo` files and the baseline estimator work
/// in pixels per frame, the egomotion and depth stages in normalized image
/// units per frame (see [`MotionField::to_normalized`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MotionField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.u.len() == n && self.v.len() == n && self.valid.len() == n
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Pixel flow to normalized units: `u / focal`, `v / focal_y`.
    pub fn to_normalized(&self, intrinsics: &Intrinsics) -> Self {
        self.map_components(1.0 / intrinsics.focal, 1.0 / intrinsics.focal_y)
    }

    /// Normalized flow back to pixels.
    pub fn to_pixels(&self, intrinsics: &Intrinsics) -> Self {
        self.map_components(intrinsics.focal, intrinsics.focal_y)
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map_components(k, k)
    }

    fn map_components(&self, ku: f64, kv: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|u| u * ku).collect(),
            v: self.v.iter().map(|v| v * kv).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Pixelwise sum over the shared valid support.
    pub fn add(&self, other: &MotionField) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a + b).collect(),
            valid: self
                .valid
                .iter()
                .zip(&other.valid)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    /// Median flow magnitude over valid pixels, `None` without valid pixels.
    pub fn median_magnitude(&self) -> Option<f64> {
        let mut mags: Vec<f64> = (0..self.len())
            .filter(|&i| self.valid[i])
            .map(|i| self.u[i].hypot(self.v[i]))
            .collect();
        median_in_place(&mut mags)
    }
}

pub(crate) fn median_in_place(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Up-to-scale depth. Only the ordering of `z` carries meaning for labels
/// produced from flow; synthetic and LiDAR maps carry metric depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub z: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, z: Vec<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(z.len(), width * height);
        assert_eq!(valid.len(), width * height);
        Self {
            width,
            height,
            z,
            valid,
        }
    }

    /// Every finite positive value is valid.
    pub fn from_values(width: usize, height: usize, z: Vec<f64>) -> Self {
        let valid = z.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        Self::new(width, height, z, valid)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            z: self.z.iter().map(|&z| f(z)).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Per-pixel depth percentile in `(0, 1]` over the valid pixels of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDepthMap {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RelativeDepthMap {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}
