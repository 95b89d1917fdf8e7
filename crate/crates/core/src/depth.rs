//! Up-to-scale depth from translational flow, and its percentile form.

use nalgebra::Vector3;

use crate::flow_io::{DepthMap, Intrinsics, MotionField, RelativeDepthMap};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DepthError {
    #[error("translation direction has zero length")]
    DegenerateDirection,
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("field is {field:?} but intrinsics are {intrinsics:?}")]
    DimensionMismatch {
        field: (usize, usize),
        intrinsics: (usize, usize),
    },
}

/// Default focus-of-expansion exclusion, in pixels of translational flow.
pub const DEFAULT_EPSILON_PX: f64 = 0.3;

/// Depth from both flow components at once:
/// `Z = sqrt(((x W - U)^2 + (y W - V)^2) / (u_t^2 + v_t^2))`.
///
/// Pixels outside `mask`, invalid in the field, or with translational flow
/// below `epsilon` (normalized units) are invalid. The last rule removes the
/// blow-up around the focus of expansion.
pub fn recover_depth(
    trans_field: &MotionField,
    t_dir: &Vector3<f64>,
    intrinsics: &Intrinsics,
    mask: &[bool],
    epsilon: f64,
) -> Result<DepthMap, DepthError> {
    if !(t_dir.norm() > 1e-12) {
        return Err(DepthError::DegenerateDirection);
    }
    if (trans_field.width, trans_field.height) != (intrinsics.width, intrinsics.height)
        || mask.len() != trans_field.len()
    {
        return Err(DepthError::DimensionMismatch {
            field: (trans_field.width, trans_field.height),
            intrinsics: (intrinsics.width, intrinsics.height),
        });
    }
    let t = t_dir.normalize();
    let eps2 = epsilon * epsilon;
    let n = trans_field.len();
    let mut z = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if !(mask[i] && trans_field.valid[i]) {
            continue;
        }
        let (ut, vt) = (trans_field.u[i], trans_field.v[i]);
        let flow2 = ut * ut + vt * vt;
        if !(flow2 >= eps2) || flow2 == 0.0 {
            continue;
        }
        let (x, y) = intrinsics.normalized(i % trans_field.width, i / trans_field.width);
        let (a, b) = (-t.x + x * t.z, -t.y + y * t.z);
        let zi = ((a * a + b * b) / flow2).sqrt();
        if zi.is_finite() && zi > 0.0 {
            z[i] = zi;
            valid[i] = true;
        }
    }
    Ok(DepthMap::new(trans_field.width, trans_field.height, z, valid))
}

/// Fraction of valid pixels at or below each pixel's depth, in `(0, 1]`.
/// Tied pixels share the largest rank, so the farthest depth maps to 1.
pub fn to_relative(depth: &DepthMap) -> Result<RelativeDepthMap, DepthError> {
    let mut sorted: Vec<f64> = (0..depth.len())
        .filter(|&i| depth.valid[i])
        .map(|i| depth.z[i])
        .collect();
    if sorted.is_empty() {
        return Err(DepthError::NoValidPixels);
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let r = (0..depth.len())
        .map(|i| {
            if depth.valid[i] {
                let z = depth.z[i];
                let at_or_below = sorted.partition_point(|s| s.total_cmp(&z).is_le());
                at_or_below as f64 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(RelativeDepthMap {
        width: depth.width,
        height: depth.height,
        r,
        valid: depth.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_map(z: &[f64]) -> DepthMap {
        DepthMap::from_values(z.len(), 1, z.to_vec())
    }

    /// Brute-force rank: count of valid depths `<=` each one.
    fn brute_force(z: &[f64]) -> Vec<f64> {
        z.iter()
            .map(|a| z.iter().filter(|b| *b <= a).count() as f64 / z.len() as f64)
            .collect()
    }

    #[test]
    fn percentiles_match_brute_force() {
        for z in [vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 5.0, 9.0], vec![3.0, 1.0, 3.0, 2.0, 8.0]] {
            let r = to_relative(&row_map(&z)).unwrap();
            assert_eq!(r.r, brute_force(&z));
        }
        assert_eq!(to_relative(&row_map(&[1.0, 2.0, 3.0, 4.0])).unwrap().r, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(to_relative(&row_map(&[5.0, 5.0, 9.0])).unwrap().r, vec![2.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn constant_map_is_all_ones() {
        let r = to_relative(&row_map(&[7.0; 5])).unwrap();
        assert!(r.r.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn invalid_pixels_excluded_from_ranks() {
        let d = DepthMap::new(4, 1, vec![1.0, 100.0, 2.0, 3.0], vec![true, false, true, true]);
        let r = to_relative(&d).unwrap();
        assert_eq!(r.valid, d.valid);
        assert_eq!((r.r[0], r.r[2], r.r[3]), (1.0 / 3.0, 2.0 / 3.0, 1.0));
        let none = DepthMap::new(1, 1, vec![1.0], vec![false]);
        assert_eq!(to_relative(&none), Err(DepthError::NoValidPixels));
    }

    #[test]
    fn wall_depth_exact_and_foe_excluded() {
        let k = Intrinsics::new(21, 11, 20.0);
        let mut f = MotionField::zeros(21, 11);
        for row in 0..11 {
            for col in 0..21 {
                let (x, y) = k.normalized(col, row);
                let i = f.index(col, row);
                f.u[i] = x / 10.0;
                f.v[i] = y / 10.0;
            }
        }
        let mask = vec![true; f.len()];
        let d = recover_depth(&f, &Vector3::z(), &k, &mask, 0.0).unwrap();
        // The FoE pixel (col 10.5 is not integral; center col 10 row 5 has x = -0.025).
        for i in 0..d.len() {
            if d.valid[i] {
                assert!((d.z[i] - 10.0).abs() <= 1e-12);
            }
        }
        // Exactly-zero flow at the principal point when it is a pixel center.
        let k2 = Intrinsics::new(21, 11, 20.0).with_principal_point(10.0, 5.0);
        let mut g = MotionField::zeros(21, 11);
        for row in 0..11 {
            for col in 0..21 {
                let (x, y) = k2.normalized(col, row);
                let i = g.index(col, row);
                g.u[i] = x / 10.0;
                g.v[i] = y / 10.0;
            }
        }
        let d = recover_depth(&g, &Vector3::z(), &k2, &mask, 0.0).unwrap();
        let foe = g.index(10, 5);
        assert!(!d.valid[foe]);
        assert!(d.z.iter().all(|z| z.is_finite()));
        assert_eq!(d.valid_count(), d.len() - 1);
    }

    #[test]
    fn epsilon_and_mask_invalidate() {
        let k = Intrinsics::new(3, 1, 1.0);
        let mut f = MotionField::zeros(3, 1);
        f.u = vec![0.5, 0.01, 0.5];
        let d = recover_depth(&f, &Vector3::x(), &k, &[true, true, false], 0.1).unwrap();
        assert_eq!(d.valid, vec![true, false, false]);
        assert_eq!(d.z[0], 2.0);
    }

    #[test]
    fn zero_direction_rejected() {
        let k = Intrinsics::new(1, 1, 1.0);
        let f = MotionField::zeros(1, 1);
        assert_eq!(
            recover_depth(&f, &Vector3::zeros(), &k, &[true], 0.0),
            Err(DepthError::DegenerateDirection)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn depth_grid() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(2.0f64..1000.0, 1..200)
        }

        proptest! {
            #[test]
            fn monotone_transforms_keep_ranks(z in depth_grid()) {
                let d = row_map(&z);
                let base = to_relative(&d).unwrap();
                prop_assert_eq!(&to_relative(&d.map(f64::ln)).unwrap(), &base);
                prop_assert_eq!(&to_relative(&d.map(|z| z * z)).unwrap(), &base);
            }

            #[test]
            fn ranks_consistent(z in depth_grid()) {
                let r = to_relative(&row_map(&z)).unwrap();
                let n = z.len() as f64;
                prop_assert!(r.r.iter().all(|&r| r > 0.0 && r <= 1.0));
                prop_assert!(r.r.contains(&1.0));
                for (&ri, expect) in r.r.iter().zip(brute_force(&z)) {
                    prop_assert_eq!(ri, expect);
                    prop_assert_eq!((ri * n).round() / n, ri);
                }
            }
        }
    }
}
