//! Angle-field objective and the inner direction search.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use super::sphere::{self, Triangle};
use super::{angdiff, rotational_flow};

/// One pixel of the search set: normalized position and observed flow.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// Flow left after removing a candidate rotation, with its angle weight.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Residual {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

pub(crate) fn weight(u: f64, v: f64, mag_floor: f64) -> f64 {
    (u.hypot(v) / mag_floor).min(1.0)
}

pub(crate) fn residuals(samples: &[Sample], omega: &Vector3<f64>, mag_floor: f64) -> Vec<Residual> {
    samples
        .iter()
        .map(|s| {
            let (ur, vr) = rotational_flow(omega, s.x, s.y);
            let (u, v) = (s.u - ur, s.v - vr);
            Residual {
                x: s.x,
                y: s.y,
                u,
                v,
                w: weight(u, v, mag_floor),
            }
        })
        .collect()
}

/// Weighted mean squared angle between the flow and the radial direction
/// `(xW - U, yW - V)`. Zero when no pixel carries weight.
#[cfg(test)]
pub(crate) fn angle_objective(res: &[Residual], t: &Vector3<f64>) -> f64 {
    capped_objective(res, t, f64::INFINITY)
}

/// As [`angle_objective`] with each angle's contribution capped at `cap^2`,
/// so pixels that fit no direction cost a constant.
pub(crate) fn capped_objective(res: &[Residual], t: &Vector3<f64>, cap: f64) -> f64 {
    let cap2 = cap * cap;
    let (mut num, mut den) = (0.0, 0.0);
    for r in res {
        if r.w == 0.0 {
            continue;
        }
        let a = angdiff((r.u, r.v), (r.x * t.z - t.x, r.y * t.z - t.y));
        num += r.w * (a * a).min(cap2);
        den += r.w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn level2_faces() -> &'static [Triangle] {
    static FACES: OnceLock<Vec<Triangle>> = OnceLock::new();
    FACES.get_or_init(|| sphere::geodesic_faces(2))
}

const COARSE_KEEP: usize = 4;

/// Hierarchical sampling: all 320 level-2 face centroids, then the level-3
/// children of the best few faces, each refined locally.
pub(crate) fn solve_direction_global(res: &[Residual], opts: &InnerOptions) -> (Vector3<f64>, f64) {
    let faces = level2_faces();
    let mut scored: Vec<(f64, usize)> = faces
        .iter()
        .enumerate()
        .map(|(i, f)| (capped_objective(res, &sphere::centroid(f), opts.cap), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best = (sphere::centroid(&faces[scored[0].1]), scored[0].0);
    for &(_, i) in scored.iter().take(COARSE_KEEP) {
        let seed = sphere::subdivide(&faces[i])
            .iter()
            .map(|child| {
                let c = sphere::centroid(child);
                (capped_objective(res, &c, opts.cap), c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c)
            .unwrap_or_else(|| sphere::centroid(&faces[i]));
        let cand = refine_direction(res, &seed, opts);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    prefer_forward(res, best.0, best.1, opts)
}

/// Closed-form start: flow parallel to `(xW - U, yW - V)` makes the cross
/// product `t . (v, -u, uy - vx)` vanish, so the weighted least-squares
/// direction is the smallest eigenvector of the scatter of those vectors.
/// The sign is then chosen on the angle objective.
pub(crate) fn linear_direction(res: &[Residual], opts: &InnerOptions) -> Option<(Vector3<f64>, f64)> {
    let mut m = Matrix3::zeros();
    for r in res {
        let n2 = r.u * r.u + r.v * r.v;
        if r.w == 0.0 || n2 == 0.0 {
            continue;
        }
        let a = Vector3::new(r.v, -r.u, r.u * r.y - r.v * r.x);
        m += a * a.transpose() * (r.w / n2);
    }
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let t: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    if !(t.norm() > 0.0) || !t.iter().all(|c| c.is_finite()) {
        return None;
    }
    let t = t.normalize();
    let (fp, fm) = (capped_objective(res, &t, opts.cap), capped_objective(res, &-t, opts.cap));
    Some(if fp <= fm { (t, fp) } else { (-t, fm) })
}

/// Deterministic local solve: linear start, then Levenberg–Marquardt.
pub(crate) fn solve_direction_local(res: &[Residual], opts: &InnerOptions) -> Option<(Vector3<f64>, f64)> {
    let (t0, _) = linear_direction(res, opts)?;
    let (t, f) = refine_direction(res, &t0, opts);
    Some(prefer_forward(res, t, f, opts))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct InnerOptions {
    pub max_iters: usize,
    /// Angle (radians) above which a pixel's cost stops growing; infinite
    /// for the plain objective.
    pub cap: f64,
    /// Stop once a tangent-plane step is shorter than this (radians).
    pub step_tol: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            cap: f64::INFINITY,
            step_tol: 1e-13,
        }
    }
}

fn tangent_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if t.x.abs() <= t.y.abs() && t.x.abs() <= t.z.abs() {
        Vector3::x()
    } else if t.y.abs() <= t.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = t.cross(&axis).normalize();
    let e2 = t.cross(&e1);
    (e1, e2)
}

/// Levenberg–Marquardt on the signed angle residuals, parametrized in the
/// tangent plane at the current direction. Pixels beyond the cap carry no
/// gradient. Only steps that lower the objective are taken.
pub(crate) fn refine_direction(res: &[Residual], t0: &Vector3<f64>, opts: &InnerOptions) -> (Vector3<f64>, f64) {
    let mut t = t0.normalize();
    let mut f = capped_objective(res, &t, opts.cap);
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iters {
        let (e1, e2) = tangent_basis(&t);
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in res {
            if r.w == 0.0 {
                continue;
            }
            let (dx, dy) = (r.x * t.z - t.x, r.y * t.z - t.y);
            let cross = r.u * dy - r.v * dx;
            let dot = r.u * dx + r.v * dy;
            let n2 = cross * cross + dot * dot;
            if n2 == 0.0 {
                continue;
            }
            let a = cross.atan2(dot);
            if a.abs() >= opts.cap {
                continue;
            }
            let gx = (-r.v * dot - r.u * cross) / n2;
            let gy = (r.u * dot - r.v * cross) / n2;
            let g = Vector3::new(-gx, -gy, gx * r.x + gy * r.y);
            let (j1, j2) = (g.dot(&e1), g.dot(&e2));
            a11 += r.w * j1 * j1;
            a12 += r.w * j1 * j2;
            a22 += r.w * j2 * j2;
            b1 += r.w * a * j1;
            b2 += r.w * a * j2;
        }
        let mut moved = false;
        let mut step_len = 0.0;
        for _ in 0..12 {
            let (d11, d22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = d11 * d22 - a12 * a12;
            if !(det.abs() > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let p1 = -(d22 * b1 - a12 * b2) / det;
            let p2 = -(d11 * b2 - a12 * b1) / det;
            let cand = (t + e1 * p1 + e2 * p2).normalize();
            let fc = capped_objective(res, &cand, opts.cap);
            if fc < f {
                t = cand;
                f = fc;
                lambda = (lambda * 0.1).max(1e-12);
                moved = true;
                step_len = p1.hypot(p2);
                break;
            }
            lambda *= 10.0;
        }
        if !moved || step_len < opts.step_tol {
            break;
        }
    }
    (t, f)
}

/// Resolves the `t` / `-t` choice toward forward motion unless the backward
/// direction is strictly better.
pub(crate) fn prefer_forward(res: &[Residual], t: Vector3<f64>, f: f64, opts: &InnerOptions) -> (Vector3<f64>, f64) {
    if t.z >= 0.0 {
        return (t, f);
    }
    let flipped = -t;
    let g = capped_objective(res, &flipped, opts.cap);
    if g <= f {
        (flipped, g)
    } else {
        (t, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(t: Vector3<f64>) -> Vec<Residual> {
        let mut out = Vec::new();
        for i in 0..15 {
            for j in 0..11 {
                let (x, y) = (-0.5 + i as f64 / 14.0, -0.4 + j as f64 / 12.5);
                let z = 5.0 + 3.0 * x.abs() + 2.0 * j as f64;
                let (u, v) = ((x * t.z - t.x) / z, (y * t.z - t.y) / z);
                out.push(Residual {
                    x,
                    y,
                    u,
                    v,
                    w: weight(u, v, 1e-3),
                });
            }
        }
        out
    }

    #[test]
    fn objective_vanishes_at_truth_only_up_to_sign_preference() {
        let t = Vector3::new(0.2, -0.1, 0.97).normalize();
        let res = radial(t);
        assert!(angle_objective(&res, &t) < 1e-20);
        assert!(angle_objective(&res, &-t) > 1.0);
    }

    #[test]
    fn global_search_recovers_direction() {
        for t in [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.6, 0.3, 0.74).normalize(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-0.2, 0.5, -0.8).normalize(),
        ] {
            let (est, f) = solve_direction_global(&radial(t), &InnerOptions::default());
            let err = est.dot(&t).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(err < 1e-3, "{t:?}: {est:?} err {err} f {f}");
        }
    }
}
