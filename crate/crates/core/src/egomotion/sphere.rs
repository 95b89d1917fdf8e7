//! Geodesic sampling of the unit sphere from a subdivided icosahedron.

use nalgebra::Vector3;

pub type Triangle = [Vector3<f64>; 3];

fn icosahedron() -> Vec<Triangle> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    const FACES: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    FACES.iter().map(|f| [v[f[0]], v[f[1]], v[f[2]]]).collect()
}

/// Splits a spherical triangle into four at its projected edge midpoints.
pub fn subdivide(t: &Triangle) -> [Triangle; 4] {
    let [a, b, c] = *t;
    let ab = (a + b).normalize();
    let bc = (b + c).normalize();
    let ca = (c + a).normalize();
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}

pub fn centroid(t: &Triangle) -> Vector3<f64> {
    (t[0] + t[1] + t[2]).normalize()
}

/// Faces of the icosahedron after `level` subdivisions (`20 * 4^level`).
pub fn geodesic_faces(level: u32) -> Vec<Triangle> {
    let mut faces = icosahedron();
    for _ in 0..level {
        faces = faces.iter().flat_map(subdivide).collect();
    }
    faces
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_counts() {
        assert_eq!(geodesic_faces(0).len(), 20);
        assert_eq!(geodesic_faces(3).len(), 1280);
    }

    #[test]
    fn level3_covers_sphere() {
        // Any direction lies within a few degrees of some level-3 centroid.
        let centroids: Vec<_> = geodesic_faces(3).iter().map(centroid).collect();
        let probes = [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.3, -0.2, 0.9).normalize(),
            Vector3::new(-1.0, 0.01, 0.0).normalize(),
            Vector3::new(0.577, 0.577, -0.577).normalize(),
        ];
        for p in probes {
            let best = centroids
                .iter()
                .map(|c| c.dot(&p).clamp(-1.0, 1.0).acos())
                .fold(f64::INFINITY, f64::min);
            assert!(best.to_degrees() < 5.0, "{p:?} -> {best}");
        }
    }
}
