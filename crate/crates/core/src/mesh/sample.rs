//! Seeded uniform surface sampling.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::geom::Vec3;

/// Uniform point on triangle `abc` from two unit variates.
#[inline]
pub(crate) fn triangle_point(a: &Vec3, b: &Vec3, c: &Vec3, r1: f64, r2: f64) -> Vec3 {
    let s = r1.sqrt();
    a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
}

/// Per-face stratified samples at `density` points per mm²: each face gets
/// `floor(area·density)` points plus one more with probability equal to the
/// fractional part. Never returns an empty set for a mesh with faces.
pub fn sample_surface(mesh: &TriMesh, density: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(f);
        let expected = mesh.face_area(f) * density;
        let mut n = expected.floor() as usize;
        if rng.random::<f64>() < expected - n as f64 {
            n += 1;
        }
        for _ in 0..n {
            let (r1, r2) = (rng.random::<f64>(), rng.random::<f64>());
            out.push(triangle_point(&a, &b, &c, r1, r2));
        }
    }
    if out.is_empty() && !mesh.faces.is_empty() {
        let best = (0..mesh.faces.len())
            .max_by(|&x, &y| mesh.face_area(x).total_cmp(&mesh.face_area(y)))
            .unwrap();
        out.push(mesh.face_centroid(best));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::trimesh::tests::unit_cube;

    #[test]
    fn count_tracks_area_and_points_lie_on_surface() {
        let c = unit_cube().map_points(|p| p * 4.0);
        let pts = sample_surface(&c, 4.0, 9);
        let expected = c.area() * 4.0;
        assert!((pts.len() as f64 - expected).abs() < 0.1 * expected);
        for p in &pts {
            let on_face = [p.x, p.y, p.z].iter().any(|&v| v.abs() < 1e-9 || (v - 4.0).abs() < 1e-9);
            assert!(on_face, "{p:?}");
        }
    }

    #[test]
    fn deterministic_and_nonempty() {
        let c = unit_cube();
        assert_eq!(sample_surface(&c, 4.0, 1), sample_surface(&c, 4.0, 1));
        assert_eq!(sample_surface(&c, 1e-9, 1).len(), 1);
    }
}
