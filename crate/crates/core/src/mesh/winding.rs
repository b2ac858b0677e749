//! Generalized winding numbers.

use std::f64::consts::PI;

use super::TriMesh;
use crate::geom::{orient2d, Vec3};

/// Sum of signed solid angles subtended by the faces at `p`, over 4π.
/// Approximately 1 inside a closed outward mesh and 0 outside.
pub fn winding_number(mesh: &TriMesh, p: &Vec3) -> f64 {
    let mut total = 0.0;
    for &[i, j, k] in &mesh.faces {
        total += solid_angle(&(mesh.vertices[i] - p), &(mesh.vertices[j] - p), &(mesh.vertices[k] - p));
    }
    total / (4.0 * PI)
}

/// Van Oosterom–Strackee signed solid angle of a triangle seen from the origin.
pub(crate) fn solid_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Winding number by signed crossings of a `+x` ray. Integral for closed
/// meshes; equals [`winding_number`] away from the surface. Rays grazing an
/// edge are nudged.
pub fn winding_number_crossings(mesh: &TriMesh, p: &Vec3) -> i64 {
    let scale = mesh.bounds().diagonal().max(1.0);
    for attempt in 0..16u32 {
        let a = attempt as f64;
        let (y, z) = (p.y + a * 1.3e-9 * scale, p.z + a * 0.7e-9 * scale);
        if let Some(c) = line_crossings(mesh, mesh.faces.iter().copied(), y, z) {
            return c.iter().filter(|(x, _)| *x > p.x).map(|(_, s)| *s as i64).sum();
        }
    }
    0
}

/// Crossings of the line `{(t, y, z)}` with the given faces as `(x, sign)`,
/// `sign = +1` where the surface normal has positive x. `None` when the line
/// touches a face edge or vertex exactly.
pub(crate) fn line_crossings(
    mesh: &TriMesh,
    faces: impl Iterator<Item = [usize; 3]>,
    y: f64,
    z: f64,
) -> Option<Vec<(f64, i8)>> {
    let q = [y, z];
    let mut out = Vec::new();
    for [i, j, k] in faces {
        let (a, b, c) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
        let (pa, pb, pc) = ([a.y, a.z], [b.y, b.z], [c.y, c.z]);
        let lo_y = a.y.min(b.y).min(c.y);
        let hi_y = a.y.max(b.y).max(c.y);
        let lo_z = a.z.min(b.z).min(c.z);
        let hi_z = a.z.max(b.z).max(c.z);
        if y < lo_y || y > hi_y || z < lo_z || z > hi_z {
            continue;
        }
        let d0 = orient2d(pa, pb, q);
        let d1 = orient2d(pb, pc, q);
        let d2 = orient2d(pc, pa, q);
        let pos = d0 > 0.0 && d1 > 0.0 && d2 > 0.0;
        let neg = d0 < 0.0 && d1 < 0.0 && d2 < 0.0;
        if pos || neg {
            let n = (b - a).cross(&(c - a));
            let x = a.x - (n.y * (y - a.y) + n.z * (z - a.z)) / n.x;
            out.push((x, if pos { 1 } else { -1 }));
            continue;
        }
        let nonneg = d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0;
        let nonpos = d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0;
        if nonneg || nonpos {
            // On the closed boundary of the projected triangle.
            return None;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::trimesh::tests::unit_cube;

    #[test]
    fn cube_inside_outside() {
        let c = unit_cube();
        let inside = Vec3::new(0.3, 0.6, 0.2);
        let outside = Vec3::new(1.3, 0.6, 0.2);
        assert!((winding_number(&c, &inside) - 1.0).abs() < 1e-9);
        assert!(winding_number(&c, &outside).abs() < 1e-9);
        assert_eq!(winding_number_crossings(&c, &inside), 1);
        assert_eq!(winding_number_crossings(&c, &outside), 0);
        assert!((winding_number(&c.flipped(), &inside) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn grazing_ray_is_nudged() {
        // Ray from the cube center passes exactly through a face diagonal.
        let c = unit_cube();
        assert_eq!(winding_number_crossings(&c, &Vec3::new(0.5, 0.5, 0.5)), 1);
    }

    #[test]
    fn two_routes_agree_on_random_points() {
        use rand::{RngExt, SeedableRng};
        let c = unit_cube();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5));
            let g = winding_number(&c, &p);
            let x = winding_number_crossings(&c, &p);
            assert!((g - x as f64).abs() < 1e-6, "{p:?}: {g} vs {x}");
        }
    }
}
