//! Small geometric helpers shared across modules.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

#[inline]
pub fn v3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Exact orientation of `d` relative to the plane through `a`, `b`, `c`.
///
/// Positive when `d` lies below the plane (the plane's points appear
/// counterclockwise when viewed from above), zero when coplanar.
#[inline]
pub fn orient3d(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

#[inline]
fn c3(p: &Vec3) -> robust::Coord3D<f64> {
    robust::Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Exact 2-D orientation: positive when `a`, `b`, `c` are counterclockwise.
#[inline]
pub fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Unit vector orthogonal to `t`, built from the world axis least aligned with it.
pub fn any_orthogonal(t: &Vec3) -> Vec3 {
    let ax = t.x.abs();
    let ay = t.y.abs();
    let az = t.z.abs();
    let axis = if ax <= ay && ax <= az {
        Vec3::x()
    } else if ay <= az {
        Vec3::y()
    } else {
        Vec3::z()
    };
    t.cross(&axis).normalize()
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && self.max.x >= other.min.x
            && self.min.y <= other.max.y
            && self.max.y >= other.min.y
            && self.min.z <= other.max.z
            && self.max.z >= other.min.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            (self.max - self.min).norm()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orient3d_sign_convention() {
        let a = v3(0.0, 0.0, 0.0);
        let b = v3(1.0, 0.0, 0.0);
        let c = v3(0.0, 1.0, 0.0);
        assert!(orient3d(&a, &b, &c, &v3(0.0, 0.0, -1.0)) > 0.0);
        assert!(orient3d(&a, &b, &c, &v3(0.0, 0.0, 1.0)) < 0.0);
        assert_eq!(orient3d(&a, &b, &c, &v3(0.3, 0.3, 0.0)), 0.0);
    }

    #[test]
    fn closest_point_regions() {
        let a = v3(0.0, 0.0, 0.0);
        let b = v3(1.0, 0.0, 0.0);
        let c = v3(0.0, 1.0, 0.0);
        let interior = closest_point_on_triangle(&v3(0.2, 0.2, 1.0), &a, &b, &c);
        assert!((interior - v3(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(closest_point_on_triangle(&v3(-1.0, -1.0, 0.0), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&v3(2.0, 2.0, 0.0), &a, &b, &c), v3(0.5, 0.5, 0.0));
    }

    #[test]
    fn orthogonal_is_unit_and_orthogonal() {
        for t in [Vec3::x(), Vec3::y(), Vec3::z(), v3(1.0, 2.0, 3.0).normalize()] {
            let u = any_orthogonal(&t);
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!(u.dot(&t).abs() < 1e-12);
        }
    }
}
