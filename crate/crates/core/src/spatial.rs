//! Uniform-grid spatial index for exact nearest-neighbour queries.
//!
//! Results equal a brute-force scan: the nearest point is found exactly and
//! ties are broken by the lowest point index.

use std::collections::HashMap;

use crate::geom::{Aabb, Vec3};

pub struct PointGrid<'a> {
    points: &'a [Vec3],
    cell: f64,
    origin: Vec3,
    cells: HashMap<[i64; 3], Vec<u32>>,
    /// Bounds of occupied cell indices.
    lo: [i64; 3],
    hi: [i64; 3],
}

impl<'a> PointGrid<'a> {
    /// Builds a grid sized for roughly `target_per_cell` points per occupied cell.
    pub fn new(points: &'a [Vec3]) -> Self {
        assert!(!points.is_empty(), "PointGrid needs at least one point");
        let bb = Aabb::from_points(points);
        let ext = bb.max - bb.min;
        let n = points.len() as f64;
        // Surface-like point sets scale as n ~ area / cell^2.
        let area_scale = (ext.x * ext.y + ext.y * ext.z + ext.x * ext.z).max(1e-18);
        let mut cell = (area_scale / n).sqrt() * 1.5;
        let max_ext = ext.max();
        if max_ext == 0.0 {
            cell = 1.0;
        } else if !(cell > 0.0) || !cell.is_finite() {
            cell = max_ext;
        }
        cell = cell.max(max_ext * 1e-6).max(1e-12);
        Self::with_cell(points, cell)
    }

    pub fn with_cell(points: &'a [Vec3], cell: f64) -> Self {
        let origin = Aabb::from_points(points).min;
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_of(origin, cell, p);
            for k in 0..3 {
                lo[k] = lo[k].min(key[k]);
                hi[k] = hi[k].max(key[k]);
            }
            cells.entry(key).or_default().push(i as u32);
        }
        PointGrid {
            points,
            cell,
            origin,
            cells,
            lo,
            hi,
        }
    }

    fn key_of(origin: Vec3, cell: f64, p: &Vec3) -> [i64; 3] {
        let q = (p - origin) / cell;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    }

    pub fn points(&self) -> &[Vec3] {
        self.points
    }

    /// Index and squared distance of the nearest point (lowest index on ties).
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let c = Self::key_of(self.origin, self.cell, q);
        let mut best = (usize::MAX, f64::INFINITY);
        // Largest ring needed to cover every occupied cell.
        let max_ring = (0..3)
            .map(|k| (c[k] - self.lo[k]).abs().max((self.hi[k] - c[k]).abs()))
            .max()
            .unwrap_or(0);
        // Rings before the occupied box are empty.
        let mut ring: i64 = (0..3)
            .map(|k| (self.lo[k] - c[k]).max(c[k] - self.hi[k]).max(0))
            .max()
            .unwrap_or(0);
        loop {
            self.scan_ring(c, ring, q, &mut best);
            // Every point in ring r+1 or beyond is at least r*cell away.
            let bound = ring as f64 * self.cell;
            if ring >= max_ring || (best.0 != usize::MAX && bound * bound > best.1) {
                break;
            }
            ring += 1;
        }
        best
    }

    fn scan_ring(&self, c: [i64; 3], r: i64, q: &Vec3, best: &mut (usize, f64)) {
        let mut visit = |key: [i64; 3]| {
            if let Some(ids) = self.cells.get(&key) {
                for &i in ids {
                    let i = i as usize;
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
        };
        if r == 0 {
            visit(c);
            return;
        }
        // Ring offsets clipped to the occupied box.
        let span = |k: usize| (-r).max(self.lo[k] - c[k])..=r.min(self.hi[k] - c[k]);
        for dx in span(0) {
            for dy in span(1) {
                if dx.abs() == r || dy.abs() == r {
                    for dz in span(2) {
                        visit([c[0] + dx, c[1] + dy, c[2] + dz]);
                    }
                } else {
                    for dz in [-r, r] {
                        if span(2).contains(&dz) {
                            visit([c[0] + dx, c[1] + dy, c[2] + dz]);
                        }
                    }
                }
            }
        }
    }

    /// Indices of all points within `radius` of `q` (unordered).
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let lo = Self::key_of(self.origin, self.cell, &(q - Vec3::repeat(radius)));
        let hi = Self::key_of(self.origin, self.cell, &(q + Vec3::repeat(radius)));
        let r2 = radius * radius;
        let mut out = Vec::new();
        for x in lo[0].max(self.lo[0])..=hi[0].min(self.hi[0]) {
            for y in lo[1].max(self.lo[1])..=hi[1].min(self.hi[1]) {
                for z in lo[2].max(self.lo[2])..=hi[2].min(self.hi[2]) {
                    if let Some(ids) = self.cells.get(&[x, y, z]) {
                        for &i in ids {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Brute-force nearest neighbour, lowest index on ties.
pub fn nearest_brute(points: &[Vec3], q: &Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(raw: &[(f64, f64, f64)]) -> Vec<Vec3> {
        raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect()
    }

    #[test]
    fn single_point() {
        let p = pts(&[(1.0, 2.0, 3.0)]);
        let g = PointGrid::new(&p);
        assert_eq!(g.nearest(&Vec3::new(100.0, -4.0, 0.0)).0, 0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let p = pts(&[(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        let g = PointGrid::with_cell(&p, 0.3);
        assert_eq!(g.nearest(&Vec3::zeros()), (0, 1.0));
    }

    proptest! {
        #[test]
        fn grid_matches_brute_force(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..200),
            q in (-8.0f64..8.0, -8.0f64..8.0, -8.0f64..8.0),
        ) {
            let p = pts(&raw);
            let g = PointGrid::new(&p);
            let q = Vec3::new(q.0, q.1, q.2);
            prop_assert_eq!(g.nearest(&q), nearest_brute(&p, &q));
        }
    }
}
