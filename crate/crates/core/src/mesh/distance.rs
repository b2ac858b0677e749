//! Exact point-to-surface distance with a uniform face grid.

use super::TriMesh;
use crate::geom::{closest_point_on_triangle, Aabb, Vec3};

/// Uniform grid of face bounding boxes.
pub(crate) struct FaceGrid {
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl FaceGrid {
    pub(crate) fn new(mesh: &TriMesh) -> Self {
        let bounds = mesh.bounds();
        let nf = mesh.faces.len().max(1);
        let mean_edge = if mesh.faces.is_empty() {
            1.0
        } else {
            mesh.faces
                .iter()
                .map(|f| (mesh.vertices[f[1]] - mesh.vertices[f[0]]).norm())
                .sum::<f64>()
                / nf as f64
        };
        let ext = if bounds.is_empty() { Vec3::zeros() } else { bounds.max - bounds.min };
        let vol_cell = ((ext.x.max(1e-9) * ext.y.max(1e-9) * ext.z.max(1e-9)) / nf as f64).cbrt();
        let cell = (2.0 * mean_edge).max(vol_cell).max(ext.max() / 500.0).max(1e-9);
        let lo = if bounds.is_empty() { Vec3::zeros() } else { bounds.min };
        let dims = [
            (ext.x / cell).floor() as usize + 1,
            (ext.y / cell).floor() as usize + 1,
            (ext.z / cell).floor() as usize + 1,
        ];
        let mut g = FaceGrid { lo, cell, dims, cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]] };
        for (fi, f) in mesh.faces.iter().enumerate() {
            let b = Aabb::from_points(f.iter().map(|&v| &mesh.vertices[v]));
            let (a, z) = (g.cell_of(&b.min), g.cell_of(&b.max));
            for k in a[2]..=z[2] {
                for j in a[1]..=z[1] {
                    for i in a[0]..=z[0] {
                        let c = g.flat([i, j, k]);
                        g.cells[c].push(fi as u32);
                    }
                }
            }
        }
        g
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        let d = (p - self.lo) / self.cell;
        [0, 1, 2].map(|a| (d[a].floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    /// Faces whose cells overlap `b`, each once, ascending.
    pub(crate) fn query(&self, b: &Aabb, out: &mut Vec<usize>) {
        out.clear();
        let (a, z) = (self.cell_of(&b.min), self.cell_of(&b.max));
        for k in a[2]..=z[2] {
            for j in a[1]..=z[1] {
                for i in a[0]..=z[0] {
                    out.extend(self.cells[self.flat([i, j, k])].iter().map(|&f| f as usize));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Distances from query points to a fixed triangle mesh surface.
pub struct SurfaceDistance<'a> {
    mesh: &'a TriMesh,
    grid: FaceGrid,
}

impl<'a> SurfaceDistance<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        SurfaceDistance { mesh, grid: FaceGrid::new(mesh) }
    }

    /// Unsigned distance to the closest surface point. Infinite for a mesh
    /// without faces.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Closest surface point and its distance.
    pub fn closest(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        if self.mesh.faces.is_empty() {
            return None;
        }
        let g = &self.grid;
        let c = g.cell_of(p);
        let max_ring = g.dims.iter().copied().max().unwrap();
        let mut best: Option<(Vec3, f64)> = None;
        // Lower bound on the distance to any cell at Chebyshev ring r.
        let outside = {
            let hi = g.lo + Vec3::new(g.dims[0] as f64, g.dims[1] as f64, g.dims[2] as f64) * g.cell;
            let dx = (g.lo - p).sup(&(p - hi)).sup(&Vec3::zeros());
            dx.norm()
        };
        let mut seen = vec![false; self.mesh.faces.len()];
        for r in 0..=max_ring {
            if let Some((_, d)) = best {
                let bound = (r as f64 - 1.0).max(0.0) * g.cell;
                if bound.max(outside) > d {
                    break;
                }
            }
            let lo = c.map(|v| v as i64 - r as i64);
            let hi = c.map(|v| v as i64 + r as i64);
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let on_shell = i == lo[0] || i == hi[0] || j == lo[1] || j == hi[1] || k == lo[2] || k == hi[2];
                        if !on_shell || i < 0 || j < 0 || k < 0 {
                            continue;
                        }
                        let (i, j, k) = (i as usize, j as usize, k as usize);
                        if i >= g.dims[0] || j >= g.dims[1] || k >= g.dims[2] {
                            continue;
                        }
                        for &f in &g.cells[g.flat([i, j, k])] {
                            let f = f as usize;
                            if std::mem::replace(&mut seen[f], true) {
                                continue;
                            }
                            let [a, b, cc] = self.mesh.corners(f);
                            let q = closest_point_on_triangle(p, &a, &b, &cc);
                            let d = (q - p).norm();
                            if best.is_none_or(|(_, bd)| d < bd) {
                                best = Some((q, d));
                            }
                        }
                    }
                }
            }
        }
        best
    }
}
