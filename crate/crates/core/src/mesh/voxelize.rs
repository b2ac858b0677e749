//! Mesh to voxel mask.

use rayon::prelude::*;

use super::integrity::is_watertight;
use super::winding::{line_crossings, winding_number};
use super::TriMesh;
use crate::error::{Error, Result};
use crate::volume::{VolumeKind, VoxelVolume};

/// Sets every voxel of the template grid whose center has winding number
/// above 0.5. Requires a watertight mesh.
pub fn voxelize(mesh: &TriMesh, template: &VoxelVolume) -> Result<VoxelVolume> {
    if !is_watertight(mesh) {
        return Err(Error::Mesh("voxelize: mesh is not watertight".into()));
    }
    Ok(voxelize_unchecked(mesh, template))
}

/// [`voxelize`] without the watertightness check. Winding numbers are
/// counted by signed crossings along x-scanlines through voxel centers.
pub fn voxelize_unchecked(mesh: &TriMesh, template: &VoxelVolume) -> VoxelVolume {
    let [nx, ny, nz] = template.dims();
    let [sx, sy, sz] = template.spacing();
    let [ox, oy, oz] = template.origin();

    // Bin faces by the scanlines their y-z bounding box covers.
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); ny * nz];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let c = f.map(|v| mesh.vertices[v]);
        let lo_y = c[0].y.min(c[1].y).min(c[2].y);
        let hi_y = c[0].y.max(c[1].y).max(c[2].y);
        let lo_z = c[0].z.min(c[1].z).min(c[2].z);
        let hi_z = c[0].z.max(c[1].z).max(c[2].z);
        let Some((j0, j1)) = index_range(lo_y, hi_y, oy, sy, ny) else { continue };
        let Some((k0, k1)) = index_range(lo_z, hi_z, oz, sz, nz) else { continue };
        for k in k0..=k1 {
            for j in j0..=j1 {
                bins[j + ny * k].push(fi);
            }
        }
    }

    let scale = mesh.bounds().diagonal().max(sx.max(sy).max(sz));
    let slices: Vec<Vec<f32>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut slice = vec![0.0f32; nx * ny];
            let z = oz + k as f64 * sz;
            for j in 0..ny {
                let bin = &bins[j + ny * k];
                if bin.is_empty() {
                    continue;
                }
                let y = oy + j as f64 * sy;
                let row = &mut slice[j * nx..(j + 1) * nx];
                let mut done = false;
                for attempt in 0..8u32 {
                    let a = attempt as f64 * 1e-9 * scale;
                    let Some(mut cross) = line_crossings(mesh, bin.iter().map(|&f| mesh.faces[f]), y + 1.3 * a, z + 0.7 * a)
                    else {
                        continue;
                    };
                    cross.sort_by(|p, q| p.0.total_cmp(&q.0));
                    // Winding number at x = sum of signs of crossings beyond x.
                    let mut w: i64 = cross.iter().map(|c| c.1 as i64).sum();
                    let mut next = 0;
                    for (i, cell) in row.iter_mut().enumerate() {
                        let x = ox + i as f64 * sx;
                        while next < cross.len() && cross[next].0 <= x {
                            w -= cross[next].1 as i64;
                            next += 1;
                        }
                        if w > 0 {
                            *cell = 1.0;
                        }
                    }
                    done = true;
                    break;
                }
                if !done {
                    for (i, cell) in row.iter_mut().enumerate() {
                        let p = crate::geom::v3(ox + i as f64 * sx, y, z);
                        if winding_number(mesh, &p) > 0.5 {
                            *cell = 1.0;
                        }
                    }
                }
            }
            slice
        })
        .collect();
    let data = slices.concat();
    template
        .with_data(data, VolumeKind::BinaryMask)
        .expect("voxelize output matches template dims")
}

/// Inclusive range of grid indices whose coordinate lies in `[lo, hi]`.
fn index_range(lo: f64, hi: f64, origin: f64, step: f64, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / step).ceil().max(0.0);
    let b = ((hi - origin) / step).floor().min(n as f64 - 1.0);
    if a > b || !a.is_finite() || !b.is_finite() {
        return None;
    }
    Some((a as usize, b as usize))
}
