//! Directional 3-D thinning with 26/6 simple-point tests.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::volume::{distance_transform, VolumeKind, VoxelVolume};

/// Offsets of the 3×3×3 neighbourhood, indexed `(dx+1) + 3(dy+1) + 9(dz+1)`.
const CENTER: usize = 13;

fn offset(n: usize) -> [i64; 3] {
    [(n % 3) as i64 - 1, ((n / 3) % 3) as i64 - 1, (n / 9) as i64 - 1]
}

struct Tables {
    /// 26-adjacent pairs within the cube, center excluded.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacent pairs restricted to the 18-neighbourhood.
    adj6: Vec<Vec<usize>>,
    in18: [bool; 27],
    face: [bool; 27],
}

fn tables() -> &'static Tables {
    use std::sync::OnceLock;
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let l1 = |o: [i64; 3]| o.iter().map(|v| v.abs()).sum::<i64>();
        let mut in18 = [false; 27];
        let mut face = [false; 27];
        for n in 0..27 {
            let d = l1(offset(n));
            in18[n] = n != CENTER && d <= 2;
            face[n] = d == 1;
        }
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        for a in 0..27 {
            for b in 0..27 {
                if a == b || a == CENTER || b == CENTER {
                    continue;
                }
                let (oa, ob) = (offset(a), offset(b));
                let diff = [oa[0] - ob[0], oa[1] - ob[1], oa[2] - ob[2]];
                if diff.iter().all(|v| v.abs() <= 1) {
                    adj26[a].push(b);
                    if l1(diff) == 1 && in18[a] && in18[b] {
                        adj6[a].push(b);
                    }
                }
            }
        }
        Tables { adj26, adj6, in18, face }
    })
}

/// A voxel is simple when removing it preserves 26-connectivity of the
/// foreground and 6-connectivity of the background locally.
fn is_simple(nb: &[bool; 27]) -> bool {
    let t = tables();
    // Foreground components in N26, 26-adjacency.
    let mut seen = [false; 27];
    let mut comps = 0;
    for s in 0..27 {
        if s == CENTER || !nb[s] || seen[s] {
            continue;
        }
        comps += 1;
        if comps > 1 {
            return false;
        }
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            for &y in &t.adj26[x] {
                if nb[y] && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    if comps != 1 {
        return false;
    }
    // Background components in N18 that touch a face neighbour, 6-adjacency.
    let mut seen = [false; 27];
    let mut comps = 0;
    for s in 0..27 {
        if !t.face[s] || nb[s] || seen[s] {
            continue;
        }
        comps += 1;
        if comps > 1 {
            return false;
        }
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            for &y in &t.adj6[x] {
                if t.in18[y] && !nb[y] && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    comps == 1
}

/// Padded working copy with one background voxel on every side.
struct Work {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Work {
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn neighbourhood(&self, p: usize) -> [bool; 27] {
        let (sx, sy) = (1i64, self.dims[0] as i64);
        let sz = sy * self.dims[1] as i64;
        let mut nb = [false; 27];
        for (n, v) in nb.iter_mut().enumerate() {
            let o = offset(n);
            *v = self.data[(p as i64 + o[0] * sx + o[1] * sy + o[2] * sz) as usize];
        }
        nb
    }
}

/// Thinned skeleton as a binary mask on the input grid.
///
/// Six directional sub-iterations per pass; a voxel that is a border point
/// in the sub-iteration direction and set on the opposite side is removed
/// when it is simple and not an endpoint (exactly one 26-neighbour). Removal is
/// sequential in linear index order with both tests repeated just before
/// each deletion. Afterwards, curve ends whose inscribed ball lies within
/// that of a voxel further along the curve are trimmed, which collapses
/// blobs without shortening the body of a tube.
pub fn thin_mask(mask: &VoxelVolume) -> Result<VoxelVolume> {
    if !mask.is_binary() {
        return Err(Error::NotBinary);
    }
    if mask.count_nonzero() == 0 {
        return Err(Error::Skeleton("empty mask".into()));
    }
    let [nx, ny, nz] = mask.dims();
    let dims = [nx + 2, ny + 2, nz + 2];
    let mut w = Work { dims, data: vec![false; dims[0] * dims[1] * dims[2]] };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.get(i, j, k) != 0.0 {
                    let id = w.idx(i + 1, j + 1, k + 1);
                    w.data[id] = true;
                }
            }
        }
    }
    let dirs: [usize; 6] = [22, 4, 16, 10, 14, 12]; // +z, -z, +y, -y, +x, -x
    let mut candidates = Vec::new();
    let edt = padded_edt(&w, mask);
    loop {
        let mut removed = 0usize;
        for &dir in &dirs {
            candidates.clear();
            for k in 1..=nz {
                for j in 1..=ny {
                    for i in 1..=nx {
                        let p = w.idx(i, j, k);
                        if !w.data[p] {
                            continue;
                        }
                        let nb = w.neighbourhood(p);
                        // Border in `dir` and at least two voxels thick along it.
                        if nb[dir] || !nb[26 - dir] {
                            continue;
                        }
                        let count = nb.iter().filter(|&&b| b).count() - 1;
                        if count > 1 && is_simple(&nb) {
                            candidates.push(p);
                        }
                    }
                }
            }
            for &p in &candidates {
                let nb = w.neighbourhood(p);
                if nb.iter().filter(|&&b| b).count() > 2 && is_simple(&nb) {
                    w.data[p] = false;
                    removed += 1;
                }
            }
        }
        if removed == 0 && !trim_blob_ends(&mut w, mask, &edt) {
            break;
        }
    }
    let mut out = vec![0.0f32; mask.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if w.data[w.idx(i + 1, j + 1, k + 1)] {
                    out[mask.index(i, j, k)] = 1.0;
                }
            }
        }
    }
    mask.with_data(out, VolumeKind::BinaryMask)
}

fn padded_edt(w: &Work, mask: &VoxelVolume) -> Vec<f64> {
    let [nx, ny, nz] = mask.dims();
    let raw = distance_transform(mask);
    let mut edt = vec![0.0; w.data.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                edt[w.idx(i + 1, j + 1, k + 1)] = raw[mask.index(i, j, k)];
            }
        }
    }
    edt
}

/// Returns whether anything was removed.
fn trim_blob_ends(w: &mut Work, mask: &VoxelVolume, edt: &[f64]) -> bool {
    let mut any = false;
    let sp = mask.spacing();
    let (sy, sz) = (w.dims[0] as i64, (w.dims[0] * w.dims[1]) as i64);
    let step = |n: usize| {
        let o = offset(n);
        let d = Vec3::new(o[0] as f64 * sp[0], o[1] as f64 * sp[1], o[2] as f64 * sp[2]).norm();
        (o[0] + o[1] * sy + o[2] * sz, d)
    };
    let slack = sp.iter().cloned().fold(0.0, f64::max);
    let min_sp = sp.iter().cloned().fold(f64::INFINITY, f64::min);
    let pos = |p: usize| {
        let i = p % w.dims[0];
        let j = (p / w.dims[0]) % w.dims[1];
        let k = p / (w.dims[0] * w.dims[1]);
        Vec3::new(i as f64 * sp[0], j as f64 * sp[1], k as f64 * sp[2])
    };
    let set_neighbours = |w: &Work, p: usize| -> Vec<usize> {
        let nb = w.neighbourhood(p);
        (0..27).filter(|&n| n != CENTER && nb[n]).map(|n| (p as i64 + step(n).0) as usize).collect()
    };
    loop {
        let mut changed = false;
        for p in 0..w.data.len() {
            if !w.data[p] {
                continue;
            }
            let first = set_neighbours(w, p);
            if first.len() != 1 {
                continue;
            }
            // Walk the chain; the end is redundant when its inscribed ball
            // fits, up to one voxel, inside one at least two steps on or at
            // an adjacent junction.
            let max_steps = (2.0 * (edt[p] + slack) / min_sp).ceil() as usize + 2;
            let (mut prev, mut cur) = (p, first[0]);
            let mut redundant = false;
            for walked in 1..=max_steps {
                let next = set_neighbours(w, cur);
                if (walked >= 2 || next.len() >= 3) && (pos(cur) - pos(p)).norm() + edt[p] < edt[cur] + slack {
                    redundant = true;
                    break;
                }
                if next.len() != 2 {
                    break;
                }
                let n = if next[0] == prev { next[1] } else { next[0] };
                prev = cur;
                cur = n;
            }
            if redundant {
                w.data[p] = false;
                changed = true;
            }
        }
        if !changed {
            return any;
        }
        any = true;
    }
}

/// World-mm centres of the thinned skeleton voxels, in linear index order.
pub fn thin_skeletonize(mask: &VoxelVolume) -> Result<Vec<Vec3>> {
    Ok(thin_mask(mask)?.set_points())
}
