//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher),
//! separable over the three axes with anisotropic spacing.

use super::VoxelVolume;

/// Distance in mm from every voxel centre to the nearest background voxel
/// centre. Voxels outside the grid count as background, so a set voxel on the
/// border is one voxel spacing away from it.
pub fn distance_transform(mask: &VoxelVolume) -> Vec<f64> {
    let [nx, ny, nz] = mask.dims();
    let pad = [nx + 2, ny + 2, nz + 2];
    let pidx = |i: usize, j: usize, k: usize| i + pad[0] * (j + pad[1] * k);
    let inf = 1e30;
    let mut f = vec![0.0f64; pad[0] * pad[1] * pad[2]];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.get(i, j, k) != 0.0 {
                    f[pidx(i + 1, j + 1, k + 1)] = inf;
                }
            }
        }
    }
    let sp = mask.spacing();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for axis in 0..3 {
        let n = pad[axis];
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..pad[a1] {
            for w in 0..pad[a2] {
                line.clear();
                let mut at = [0usize; 3];
                at[a1] = u;
                at[a2] = w;
                for t in 0..n {
                    at[axis] = t;
                    line.push(f[pidx(at[0], at[1], at[2])]);
                }
                dt_1d(&line, sp[axis], &mut out);
                for t in 0..n {
                    at[axis] = t;
                    f[pidx(at[0], at[1], at[2])] = out[t];
                }
            }
        }
    }
    let mut dist = vec![0.0; mask.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                dist[mask.index(i, j, k)] = f[pidx(i + 1, j + 1, k + 1)].sqrt();
            }
        }
    }
    dist
}

/// Lower envelope of parabolas for one line of squared distances.
fn dt_1d(f: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let pos = |q: usize| q as f64 * h;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: replace the only parabola.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        out[q] = d * d + f[v[k]];
    }
}
