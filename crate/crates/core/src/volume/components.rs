use super::{VolumeKind, VoxelVolume};
use crate::error::{Error, Result};

/// 26-connected components of a binary mask.
///
/// Labels run `1..=count` in order of first visit by linear index; background
/// is 0.
pub fn connected_components(mask: &VoxelVolume) -> Result<(VoxelVolume, usize)> {
    let (labels, count) = label_components(mask)?;
    let data = labels.into_iter().map(|l| l as f32).collect();
    Ok((mask.with_data(data, VolumeKind::ScalarField)?, count))
}

pub(crate) fn label_components(mask: &VoxelVolume) -> Result<(Vec<u32>, usize)> {
    if !mask.is_binary() {
        return Err(Error::NotBinary);
    }
    let [nx, ny, nz] = mask.dims();
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if mask.data()[start] == 0.0 || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let [i, j, k] = mask.coords(idx);
            for dk in -1i64..=1 {
                let kk = k as i64 + dk;
                if kk < 0 || kk >= nz as i64 {
                    continue;
                }
                for dj in -1i64..=1 {
                    let jj = j as i64 + dj;
                    if jj < 0 || jj >= ny as i64 {
                        continue;
                    }
                    for di in -1i64..=1 {
                        let ii = i as i64 + di;
                        if ii < 0 || ii >= nx as i64 {
                            continue;
                        }
                        let n = mask.index(ii as usize, jj as usize, kk as usize);
                        if mask.data()[n] != 0.0 && labels[n] == 0 {
                            labels[n] = count;
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    Ok((labels, count as usize))
}

/// Dice overlap `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice(a: &VoxelVolume, b: &VoxelVolume) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimsMismatch(a.dims(), b.dims()));
    }
    if !a.is_binary() || !b.is_binary() {
        return Err(Error::NotBinary);
    }
    let mut na = 0usize;
    let mut nb = 0usize;
    let mut both = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}
