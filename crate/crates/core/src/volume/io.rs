//! Volume file formats.
//!
//! `VMV1` raw format: one ASCII header line
//! `VMV1 <nx> <ny> <nz> <sx> <sy> <sz> <ox> <oy> <oz> <dtype>` (dtype `u8` or
//! `f32`), a newline, then the little-endian payload in x-fastest order.
//!
//! NIfTI-1 (read only): single-file `n+1` images, uncompressed, datatypes 2
//! (uint8) and 16 (float32). Only `pixdim` is used for geometry; the origin is
//! the zero vector.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{VolumeKind, VoxelVolume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    Vmv,
    Nifti,
}

impl VolumeFormat {
    fn sniff(path: &Path, bytes: &[u8]) -> Self {
        if bytes.starts_with(b"VMV1") {
            return VolumeFormat::Vmv;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("nii") => VolumeFormat::Nifti,
            Some("vmv") => VolumeFormat::Vmv,
            _ if bytes.len() >= 348 => VolumeFormat::Nifti,
            _ => VolumeFormat::Vmv,
        }
    }
}

/// Loads a volume. With `kind == BinaryMask` the values are thresholded at `> 0.5`.
pub fn load_volume(
    path: impl AsRef<Path>,
    format: Option<VolumeFormat>,
    kind: VolumeKind,
) -> Result<VoxelVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = format.unwrap_or_else(|| VolumeFormat::sniff(path, &bytes));
    let raw = match format {
        VolumeFormat::Vmv => parse_vmv(&bytes)?,
        VolumeFormat::Nifti => parse_nifti(&bytes)?,
    };
    Ok(match kind {
        VolumeKind::BinaryMask => raw.to_mask(),
        VolumeKind::ScalarField => raw,
    })
}

/// Writes the `VMV1` format: masks as `u8`, scalar fields as `f32`.
pub fn save_volume(path: impl AsRef<Path>, vol: &VoxelVolume) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_vmv(vol);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_vmv(vol: &VoxelVolume) -> Vec<u8> {
    let [nx, ny, nz] = vol.dims();
    let [sx, sy, sz] = vol.spacing();
    let [ox, oy, oz] = vol.origin();
    let dtype = if vol.is_binary() { "u8" } else { "f32" };
    let mut out = format!("VMV1 {nx} {ny} {nz} {sx} {sy} {sz} {ox} {oy} {oz} {dtype}\n").into_bytes();
    if vol.is_binary() {
        out.extend(vol.data().iter().map(|&v| v as u8));
    } else {
        for v in vol.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_vmv(bytes: &[u8]) -> Result<VoxelVolume> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("VMV1: missing header newline".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Format("VMV1: header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&"VMV1") {
        return Err(Error::Format("VMV1: bad magic".into()));
    }
    if fields.len() != 11 {
        return Err(Error::Format(format!(
            "VMV1: expected 11 header fields, found {}",
            fields.len()
        )));
    }
    let dim = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Format(format!("VMV1: bad dimension `{s}`")))
    };
    let real = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("VMV1: bad number `{s}`")))
    };
    let dims = [dim(fields[1])?, dim(fields[2])?, dim(fields[3])?];
    let spacing = [real(fields[4])?, real(fields[5])?, real(fields[6])?];
    let origin = [real(fields[7])?, real(fields[8])?, real(fields[9])?];
    let payload = &bytes[nl + 1..];
    let n = dims.iter().product::<usize>();
    let data: Vec<f32> = match fields[10] {
        "u8" => {
            if payload.len() != n {
                return Err(Error::DataLength {
                    expected: n,
                    found: payload.len(),
                });
            }
            payload.iter().map(|&b| b as f32).collect()
        }
        "f32" => {
            if payload.len() != 4 * n {
                return Err(Error::DataLength {
                    expected: n,
                    found: payload.len() / 4,
                });
            }
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        }
        other => return Err(Error::UnsupportedDatatype(format!("VMV1 dtype `{other}`"))),
    };
    let binary = fields[10] == "u8" && data.iter().all(|&v| v == 0.0 || v == 1.0);
    let kind = if binary {
        VolumeKind::BinaryMask
    } else {
        VolumeKind::ScalarField
    };
    VoxelVolume::new(dims, spacing, origin, data, kind)
}

fn parse_nifti(bytes: &[u8]) -> Result<VoxelVolume> {
    if bytes.len() < 348 {
        return Err(Error::Format(format!(
            "NIfTI: file too short for a header ({} bytes)",
            bytes.len()
        )));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == 348;
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348;
    if !le && !be {
        return Err(Error::Format("NIfTI: sizeof_hdr is not 348".into()));
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::Format("NIfTI: magic `n+1` absent".into()));
    }
    let i16_at = |o: usize| {
        let b = [bytes[o], bytes[o + 1]];
        if le {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    };
    let f32_at = |o: usize| {
        let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
        if le {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("NIfTI: bad dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for a in 0..3 {
        if (a as i16) < ndim {
            let d = i16_at(42 + 2 * a);
            if d < 1 {
                return Err(Error::Format(format!("NIfTI: bad dim[{}] = {d}", a + 1)));
            }
            dims[a] = d as usize;
        }
    }
    for a in 3..ndim as usize {
        if i16_at(42 + 2 * a) > 1 {
            return Err(Error::Format("NIfTI: only single 3-D volumes are supported".into()));
        }
    }
    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = f32_at(80 + 4 * a).abs() as f64;
        if p > 0.0 && p.is_finite() {
            *s = p;
        }
    }
    let datatype = i16_at(70);
    let vox_offset = f32_at(108);
    if !(vox_offset >= 348.0) {
        return Err(Error::Format(format!("NIfTI: bad vox_offset {vox_offset}")));
    }
    let off = vox_offset as usize;
    let n = dims.iter().product::<usize>();
    let payload = bytes.get(off..).unwrap_or(&[]);
    let slope = f32_at(112);
    let inter = f32_at(116);
    let scale = |v: f32| {
        if slope != 0.0 && slope.is_finite() {
            v * slope + inter
        } else {
            v
        }
    };
    let data: Vec<f32> = match datatype {
        2 => {
            if payload.len() < n {
                return Err(Error::DataLength {
                    expected: n,
                    found: payload.len(),
                });
            }
            payload[..n].iter().map(|&b| scale(b as f32)).collect()
        }
        16 => {
            if payload.len() < 4 * n {
                return Err(Error::DataLength {
                    expected: n,
                    found: payload.len() / 4,
                });
            }
            payload[..4 * n]
                .chunks_exact(4)
                .map(|c| {
                    let b = [c[0], c[1], c[2], c[3]];
                    scale(if le {
                        f32::from_le_bytes(b)
                    } else {
                        f32::from_be_bytes(b)
                    })
                })
                .collect()
        }
        other => {
            return Err(Error::UnsupportedDatatype(format!("NIfTI datatype {other}")));
        }
    };
    VoxelVolume::new(dims, spacing, [0.0; 3], data, VolumeKind::ScalarField)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Minimal little-endian NIfTI-1 writer for tests.
    pub(crate) fn nifti_bytes(dims: [i16; 3], pixdim: [f32; 3], datatype: i16, payload: &[u8], magic: &[u8; 4]) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        h[40..42].copy_from_slice(&3i16.to_le_bytes());
        for a in 0..3 {
            h[42 + 2 * a..44 + 2 * a].copy_from_slice(&dims[a].to_le_bytes());
            h[80 + 4 * a..84 + 4 * a].copy_from_slice(&pixdim[a].to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        h[108..112].copy_from_slice(&352f32.to_le_bytes());
        h[344..348].copy_from_slice(magic);
        h.extend_from_slice(payload);
        h
    }

    #[test]
    fn raw_u8_all_ones() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ones.vmv");
        let mut bytes = b"VMV1 2 2 2 0.5 0.5 0.5 0 0 0 u8\n".to_vec();
        bytes.extend([1u8; 8]);
        fs::write(&p, bytes).unwrap();
        let v = load_volume(&p, None, VolumeKind::BinaryMask).unwrap();
        assert_eq!(v.count_nonzero(), 8);
        assert_eq!(v.spacing(), [0.5; 3]);
    }

    #[test]
    fn raw_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.vmv");
        let mut bytes = b"VMV1 2 2 2 1 1 1 0 0 0 u8\n".to_vec();
        bytes.extend([1u8; 7]);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_volume(&p, None, VolumeKind::BinaryMask), Err(Error::DataLength { expected: 8, found: 7 })));

        let p = dir.path().join("dtype.vmv");
        fs::write(&p, b"VMV1 1 1 1 1 1 1 0 0 0 i64\n12345678").unwrap();
        assert!(matches!(load_volume(&p, None, VolumeKind::ScalarField), Err(Error::UnsupportedDatatype(_))));

        let missing = dir.path().join("nope.vmv");
        assert!(matches!(load_volume(&missing, None, VolumeKind::ScalarField), Err(Error::Io { .. })));
    }

    #[test]
    fn float_mask_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.vmv");
        let mut bytes = b"VMV1 2 1 1 1 1 1 0 0 0 f32\n".to_vec();
        bytes.extend(0.2f32.to_le_bytes());
        bytes.extend(0.7f32.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        let v = load_volume(&p, None, VolumeKind::BinaryMask).unwrap();
        // Oracle: per-voxel threshold at 0.5.
        let expect: Vec<f32> = [0.2f32, 0.7].iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect();
        assert_eq!(v.data(), &expect[..]);
        assert!(v.is_binary());
    }

    #[test]
    fn raw_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..24).map(|i| (i as f32) * 0.37 - 1.1).collect();
        let v = VoxelVolume::new([2, 3, 4], [0.3, 0.1 + 0.2, 1.0 / 3.0], [-1.5, 0.0, 7.25], data, VolumeKind::ScalarField).unwrap();
        let p1 = dir.path().join("a.vmv");
        save_volume(&p1, &v).unwrap();
        let back = load_volume(&p1, None, VolumeKind::ScalarField).unwrap();
        assert_eq!(back, v);
        let p2 = dir.path().join("b.vmv");
        save_volume(&p2, &back).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn nifti_reads_uint8_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.nii");
        fs::write(&p, nifti_bytes([2, 2, 1], [0.4, 0.4, 0.625], 2, &[0, 1, 1, 0], b"n+1\0")).unwrap();
        let v = load_volume(&p, None, VolumeKind::BinaryMask).unwrap();
        assert_eq!(v.dims(), [2, 2, 1]);
        assert_eq!(v.count_nonzero(), 2);
        assert!((v.spacing()[2] - 0.625).abs() < 1e-7);

        let payload: Vec<u8> = [0.1f32, 0.9].iter().flat_map(|f| f.to_le_bytes()).collect();
        let p = dir.path().join("f.nii");
        fs::write(&p, nifti_bytes([2, 1, 1], [1.0; 3], 16, &payload, b"n+1\0")).unwrap();
        let v = load_volume(&p, None, VolumeKind::BinaryMask).unwrap();
        assert_eq!(v.data(), &[0.0, 1.0]);
    }

    #[test]
    fn nifti_without_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.nii");
        fs::write(&p, nifti_bytes([1, 1, 1], [1.0; 3], 2, &[1], b"ni1\0")).unwrap();
        let err = load_volume(&p, Some(VolumeFormat::Nifti), VolumeKind::BinaryMask).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("magic")), "{err}");
    }

    #[test]
    fn nifti_unsupported_datatype() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i16.nii");
        fs::write(&p, nifti_bytes([1, 1, 1], [1.0; 3], 4, &[0, 0], b"n+1\0")).unwrap();
        assert!(matches!(
            load_volume(&p, None, VolumeKind::ScalarField),
            Err(Error::UnsupportedDatatype(_))
        ));
    }
}
