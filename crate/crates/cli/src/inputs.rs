//! Input classification and the plain-text point format.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use vesselmesh::mesh::{read_mesh, write_obj, write_ply};
use vesselmesh::volume::{load_volume, VolumeKind};
use vesselmesh::{TriMesh, Vec3, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Mesh,
    Points,
    Mask,
}

impl InputKind {
    pub fn of(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        Ok(match ext.as_str() {
            "obj" | "ply" => InputKind::Mesh,
            "xyz" | "txt" | "pts" => InputKind::Points,
            "vmv" | "nii" => InputKind::Mask,
            _ => bail!("unrecognized input type for {} (expected .obj, .ply, .xyz, .txt, .pts, .vmv or .nii)", path.display()),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            InputKind::Mesh => "mesh",
            InputKind::Points => "points",
            InputKind::Mask => "mask",
        }
    }
}

pub enum Loaded {
    Mesh(TriMesh),
    Points(Vec<Vec3>),
    Mask(VoxelVolume),
}

pub fn load(path: &Path) -> Result<Loaded> {
    Ok(match InputKind::of(path)? {
        InputKind::Mesh => Loaded::Mesh(read_mesh(path)?),
        InputKind::Points => Loaded::Points(read_points(path)?),
        InputKind::Mask => Loaded::Mask(load_mask(path)?),
    })
}

pub fn load_mask(path: &Path) -> Result<VoxelVolume> {
    Ok(load_volume(path, None, VolumeKind::BinaryMask)?)
}

/// One `x y z` triple per line; blank lines and `#` comments are skipped.
pub fn read_points(path: &Path) -> Result<Vec<Vec3>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_points(&text).with_context(|| format!("points file {}", path.display()))
}

pub fn parse_points(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .with_context(|| format!("line {}: expected three numbers", n + 1))?;
        if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
            bail!("line {}: expected three finite numbers", n + 1);
        }
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => write_ply(path, mesh)?,
        _ => write_obj(path, mesh)?,
    }
    Ok(())
}
