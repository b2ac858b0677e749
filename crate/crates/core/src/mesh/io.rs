//! OBJ (ASCII) and PLY (binary little-endian) mesh files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Writes `v x y z` / `f i j k` lines with 1-based indices. Coordinates use
/// the shortest representation that round-trips exactly.
pub fn write_obj(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

pub(crate) fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for p in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub(crate) fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Format(format!("OBJ line {}: bad vertex", ln + 1)))?;
                if c.len() != 3 {
                    return Err(Error::Format(format!("OBJ line {}: vertex needs 3 coordinates", ln + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| Error::Format(format!("OBJ line {}: bad face index `{tok}`", ln + 1)))?;
                    let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(Error::Format(format!("OBJ line {}: face index out of range", ln + 1)));
                    }
                    idx.push(i as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::Format(format!("OBJ line {}: face needs 3 indices", ln + 1)));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Binary little-endian PLY with float32 vertices and int32 face indices.
pub fn write_ply(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .into_bytes();
    for p in &mesh.vertices {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3u8);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the PLY subset written by [`write_ply`]: binary little-endian,
/// float x/y/z vertex properties (extra float properties are skipped) and a
/// `list uchar int` face property.
pub fn read_ply(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = b"end_header\n";
    let hdr_end = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| Error::Format("PLY: missing end_header".into()))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..hdr_end])
        .map_err(|_| Error::Format("PLY: header is not ASCII".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::Format("PLY: bad magic".into()));
    }
    let mut nv = 0usize;
    let mut nf = 0usize;
    let mut vprops = 0usize;
    let mut current = "";
    for l in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, ..] if *fmt != "binary_little_endian" => {
                return Err(Error::Format(format!("PLY: unsupported format `{fmt}`")));
            }
            ["element", "vertex", n] => {
                nv = n.parse().map_err(|_| Error::Format("PLY: bad vertex count".into()))?;
                current = "vertex";
            }
            ["element", "face", n] => {
                nf = n.parse().map_err(|_| Error::Format("PLY: bad face count".into()))?;
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", "float", _] | ["property", "float32", _] if current == "vertex" => vprops += 1,
            ["property", ty, _] if current == "vertex" => {
                return Err(Error::Format(format!("PLY: unsupported vertex property type `{ty}`")));
            }
            _ => {}
        }
    }
    if vprops < 3 {
        return Err(Error::Format("PLY: vertex needs x, y, z".into()));
    }
    let mut off = hdr_end;
    let need = |off: usize, n: usize| -> Result<()> {
        if off + n > bytes.len() {
            Err(Error::Format("PLY: truncated payload".into()))
        } else {
            Ok(())
        }
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        need(off, 4 * vprops)?;
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
        vertices.push(Vec3::new(f(off), f(off + 4), f(off + 8)));
        off += 4 * vprops;
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        need(off, 1)?;
        let k = bytes[off] as usize;
        off += 1;
        need(off, 4 * k)?;
        let idx: Vec<usize> = (0..k)
            .map(|j| i32::from_le_bytes(bytes[off + 4 * j..off + 4 * j + 4].try_into().unwrap()) as usize)
            .collect();
        off += 4 * k;
        for j in 1..k.saturating_sub(1) {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriMesh::new(vertices, faces)
}

/// Reads OBJ or PLY by extension.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(path),
        _ => read_obj(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::trimesh::tests::unit_cube;

    #[test]
    fn obj_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.obj");
        let m = unit_cube().map_points(|p| p * (1.0 / 3.0) + Vec3::new(0.1, -7.3, 1e-7));
        write_obj(&p, &m).unwrap();
        assert_eq!(read_obj(&p).unwrap(), m);
    }

    #[test]
    fn obj_polygons_and_slashes() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(parse_obj("v 0 0\n").is_err());
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let m = unit_cube();
        write_ply(&p, &m).unwrap();
        let back = read_ply(&p).unwrap();
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.vertices, m.vertices);
    }
}
