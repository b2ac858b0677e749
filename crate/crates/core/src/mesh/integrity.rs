//! Structural facts about a triangle mesh.

use std::collections::HashMap;
use std::fmt;

use super::TriMesh;

/// Degenerate-face area threshold, mm².
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityReport {
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    /// Every edge is shared by exactly two faces.
    pub watertight: bool,
    pub components: usize,
    pub euler: i64,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
    pub duplicate_faces: usize,
    pub degenerate_faces: usize,
    /// No directed edge is traversed twice.
    pub orientation_consistent: bool,
}

pub fn integrity_report(mesh: &TriMesh) -> IntegrityReport {
    let map = mesh.edge_map();
    let boundary = map.values().filter(|f| f.len() == 1).count();
    let nonmanifold = map.values().filter(|f| f.len() > 2).count();
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(mesh.faces.len() * 3);
    let mut consistent = true;
    for f in &mesh.faces {
        for k in 0..3 {
            let c = directed.entry((f[k], f[(k + 1) % 3])).or_insert(0);
            *c += 1;
            if *c > 1 {
                consistent = false;
            }
        }
    }
    let mut seen = HashMap::with_capacity(mesh.faces.len());
    let mut duplicates = 0;
    for f in &mesh.faces {
        let mut s = *f;
        s.sort_unstable();
        if seen.insert(s, ()).is_some() {
            duplicates += 1;
        }
    }
    let degenerate = (0..mesh.faces.len())
        .filter(|&f| mesh.face_area(f) < MIN_FACE_AREA)
        .count();
    let used = {
        let mut u = vec![false; mesh.vertices.len()];
        for f in &mesh.faces {
            for &v in f {
                u[v] = true;
            }
        }
        u.iter().filter(|&&b| b).count()
    };
    let components = if mesh.faces.is_empty() { 0 } else { mesh.face_components().1 };
    IntegrityReport {
        vertices: used,
        faces: mesh.faces.len(),
        edges: map.len(),
        watertight: !mesh.faces.is_empty() && boundary == 0 && nonmanifold == 0,
        components,
        euler: used as i64 - map.len() as i64 + mesh.faces.len() as i64,
        boundary_edges: boundary,
        nonmanifold_edges: nonmanifold,
        duplicate_faces: duplicates,
        degenerate_faces: degenerate,
        orientation_consistent: consistent,
    }
}

/// Every edge has exactly two incident faces.
pub(crate) fn is_watertight(mesh: &TriMesh) -> bool {
    !mesh.faces.is_empty() && mesh.edge_map().values().all(|f| f.len() == 2)
}

impl fmt::Display for IntegrityReport {
    /// `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices={}", self.vertices)?;
        writeln!(f, "faces={}", self.faces)?;
        writeln!(f, "edges={}", self.edges)?;
        writeln!(f, "watertight={}", self.watertight)?;
        writeln!(f, "components={}", self.components)?;
        writeln!(f, "euler={}", self.euler)?;
        writeln!(f, "boundary_edges={}", self.boundary_edges)?;
        writeln!(f, "nonmanifold_edges={}", self.nonmanifold_edges)?;
        writeln!(f, "duplicate_faces={}", self.duplicate_faces)?;
        writeln!(f, "degenerate_faces={}", self.degenerate_faces)?;
        writeln!(f, "orientation_consistent={}", self.orientation_consistent)
    }
}
