use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{triangle_area, Aabb, Vec3};

/// Indexed triangle mesh, counterclockwise-outward winding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

/// Undirected edge -> incident faces, keyed by sorted vertex pair.
pub type EdgeMap = HashMap<(usize, usize), Vec<usize>>;

impl TriMesh {
    /// Checks index bounds and repeated vertices within a face.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("face {fi} indexes past {n} vertices: {f:?}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        Ok(TriMesh { vertices, faces })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Un-normalized face normal (twice the area vector).
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let n = self.face_cross(f);
        let l = n.norm();
        if l > 0.0 {
            n / l
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        triangle_area(&a, &b, &c)
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (a + b + c) / 3.0
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Divergence-theorem volume; positive for closed outward-oriented meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c]))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn edge_map(&self) -> EdgeMap {
        let mut m: EdgeMap = HashMap::with_capacity(self.faces.len() * 2);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                m.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        m
    }

    /// Unique undirected edges in first-appearance order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::with_capacity(self.faces.len() * 2);
        let mut out = Vec::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    out.push([key.0, key.1]);
                }
            }
        }
        out
    }

    /// Pairs of faces sharing an edge that has exactly two incident faces,
    /// with the shared edge, in a deterministic order.
    pub fn interior_edges(&self) -> Vec<([usize; 2], [usize; 2])> {
        let map = self.edge_map();
        let mut out: Vec<([usize; 2], [usize; 2])> = map
            .into_iter()
            .filter(|(_, fs)| fs.len() == 2)
            .map(|((a, b), fs)| ([a, b], [fs[0], fs[1]]))
            .collect();
        out.sort_unstable();
        out
    }

    /// Per-vertex neighbour lists (sorted, no self).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for [a, b] in self.edges() {
            nb[a].push(b);
            nb[b].push(a);
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }

    /// Connected components over face adjacency (shared edges). Returns the
    /// component id of every face and the number of components.
    pub fn face_components(&self) -> (Vec<usize>, usize) {
        let n = self.faces.len();
        let mut uf = UnionFind::new(n);
        for fs in self.edge_map().values() {
            for w in fs.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut id = HashMap::new();
        let mut comp = vec![0; n];
        for f in 0..n {
            let r = uf.find(f);
            let next = id.len();
            comp[f] = *id.entry(r).or_insert(next);
        }
        (comp, id.len())
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }

    pub fn concat(meshes: &[TriMesh]) -> TriMesh {
        let mut out = TriMesh::default();
        for m in meshes {
            out.append(m);
        }
        out
    }

    pub fn flipped(&self) -> TriMesh {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Drops vertices not referenced by any face and renumbers.
    pub fn compact(&self) -> TriMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let mut nf = [0; 3];
            for k in 0..3 {
                let v = f[k];
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                }
                nf[k] = remap[v];
            }
            faces.push(nf);
        }
        TriMesh { vertices, faces }
    }

    /// Merges vertices closer than `tol` and drops faces that collapse.
    pub fn welded(&self, tol: f64) -> TriMesh {
        let n = self.vertices.len();
        if n == 0 {
            return self.clone();
        }
        let cell = tol.max(1e-300) * 2.0;
        let key = |p: &Vec3| {
            [
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            ]
        };
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut rep = vec![usize::MAX; n];
        let t2 = tol * tol;
        for i in 0..n {
            let p = self.vertices[i];
            let k = key(&p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(ids) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in ids {
                                if (self.vertices[j] - p).norm_squared() <= t2 {
                                    found = Some(j);
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
            match found {
                Some(j) => rep[i] = rep[j],
                None => {
                    rep[i] = i;
                    grid.entry(k).or_default().push(i);
                }
            }
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [rep[f[0]], rep[f[1]], rep[f[2]]])
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        TriMesh {
            vertices: self.vertices.clone(),
            faces,
        }
        .compact()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so results do not depend on union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
