//! Boolean union of closed triangle meshes.
//!
//! Intersections are found with exact orientation predicates and keyed
//! symbolically by (edge of one mesh, face of the other), so both meshes
//! split along identical vertices. Split faces are retriangulated with a
//! constrained Delaunay triangulation in the face's barycentric plane, and
//! the resulting patches are kept or discarded by the generalized winding
//! number of the other mesh. Configurations with an exact zero predicate are
//! resolved by perturbing all vertices slightly and retrying.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::distance::FaceGrid;
use super::integrity::is_watertight;
use super::trimesh::UnionFind;
use super::winding::winding_number;
use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::{orient2d, orient3d, Aabb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnionOptions {
    /// Vertices closer than this are merged in the output, mm.
    pub weld_tol: f64,
    /// Seed for the perturbation used on degenerate configurations.
    pub seed: u64,
    /// Perturbed retries after the exact first attempt.
    pub max_retries: usize,
}

impl Default for UnionOptions {
    fn default() -> Self {
        UnionOptions { weld_tol: 1e-6, seed: 0, max_retries: 6 }
    }
}

/// Left fold of [`mesh_union`] over `meshes` in order.
pub fn mesh_union_all(meshes: &[TriMesh], opts: &UnionOptions) -> Result<TriMesh> {
    let (first, rest) = meshes
        .split_first()
        .ok_or_else(|| Error::Empty("mesh union of zero meshes".into()))?;
    if !is_watertight(first) {
        return Err(Error::Boolean("input 0 is not watertight".into()));
    }
    let mut acc = first.clone();
    for (i, m) in rest.iter().enumerate() {
        acc = mesh_union(&acc, m, opts).map_err(|e| match e {
            Error::Boolean(msg) => Error::Boolean(format!("input {}: {msg}", i + 1)),
            other => other,
        })?;
    }
    Ok(acc)
}

/// Boolean union of two watertight, consistently oriented meshes.
pub fn mesh_union(a: &TriMesh, b: &TriMesh, opts: &UnionOptions) -> Result<TriMesh> {
    if !is_watertight(a) || !is_watertight(b) {
        return Err(Error::Boolean("input is not watertight".into()));
    }
    if !a.bounds().overlaps(&b.bounds()) {
        return Ok(TriMesh::concat(&[a.clone(), b.clone()]));
    }
    let mut bounds = a.bounds();
    bounds.grow(&b.bounds().min);
    bounds.grow(&b.bounds().max);
    let scale = bounds.diagonal().max(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last = String::new();
    for attempt in 0..=opts.max_retries {
        let jitter = if attempt == 0 { 0.0 } else { 1e-9 * scale * 4f64.powi(attempt as i32 - 1) };
        match Attempt::new(a, b, jitter, &mut rng).run(opts) {
            Ok(m) => return Ok(m),
            Err(Error::Degenerate(msg)) => {
                log::debug!("union attempt {attempt} degenerate: {msg}");
                last = msg;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Boolean(format!(
        "unresolved degeneracy after {} perturbed retries: {last}",
        opts.max_retries
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Side {
    A,
    B,
}

/// Intersection point on an edge of one mesh.
#[derive(Debug, Clone, Copy)]
struct EdgeHit {
    side: Side,
    /// Global vertex ids, ascending.
    edge: (usize, usize),
    /// Parameter from `edge.0` to `edge.1`.
    t: f64,
}

#[derive(Default)]
struct FaceWork {
    points: Vec<usize>,
    segments: Vec<[usize; 2]>,
}

#[derive(Clone, Copy, PartialEq)]
enum Dup {
    No,
    Keep,
    Drop,
}

struct Attempt {
    /// Input vertices followed by intersection points.
    points: Vec<Vec3>,
    n_input: usize,
    faces_a: Vec<[usize; 3]>,
    faces_b: Vec<[usize; 3]>,
    hits: HashMap<usize, EdgeHit>,
    hit_ids: HashMap<(Side, (usize, usize), usize), usize>,
    work_a: BTreeMap<usize, FaceWork>,
    work_b: BTreeMap<usize, FaceWork>,
    segments: HashSet<(usize, usize)>,
}

fn deg(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}

fn ekey(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Exact edge/triangle crossing. `Ok(Some(t))` for a proper crossing of the
/// open triangle by the open segment, `Ok(None)` for no contact, `Err` when
/// the configuration touches a boundary exactly.
fn edge_crosses(p: &Vec3, q: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Result<Option<f64>> {
    let op = orient3d(a, b, c, p);
    let oq = orient3d(a, b, c, q);
    if (op > 0.0 && oq > 0.0) || (op < 0.0 && oq < 0.0) {
        return Ok(None);
    }
    let s = [orient3d(p, q, a, b), orient3d(p, q, b, c), orient3d(p, q, c, a)];
    let pos = s.iter().filter(|&&v| v > 0.0).count();
    let neg = s.iter().filter(|&&v| v < 0.0).count();
    if pos > 0 && neg > 0 {
        // The supporting line misses the triangle.
        return Ok(None);
    }
    if op == 0.0 || oq == 0.0 {
        return Err(deg("segment endpoint on triangle plane"));
    }
    if pos == 3 || neg == 3 {
        let t = op / (op - oq);
        return Ok(Some(t.clamp(1e-15, 1.0 - 1e-15)));
    }
    Err(deg("segment meets a triangle edge or vertex"))
}

/// Pairs of faces without a shared vertex whose interiors touch or cross.
pub fn self_intersections(mesh: &TriMesh) -> Vec<(usize, usize)> {
    let grid = FaceGrid::new(mesh);
    let mut cand = Vec::new();
    let mut out = Vec::new();
    for f in 0..mesh.faces.len() {
        let fv = mesh.faces[f];
        let box_f = Aabb::from_points(fv.iter().map(|&v| &mesh.vertices[v]));
        grid.query(&box_f, &mut cand);
        for &g in &cand {
            let gv = mesh.faces[g];
            if g <= f || fv.iter().any(|v| gv.contains(v)) {
                continue;
            }
            let [a, b, c] = gv.map(|i| mesh.vertices[i]);
            let [p, q, r] = fv.map(|i| mesh.vertices[i]);
            if [a, b, c].iter().all(|x| orient3d(&p, &q, &r, x) == 0.0) {
                if coplanar_overlap([p, q, r], [a, b, c]) {
                    out.push((f, g));
                }
                continue;
            }
            let hit = |x: &Vec3, y: &Vec3, t: [&Vec3; 3]| match edge_crosses(x, y, t[0], t[1], t[2]) {
                Ok(hit) => hit.is_some(),
                Err(_) => segment_touches(x, y, [*t[0], *t[1], *t[2]]),
            };
            if hit(&p, &q, [&a, &b, &c])
                || hit(&q, &r, [&a, &b, &c])
                || hit(&r, &p, [&a, &b, &c])
                || hit(&a, &b, [&p, &q, &r])
                || hit(&b, &c, [&p, &q, &r])
                || hit(&c, &a, [&p, &q, &r])
            {
                out.push((f, g));
            }
        }
    }
    out
}

/// Exact contact test for the degenerate outcomes of `edge_crosses`: an
/// endpoint on the plane must lie in the closed triangle.
fn segment_touches(p: &Vec3, q: &Vec3, tri: [Vec3; 3]) -> bool {
    let [a, b, c] = tri;
    let (op, oq) = (orient3d(&a, &b, &c, p), orient3d(&a, &b, &c, q));
    match (op == 0.0, oq == 0.0) {
        (true, true) => coplanar_overlap(tri, [*p, *q, *q]),
        (true, false) => coplanar_overlap(tri, [*p; 3]),
        (false, true) => coplanar_overlap(tri, [*q; 3]),
        // Proper crossing through an edge or vertex of the triangle.
        (false, false) => true,
    }
}

/// Exact overlap of two coplanar triangles, boundary contact included.
/// `s` may be degenerate (a segment or a point).
fn coplanar_overlap(t: [Vec3; 3], s: [Vec3; 3]) -> bool {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let drop = n.iamax();
    let flat = |p: &Vec3| {
        let (i, j) = match drop {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        [p[i], p[j]]
    };
    let t2 = t.map(|p| flat(&p));
    let s2 = s.map(|p| flat(&p));
    let side = |a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]| orient2d(*a, *b, *c);
    let segs_meet = |a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]| {
        let (d1, d2) = (side(a, b, c), side(a, b, d));
        let (d3, d4) = (side(c, d, a), side(c, d, b));
        if d1 == 0.0 && d2 == 0.0 {
            // Collinear: compare extents along the longer axis.
            let k = if (b[0] - a[0]).abs() >= (b[1] - a[1]).abs() { 0 } else { 1 };
            let (lo1, hi1) = (a[k].min(b[k]), a[k].max(b[k]));
            let (lo2, hi2) = (c[k].min(d[k]), c[k].max(d[k]));
            return lo1 <= hi2 && lo2 <= hi1;
        }
        d1 * d2 <= 0.0 && d3 * d4 <= 0.0
    };
    let inside = |p: &[f64; 2], tri: &[[f64; 2]; 3]| {
        let o = [side(&tri[0], &tri[1], p), side(&tri[1], &tri[2], p), side(&tri[2], &tri[0], p)];
        o.iter().all(|&v| v >= 0.0) || o.iter().all(|&v| v <= 0.0)
    };
    (0..3).any(|i| (0..3).any(|j| segs_meet(&t2[i], &t2[(i + 1) % 3], &s2[j], &s2[(j + 1) % 3])))
        || (side(&s2[0], &s2[1], &s2[2]) != 0.0 && inside(&t2[0], &s2))
        || inside(&s2[0], &t2)
}

impl Attempt {
    fn new(a: &TriMesh, b: &TriMesh, jitter: f64, rng: &mut ChaCha8Rng) -> Self {
        let norm = |p: &Vec3| [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
        let mut points = a.vertices.clone();
        let mut index: HashMap<[u64; 3], usize> = HashMap::with_capacity(points.len());
        for (i, p) in a.vertices.iter().enumerate() {
            index.entry(norm(p)).or_insert(i);
        }
        let remap: Vec<usize> = b
            .vertices
            .iter()
            .map(|p| {
                *index.entry(norm(p)).or_insert_with(|| {
                    points.push(*p);
                    points.len() - 1
                })
            })
            .collect();
        if jitter > 0.0 {
            for p in &mut points {
                let d = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                *p += d * jitter;
            }
        }
        Attempt {
            n_input: points.len(),
            points,
            faces_a: a.faces.clone(),
            faces_b: b.faces.iter().map(|f| f.map(|v| remap[v])).collect(),
            hits: HashMap::new(),
            hit_ids: HashMap::new(),
            work_a: BTreeMap::new(),
            work_b: BTreeMap::new(),
            segments: HashSet::new(),
        }
    }

    fn run(mut self, opts: &UnionOptions) -> Result<TriMesh> {
        let (dup_a, dup_b) = self.duplicates();
        let mesh_b = TriMesh { vertices: self.points.clone(), faces: self.faces_b.clone() };
        let grid = FaceGrid::new(&mesh_b);
        let mut cand = Vec::new();
        for fa in 0..self.faces_a.len() {
            if dup_a[fa] != Dup::No {
                continue;
            }
            let box_a = Aabb::from_points(self.faces_a[fa].iter().map(|&v| &self.points[v]));
            grid.query(&box_a, &mut cand);
            for &fb in &cand {
                if dup_b[fb] {
                    continue;
                }
                let box_b = Aabb::from_points(self.faces_b[fb].iter().map(|&v| &self.points[v]));
                if box_a.overlaps(&box_b) {
                    self.intersect_pair(fa, fb)?;
                }
            }
        }

        let frag_a = self.fragments(Side::A, &dup_a.iter().map(|&d| d).collect::<Vec<_>>())?;
        let dup_b_state: Vec<Dup> = dup_b.iter().map(|&d| if d { Dup::Drop } else { Dup::No }).collect();
        let frag_b = self.fragments(Side::B, &dup_b_state)?;

        let input_a = TriMesh { vertices: self.points[..self.n_input].to_vec(), faces: self.faces_a.clone() };
        let input_b = TriMesh { vertices: self.points[..self.n_input].to_vec(), faces: self.faces_b.clone() };
        let mut faces = self.select(&frag_a, &input_b)?;
        faces.extend(self.select(&frag_b, &input_a)?);

        let out = TriMesh { vertices: self.points, faces };
        if !is_watertight(&out) {
            return Err(deg("assembled union is not watertight"));
        }
        let out = out.compact();
        if opts.weld_tol > 0.0 {
            let welded = out.welded(opts.weld_tol);
            if is_watertight(&welded) {
                return Ok(welded);
            }
        }
        Ok(out)
    }

    /// Faces of B identical to a face of A. Same orientation keeps A's copy,
    /// opposite orientation drops both.
    fn duplicates(&self) -> (Vec<Dup>, Vec<bool>) {
        let sorted = |f: &[usize; 3]| {
            let mut s = *f;
            s.sort_unstable();
            s
        };
        let index: HashMap<[usize; 3], usize> =
            self.faces_a.iter().enumerate().map(|(i, f)| (sorted(f), i)).collect();
        let mut dup_a = vec![Dup::No; self.faces_a.len()];
        let mut dup_b = vec![false; self.faces_b.len()];
        for (j, g) in self.faces_b.iter().enumerate() {
            if let Some(&i) = index.get(&sorted(g)) {
                let f = self.faces_a[i];
                let same = (0..3).any(|r| [g[r], g[(r + 1) % 3], g[(r + 2) % 3]] == f);
                dup_a[i] = if same { Dup::Keep } else { Dup::Drop };
                dup_b[j] = true;
            }
        }
        (dup_a, dup_b)
    }

    /// Point where an edge of `side` crosses face `other` of the other mesh.
    fn hit_point(&mut self, side: Side, u: usize, v: usize, other: usize) -> Result<Option<usize>> {
        let edge = ekey(u, v);
        if let Some(&id) = self.hit_ids.get(&(side, edge, other)) {
            return Ok(Some(id));
        }
        let tri = match side {
            Side::A => self.faces_b[other],
            Side::B => self.faces_a[other],
        };
        let (p, q) = (self.points[edge.0], self.points[edge.1]);
        let [a, b, c] = tri.map(|i| self.points[i]);
        let Some(t) = edge_crosses(&p, &q, &a, &b, &c)? else {
            return Ok(None);
        };
        let id = self.points.len();
        self.points.push(p + (q - p) * t);
        self.hits.insert(id, EdgeHit { side, edge, t });
        self.hit_ids.insert((side, edge, other), id);
        Ok(Some(id))
    }

    fn intersect_pair(&mut self, fa: usize, fb: usize) -> Result<()> {
        let f = self.faces_a[fa];
        let g = self.faces_b[fb];
        let shared: Vec<usize> = f.iter().copied().filter(|v| g.contains(v)).collect();
        let pts = |ids: [usize; 3], s: &Self| ids.map(|i| s.points[i]);
        let mut found: Vec<usize> = Vec::new();
        match shared.len() {
            0 => {
                for k in 0..3 {
                    if let Some(id) = self.hit_point(Side::A, f[k], f[(k + 1) % 3], fb)? {
                        found.push(id);
                    }
                    if let Some(id) = self.hit_point(Side::B, g[k], g[(k + 1) % 3], fa)? {
                        found.push(id);
                    }
                }
                match found.len() {
                    0 => return Ok(()),
                    2 => {}
                    n => return Err(deg(format!("{n} crossing points for one face pair"))),
                }
            }
            1 => {
                let s = shared[0];
                let [ga, gb, gc] = pts(g, self);
                let [fa0, fb0, fc0] = pts(f, self);
                let f_rest: Vec<usize> = f.iter().copied().filter(|&v| v != s).collect();
                let g_rest: Vec<usize> = g.iter().copied().filter(|&v| v != s).collect();
                let of: Vec<f64> = f_rest.iter().map(|&v| orient3d(&ga, &gb, &gc, &self.points[v])).collect();
                let og: Vec<f64> = g_rest.iter().map(|&v| orient3d(&fa0, &fb0, &fc0, &self.points[v])).collect();
                if of.iter().chain(&og).any(|&o| o == 0.0) {
                    return Err(deg("faces sharing a vertex are coplanar at a corner"));
                }
                if of[0].signum() == of[1].signum() || og[0].signum() == og[1].signum() {
                    return Ok(());
                }
                if let Some(id) = self.hit_point(Side::A, f_rest[0], f_rest[1], fb)? {
                    found.push(id);
                }
                if let Some(id) = self.hit_point(Side::B, g_rest[0], g_rest[1], fa)? {
                    found.push(id);
                }
                match found.len() {
                    0 => return Ok(()),
                    1 => found.push(s),
                    _ => return Err(deg("faces sharing a vertex cross twice")),
                }
            }
            2 => {
                let x = *f.iter().find(|v| !shared.contains(v)).unwrap();
                let y = *g.iter().find(|v| !shared.contains(v)).unwrap();
                let [fa0, fb0, fc0] = pts(f, self);
                if orient3d(&fa0, &fb0, &fc0, &self.points[y]) != 0.0 {
                    return Ok(());
                }
                // Coplanar across a shared edge: fine when on opposite sides.
                let (s0, s1) = (self.points[shared[0]], self.points[shared[1]]);
                let n = (fb0 - fa0).cross(&(fc0 - fa0));
                let lift = s0 + n;
                let sx = orient3d(&s0, &s1, &lift, &self.points[x]);
                let sy = orient3d(&s0, &s1, &lift, &self.points[y]);
                if sx * sy < 0.0 {
                    return Ok(());
                }
                return Err(deg("coplanar overlapping faces share an edge"));
            }
            _ => return Ok(()),
        }
        let seg = [found[0], found[1]];
        for (work, face) in [(&mut self.work_a, fa), (&mut self.work_b, fb)] {
            let w = work.entry(face).or_default();
            w.points.extend_from_slice(&seg);
            w.segments.push(seg);
        }
        self.segments.insert(ekey(seg[0], seg[1]));
        Ok(())
    }

    /// Output triangles of one side with their duplicate state.
    fn fragments(&self, side: Side, dup: &[Dup]) -> Result<Vec<([usize; 3], Dup)>> {
        let (faces, work) = match side {
            Side::A => (&self.faces_a, &self.work_a),
            Side::B => (&self.faces_b, &self.work_b),
        };
        let mut out = Vec::with_capacity(faces.len());
        for (i, f) in faces.iter().enumerate() {
            match dup[i] {
                Dup::Drop => continue,
                Dup::Keep => out.push((*f, Dup::Keep)),
                Dup::No => match work.get(&i) {
                    None => out.push((*f, Dup::No)),
                    Some(w) => {
                        for t in self.retriangulate(side, f, w)? {
                            out.push((t, Dup::No));
                        }
                    }
                },
            }
        }
        Ok(out)
    }

    /// Splits a face along its intersection segments.
    fn retriangulate(&self, side: Side, f: &[usize; 3], work: &FaceWork) -> Result<Vec<[usize; 3]>> {
        const CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut ids: Vec<usize> = work.points.clone();
        ids.sort_unstable();
        ids.dedup();

        let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
        // Per CDT vertex: point id and bitmask of original edges it lies on.
        let mut verts: Vec<(usize, u8)> = Vec::with_capacity(ids.len() + 3);
        let insert = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>,
                          verts: &mut Vec<(usize, u8)>,
                          xy: [f64; 2],
                          id: usize,
                          mask: u8|
         -> Result<spade::handles::FixedVertexHandle> {
            let h = cdt
                .insert(Point2::new(xy[0], xy[1]))
                .map_err(|e| deg(format!("triangulation insert: {e:?}")))?;
            if h.index() < verts.len() {
                return Err(deg("two split points coincide in the face plane"));
            }
            verts.push((id, mask));
            Ok(h)
        };
        let mut corner_h = Vec::with_capacity(3);
        for k in 0..3 {
            corner_h.push(insert(&mut cdt, &mut verts, CORNERS[k], f[k], (1 << k) | (1 << ((k + 2) % 3)))?);
        }

        let [a, b, c] = f.map(|v| self.points[v]);
        let (e1, e2) = (b - a, c - a);
        let (d11, d12, d22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let den = d11 * d22 - d12 * d12;
        let mut on_edge: [Vec<(f64, spade::handles::FixedVertexHandle)>; 3] = Default::default();
        let mut handle_of: HashMap<usize, spade::handles::FixedVertexHandle> = HashMap::new();
        for k in 0..3 {
            handle_of.insert(f[k], corner_h[k]);
        }
        for &id in &ids {
            if f.contains(&id) {
                continue;
            }
            let edge_slot = self.hits.get(&id).filter(|h| h.side == side).and_then(|h| {
                (0..3).find_map(|k| {
                    let (u, v) = (f[k], f[(k + 1) % 3]);
                    if ekey(u, v) != h.edge {
                        None
                    } else if u == h.edge.0 {
                        Some((k, h.t))
                    } else {
                        Some((k, 1.0 - h.t))
                    }
                })
            });
            let h = match edge_slot {
                Some((k, t)) => {
                    let (p, q) = (CORNERS[k], CORNERS[(k + 1) % 3]);
                    let xy = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                    let h = insert(&mut cdt, &mut verts, xy, id, 1 << k)?;
                    on_edge[k].push((t, h));
                    h
                }
                None => {
                    let d = self.points[id] - a;
                    let (d1, d2) = (d.dot(&e1), d.dot(&e2));
                    const EPS: f64 = 1e-12;
                    let mut u = ((d22 * d1 - d12 * d2) / den).max(EPS);
                    let mut v = ((d11 * d2 - d12 * d1) / den).max(EPS);
                    let s = u + v;
                    if s > 1.0 - EPS {
                        u *= (1.0 - EPS) / s;
                        v *= (1.0 - EPS) / s;
                    }
                    insert(&mut cdt, &mut verts, [u, v], id, 0)?
                }
            };
            handle_of.insert(id, h);
        }

        let add = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>,
                       h0: spade::handles::FixedVertexHandle,
                       h1: spade::handles::FixedVertexHandle|
         -> Result<()> {
            if !cdt.can_add_constraint(h0, h1) {
                return Err(deg("crossing split constraints"));
            }
            cdt.add_constraint(h0, h1);
            if cdt.get_edge_from_neighbors(h0, h1).is_none() {
                return Err(deg("split constraint passes through a point"));
            }
            Ok(())
        };
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for k in 0..3 {
            let list = &mut on_edge[k];
            list.sort_by(|x, y| x.0.total_cmp(&y.0));
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(deg("two crossings at one edge parameter"));
            }
            let mut chain = vec![corner_h[k]];
            chain.extend(list.iter().map(|x| x.1));
            chain.push(corner_h[(k + 1) % 3]);
            for w in chain.windows(2) {
                add(&mut cdt, w[0], w[1])?;
                boundary.push(ekey(verts[w[0].index()].0, verts[w[1].index()].0));
            }
        }
        for s in &work.segments {
            add(&mut cdt, handle_of[&s[0]], handle_of[&s[1]])?;
        }

        let mut tris = Vec::new();
        for face in cdt.inner_faces() {
            let vs = face.vertices().map(|v| v.fix().index());
            if verts[vs[0]].1 & verts[vs[1]].1 & verts[vs[2]].1 != 0 {
                continue;
            }
            tris.push(vs.map(|i| verts[i].0));
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &tris {
            for k in 0..3 {
                *count.entry(ekey(t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        if boundary.iter().any(|e| count.get(e) != Some(&1)) {
            return Err(deg("split face boundary not covered exactly once"));
        }
        Ok(tris)
    }

    /// Groups undecided fragments into patches bounded by intersection
    /// curves and keeps those outside `other`.
    fn select(&self, frags: &[([usize; 3], Dup)], other: &TriMesh) -> Result<Vec<[usize; 3]>> {
        let n = frags.len();
        let mut uf = UnionFind::new(n);
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, (t, d)) in frags.iter().enumerate() {
            if *d != Dup::No {
                continue;
            }
            for k in 0..3 {
                let e = ekey(t[k], t[(k + 1) % 3]);
                if !self.segments.contains(&e) {
                    by_edge.entry(e).or_default().push(i);
                }
            }
        }
        for fs in by_edge.values() {
            for w in fs.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        // Largest fragment of each patch.
        let area = |t: &[usize; 3]| {
            let [a, b, c] = t.map(|v| self.points[v]);
            (b - a).cross(&(c - a)).norm()
        };
        let mut rep: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, (t, d)) in frags.iter().enumerate() {
            if *d != Dup::No {
                continue;
            }
            let r = uf.find(i);
            match rep.get(&r) {
                Some(&j) if area(&frags[j].0) >= area(t) => {}
                _ => {
                    rep.insert(r, i);
                }
            }
        }
        let mut keep_root: HashMap<usize, bool> = HashMap::new();
        for (&root, &i) in &rep {
            let [a, b, c] = frags[i].0.map(|v| self.points[v]);
            let centroid = (a + b + c) / 3.0;
            let w = winding_number(other, &centroid);
            if (w - 0.5).abs() < 0.1 {
                return Err(Error::Boolean(format!(
                    "ambiguous fragment classification (winding number {w:.3}) near ({:.4}, {:.4}, {:.4})",
                    centroid.x, centroid.y, centroid.z
                )));
            }
            keep_root.insert(root, w < 0.5);
        }
        Ok(frags
            .iter()
            .enumerate()
            .filter(|(i, (_, d))| match d {
                Dup::Keep => true,
                Dup::Drop => false,
                Dup::No => keep_root[&uf.find(*i)],
            })
            .map(|(_, (t, _))| *t)
            .collect())
    }
}
