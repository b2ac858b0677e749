//! The four fitting losses with analytic gradients, and their weighted sum.
//!
//! Every gradient is with respect to vertex (or point) positions, in the
//! same order as the input.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::graph::MeshGraph;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;
use crate::spatial::PointGrid;

/// Weights of chamfer, Laplacian, normal-consistency and edge terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub chamfer: f64,
    pub laplacian: f64,
    pub normal: f64,
    pub edge: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            chamfer: 1.0,
            laplacian: 0.1,
            normal: 0.01,
            edge: 0.1,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.chamfer, self.laplacian, self.normal, self.edge]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and >= 0: {w:?}")));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument("at least one loss weight must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chamfer {
    pub value: f64,
    /// Gradient with respect to the first set.
    pub grad: Vec<Vec3>,
    /// Nearest index in `b` for every point of `a`, and vice versa.
    pub a_to_b: Vec<usize>,
    pub b_to_a: Vec<usize>,
}

/// Symmetric mean squared nearest-neighbour distance, mm².
pub fn chamfer_loss(a: &[Vec3], b: &[Vec3]) -> Result<Chamfer> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer needs two nonempty point sets".into()));
    }
    let grid_b = PointGrid::new(b);
    Ok(chamfer_with_grid(a, &grid_b))
}

pub(crate) fn chamfer_with_grid(a: &[Vec3], grid_b: &PointGrid) -> Chamfer {
    let b = grid_b.points();
    let grid_a = PointGrid::new(a);
    let fwd: Vec<(usize, f64)> = a.par_iter().map(|p| grid_b.nearest(p)).collect();
    let bwd: Vec<(usize, f64)> = b.par_iter().map(|p| grid_a.nearest(p)).collect();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sum_f: f64 = fwd.iter().map(|x| x.1).sum();
    let sum_b: f64 = bwd.iter().map(|x| x.1).sum();
    let mut grad = vec![Vec3::zeros(); a.len()];
    for (i, &(j, _)) in fwd.iter().enumerate() {
        grad[i] += (a[i] - b[j]) * (2.0 / na);
    }
    for (j, &(i, _)) in bwd.iter().enumerate() {
        grad[i] += (a[i] - b[j]) * (2.0 / nb);
    }
    Chamfer {
        value: sum_f / na + sum_b / nb,
        grad,
        a_to_b: fwd.into_iter().map(|x| x.0).collect(),
        b_to_a: bwd.into_iter().map(|x| x.0).collect(),
    }
}

/// Connectivity reused across loss evaluations of one mesh.
#[derive(Debug, Clone)]
pub struct MeshTopology {
    pub faces: Vec<[usize; 3]>,
    pub neighbors: Vec<Vec<usize>>,
    pub edges: Vec<[usize; 2]>,
    /// Shared edge and its two faces.
    pub interior: Vec<([usize; 2], [usize; 2])>,
}

impl MeshTopology {
    pub fn new(mesh: &TriMesh) -> Self {
        MeshTopology {
            faces: mesh.faces.clone(),
            neighbors: mesh.vertex_neighbors(),
            edges: mesh.edges(),
            interior: mesh.interior_edges(),
        }
    }
}

/// Mean squared offset of every vertex from its neighbours' centroid.
pub fn laplacian_loss(graph: &MeshGraph) -> Result<LossGrad> {
    laplacian_at(&MeshTopology::new(&graph.mesh), &graph.mesh.vertices)
}

pub(crate) fn laplacian_at(topo: &MeshTopology, p: &[Vec3]) -> Result<LossGrad> {
    let n = p.len();
    if let Some(i) = topo.neighbors.iter().position(|nb| nb.is_empty()) {
        return Err(Error::InvalidArgument(format!("laplacian: vertex {i} has no neighbours")));
    }
    let delta: Vec<Vec3> = topo
        .neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().fold(Vec3::zeros(), |s, &j| s + p[j]) / nb.len() as f64 - p[i])
        .collect();
    let value = delta.iter().map(|d| d.norm_squared()).sum::<f64>() / n as f64;
    let mut grad = vec![Vec3::zeros(); n];
    let s = 2.0 / n as f64;
    for (i, nb) in topo.neighbors.iter().enumerate() {
        grad[i] -= delta[i] * s;
        let share = delta[i] * (s / nb.len() as f64);
        for &j in nb {
            grad[j] += share;
        }
    }
    Ok(LossGrad { value, grad })
}

/// Sum over interior edges of `1 − cos` between the adjacent face normals.
pub fn normal_consistency_loss(mesh: &TriMesh) -> Result<LossGrad> {
    normal_consistency_at(&MeshTopology::new(mesh), &mesh.vertices)
}

pub(crate) fn normal_consistency_at(topo: &MeshTopology, p: &[Vec3]) -> Result<LossGrad> {
    let cross: Vec<Vec3> = topo
        .faces
        .iter()
        .map(|&[a, b, c]| (p[b] - p[a]).cross(&(p[c] - p[a])))
        .collect();
    let mut value = 0.0;
    let mut grad = vec![Vec3::zeros(); p.len()];
    // d(1 - n0·n1)/d(c0) = -(n1 - cos·n0)/|c0|, then through c = e1 × e2.
    let push = |f: usize, g: Vec3, grad: &mut [Vec3]| {
        let [a, b, c] = topo.faces[f];
        let e1 = p[b] - p[a];
        let e2 = p[c] - p[a];
        let gb = e2.cross(&g);
        let gc = g.cross(&e1);
        grad[b] += gb;
        grad[c] += gc;
        grad[a] -= gb + gc;
    };
    for &(_, [f0, f1]) in &topo.interior {
        let (l0, l1) = (cross[f0].norm(), cross[f1].norm());
        if l0 == 0.0 || l1 == 0.0 {
            let f = if l0 == 0.0 { f0 } else { f1 };
            return Err(Error::Degenerate(format!("normal consistency: face {f} has zero area")));
        }
        let (n0, n1) = (cross[f0] / l0, cross[f1] / l1);
        let cos = n0.dot(&n1);
        value += 1.0 - cos;
        push(f0, -(n1 - n0 * cos) / l0, &mut grad);
        push(f1, -(n0 - n1 * cos) / l1, &mut grad);
    }
    Ok(LossGrad { value, grad })
}

/// Mean squared edge length.
pub fn edge_loss(graph: &MeshGraph) -> Result<LossGrad> {
    edge_at(&MeshTopology::new(&graph.mesh), &graph.mesh.vertices)
}

pub(crate) fn edge_at(topo: &MeshTopology, p: &[Vec3]) -> Result<LossGrad> {
    if topo.edges.is_empty() {
        return Err(Error::Empty("edge loss needs at least one edge".into()));
    }
    let m = topo.edges.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![Vec3::zeros(); p.len()];
    for &[a, b] in &topo.edges {
        let d = p[a] - p[b];
        value += d.norm_squared();
        grad[a] += d * (2.0 / m);
        grad[b] -= d * (2.0 / m);
    }
    Ok(LossGrad { value: value / m, grad })
}

/// One fixed barycentric sample per face, drawn from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSamples {
    bary: Vec<[f64; 3]>,
}

impl FaceSamples {
    pub fn new(faces: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bary = (0..faces)
            .map(|_| {
                let s = rng.random::<f64>().sqrt();
                let r2 = rng.random::<f64>();
                [1.0 - s, s * (1.0 - r2), s * r2]
            })
            .collect();
        FaceSamples { bary }
    }

    /// Vertices followed by one sample per face.
    pub fn points(&self, faces: &[[usize; 3]], p: &[Vec3]) -> Vec<Vec3> {
        let mut out = p.to_vec();
        out.extend(faces.iter().zip(&self.bary).map(|(f, w)| p[f[0]] * w[0] + p[f[1]] * w[1] + p[f[2]] * w[2]));
        out
    }

    /// Folds a gradient over `points` back onto the vertices.
    pub fn pull_back(&self, faces: &[[usize; 3]], grad: &[Vec3], vertices: usize) -> Vec<Vec3> {
        let mut out = grad[..vertices].to_vec();
        for (k, (f, w)) in faces.iter().zip(&self.bary).enumerate() {
            let g = grad[vertices + k];
            for c in 0..3 {
                out[f[c]] += g * w[c];
            }
        }
        out
    }
}

/// The chamfer point set of a mesh: vertices plus one seeded sample per face.
pub fn chamfer_points(mesh: &TriMesh, seed: u64) -> Vec<Vec3> {
    FaceSamples::new(mesh.faces.len(), seed).points(&mesh.faces, &mesh.vertices)
}

/// Component values of one total-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub chamfer: f64,
    pub laplacian: f64,
    pub normal: f64,
    pub edge: f64,
}

/// Mesh topology, face samples and target index for repeated evaluation.
pub struct LossContext<'a> {
    pub topology: MeshTopology,
    samples: FaceSamples,
    target: PointGrid<'a>,
    weights: LossWeights,
}

impl<'a> LossContext<'a> {
    pub fn new(mesh: &TriMesh, target: &'a [Vec3], weights: LossWeights, seed: u64) -> Result<Self> {
        weights.validate()?;
        if target.is_empty() {
            return Err(Error::Empty("target point set".into()));
        }
        Ok(LossContext {
            topology: MeshTopology::new(mesh),
            samples: FaceSamples::new(mesh.faces.len(), seed),
            target: PointGrid::new(target),
            weights,
        })
    }

    /// Weighted sum and its gradient; terms with zero weight are skipped.
    pub fn evaluate(&self, p: &[Vec3]) -> Result<(LossBreakdown, Vec<Vec3>)> {
        let w = self.weights;
        let mut out = LossBreakdown::default();
        let mut grad = vec![Vec3::zeros(); p.len()];
        let mut add = |g: &[Vec3], s: f64| {
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x * s;
            }
        };
        if w.chamfer > 0.0 {
            let pts = self.samples.points(&self.topology.faces, p);
            let c = chamfer_with_grid(&pts, &self.target);
            out.chamfer = c.value;
            add(&self.samples.pull_back(&self.topology.faces, &c.grad, p.len()), w.chamfer);
        }
        if w.laplacian > 0.0 {
            let l = laplacian_at(&self.topology, p)?;
            out.laplacian = l.value;
            add(&l.grad, w.laplacian);
        }
        if w.normal > 0.0 {
            let l = normal_consistency_at(&self.topology, p)?;
            out.normal = l.value;
            add(&l.grad, w.normal);
        }
        if w.edge > 0.0 {
            let l = edge_at(&self.topology, p)?;
            out.edge = l.value;
            add(&l.grad, w.edge);
        }
        out.total = w.chamfer * out.chamfer + w.laplacian * out.laplacian + w.normal * out.normal + w.edge * out.edge;
        Ok((out, grad))
    }
}

/// Weighted total loss of `graph` against `target`; the chamfer term uses
/// vertices plus one seeded sample per face.
pub fn total_loss(graph: &MeshGraph, target: &[Vec3], weights: LossWeights, seed: u64) -> Result<(LossBreakdown, Vec<Vec3>)> {
    LossContext::new(&graph.mesh, target, weights, seed)?.evaluate(&graph.mesh.vertices)
}
