//! Mesh graphs, symmetric-normalized graph convolution, face unpooling and
//! icosphere initialization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;

/// A triangle mesh seen as a graph carrying one feature row per vertex.
///
/// The self-loop of `Â = A + I` is implicit: `neighbors` excludes the vertex
/// itself and `degrees[i] = neighbors[i].len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    pub mesh: TriMesh,
    features: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    degrees: Vec<f64>,
}

impl MeshGraph {
    pub fn new(mesh: TriMesh, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != mesh.vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "feature rows {} != vertex count {}",
                features.nrows(),
                mesh.vertices.len()
            )));
        }
        let neighbors = mesh.vertex_neighbors();
        let degrees = neighbors.iter().map(|n| (n.len() + 1) as f64).collect();
        Ok(MeshGraph {
            mesh,
            features,
            neighbors,
            degrees,
        })
    }

    /// Graph whose features are the vertex coordinates.
    pub fn from_mesh(mesh: TriMesh) -> Self {
        let features = coordinate_features(&mesh.vertices);
        MeshGraph::new(mesh, features).expect("row count matches by construction")
    }

    pub fn len(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.vertices.is_empty()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn set_features(&mut self, features: DMatrix<f64>) -> Result<()> {
        if features.nrows() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "feature rows {} != vertex count {}",
                features.nrows(),
                self.len()
            )));
        }
        self.features = features;
        Ok(())
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `D̂_ii`, the row sum of `Â`.
    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// Entry of `Â`: true on the diagonal and for mesh edges.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i == j || self.neighbors[i].binary_search(&j).is_ok()
    }

    /// `D̂^{-1/2} Â D̂^{-1/2} x`, accumulated per edge.
    pub fn propagate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.len(), "propagate: row count");
        let inv_sqrt: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.len() {
                let mut acc = x[(i, c)] * inv_sqrt[i];
                for &j in &self.neighbors[i] {
                    acc += x[(j, c)] * inv_sqrt[j];
                }
                out[(i, c)] = acc * inv_sqrt[i];
            }
        }
        out
    }
}

/// N×3 matrix of vertex coordinates.
pub fn coordinate_features(points: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |r, c| points[r][c])
}

/// Learnable weights of one graph-convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvLayer {
    /// `C_in × C_out`.
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
}

impl GraphConvLayer {
    pub fn new(weights: DMatrix<f64>, bias: Option<DVector<f64>>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite layer weight".into()));
        }
        if let Some(b) = &bias {
            if b.len() != weights.ncols() {
                return Err(Error::InvalidArgument(format!(
                    "bias length {} != output width {}",
                    b.len(),
                    weights.ncols()
                )));
            }
            if b.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidArgument("non-finite layer bias".into()));
            }
        }
        Ok(GraphConvLayer { weights, bias })
    }

    pub fn in_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_width(&self) -> usize {
        self.weights.ncols()
    }
}

/// `D̂^{-1/2} Â D̂^{-1/2} V Θ` (+ bias on every row).
pub fn graph_conv(graph: &MeshGraph, layer: &GraphConvLayer) -> Result<DMatrix<f64>> {
    if graph.features.ncols() != layer.in_width() {
        return Err(Error::InvalidArgument(format!(
            "feature width {} != layer input width {}",
            graph.features.ncols(),
            layer.in_width()
        )));
    }
    let mut out = graph.propagate(&(&graph.features * &layer.weights));
    if let Some(b) = &layer.bias {
        for mut row in out.row_iter_mut() {
            row += b.transpose();
        }
    }
    Ok(out)
}

/// Splits every face into four through its edge midpoints. Midpoint `k`
/// (index `V + k`, edges in `TriMesh::edges` order) takes the mean feature
/// of its edge; existing vertices and features are kept.
pub fn unpool(graph: &MeshGraph) -> MeshGraph {
    let (mesh, edges) = subdivide(&graph.mesh);
    let n = graph.len();
    let c = graph.features.ncols();
    let mut features = DMatrix::zeros(n + edges.len(), c);
    features.rows_mut(0, n).copy_from(&graph.features);
    for (k, [a, b]) in edges.iter().enumerate() {
        for col in 0..c {
            features[(n + k, col)] = 0.5 * (graph.features[(*a, col)] + graph.features[(*b, col)]);
        }
    }
    MeshGraph::new(mesh, features).expect("row count matches by construction")
}

/// 1-to-4 midpoint subdivision; returns the new mesh and the split edges.
fn subdivide(mesh: &TriMesh) -> (TriMesh, Vec<[usize; 2]>) {
    let edges = mesh.edges();
    let n = mesh.vertices.len();
    let index: std::collections::HashMap<(usize, usize), usize> =
        edges.iter().enumerate().map(|(k, e)| ((e[0], e[1]), n + k)).collect();
    let mid = |a: usize, b: usize| index[&(a.min(b), a.max(b))];
    let mut vertices = mesh.vertices.clone();
    vertices.extend(edges.iter().map(|[a, b]| (mesh.vertices[*a] + mesh.vertices[*b]) * 0.5));
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for &[a, b, c] in &mesh.faces {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    (TriMesh { vertices, faces }, edges)
}

/// Icosahedron refined `subdivisions` times, midpoints pushed to the sphere.
/// Features are the vertex coordinates.
pub fn make_icosphere(subdivisions: usize, radius: f64, center: Vec3) -> MeshGraph {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|p| Vec3::new(p[0], p[1], p[2]).normalize()).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = TriMesh { vertices, faces };
    for _ in 0..subdivisions {
        mesh = subdivide(&mesh).0;
        for v in &mut mesh.vertices {
            *v = v.normalize();
        }
    }
    for v in &mut mesh.vertices {
        *v = center + *v * radius;
    }
    MeshGraph::from_mesh(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euler(m: &TriMesh) -> i64 {
        m.vertices.len() as i64 - m.edges().len() as i64 + m.faces.len() as i64
    }

    /// Dense `D̂^{-1/2} Â D̂^{-1/2} V Θ` built entry by entry.
    pub(crate) fn dense_conv(g: &MeshGraph, layer: &GraphConvLayer) -> DMatrix<f64> {
        let n = g.len();
        let a_hat = DMatrix::<f64>::from_fn(n, n, |i, j| if g.adjacent(i, j) { 1.0 } else { 0.0 });
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / a_hat.row(i).sum().sqrt()
            } else {
                0.0
            }
        });
        let mut out = &d * &a_hat * &d * g.features() * &layer.weights;
        if let Some(b) = &layer.bias {
            for mut row in out.row_iter_mut() {
                row += b.transpose();
            }
        }
        out
    }

    #[test]
    fn icosphere_counts() {
        let g0 = make_icosphere(0, 1.0, Vec3::zeros());
        assert_eq!((g0.len(), g0.mesh.edges().len(), g0.mesh.faces.len()), (12, 30, 20));
        let g = make_icosphere(2, 3.0, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!((g.len(), g.mesh.edges().len(), g.mesh.faces.len()), (162, 480, 320));
        assert_eq!(euler(&g.mesh), 2);
        for v in &g.mesh.vertices {
            assert!(((v - Vec3::new(1.0, 2.0, 3.0)).norm() - 3.0).abs() < 1e-9);
        }
        assert!(g.mesh.signed_volume() > 0.0);
        assert!(crate::mesh::integrity_report(&g.mesh).watertight);
    }

    #[test]
    fn single_vertex_identity() {
        let mesh = TriMesh {
            vertices: vec![Vec3::new(1.0, 2.0, 3.0)],
            faces: vec![],
        };
        let g = MeshGraph::from_mesh(mesh);
        let layer = GraphConvLayer::new(DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(graph_conv(&g, &layer).unwrap(), *g.features());
    }

    #[test]
    fn two_vertices_average() {
        // A lone edge has no face; set the adjacency by hand.
        let mesh = TriMesh {
            vertices: vec![Vec3::zeros(), Vec3::x()],
            faces: vec![],
        };
        let mut g = MeshGraph::new(mesh, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        g.neighbors = vec![vec![1], vec![0]];
        g.degrees = vec![2.0, 2.0];
        let layer = GraphConvLayer::new(DMatrix::identity(2, 2), None).unwrap();
        let out = graph_conv(&g, &layer).unwrap();
        assert!((&out - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
        assert!((&out - dense_conv(&g, &layer)).amax() < 1e-15);
    }

    #[test]
    fn width_mismatch() {
        let g = make_icosphere(0, 1.0, Vec3::zeros());
        let layer = GraphConvLayer::new(DMatrix::identity(4, 4), None).unwrap();
        assert!(graph_conv(&g, &layer).is_err());
    }

    #[test]
    fn unpool_single_triangle() {
        let mesh = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let g = unpool(&MeshGraph::from_mesh(mesh));
        assert_eq!((g.len(), g.mesh.edges().len(), g.mesh.faces.len()), (6, 9, 4));
        let area: f64 = (0..4).map(|f| g.mesh.face_area(f)).sum();
        assert!((area - 0.5).abs() < 1e-15);
        for f in 0..4 {
            assert!(g.mesh.face_cross(f).z > 0.0);
        }
    }

    #[test]
    fn unpool_icosphere_counts_and_features() {
        let g = make_icosphere(2, 1.0, Vec3::zeros());
        let (v, e, f) = (g.len(), g.mesh.edges().len(), g.mesh.faces.len());
        let u = unpool(&g);
        assert_eq!(u.len(), v + e);
        assert_eq!(u.mesh.faces.len(), 4 * f);
        assert_eq!(u.mesh.edges().len(), 2 * e + 3 * f);
        assert_eq!((u.len(), u.mesh.edges().len(), u.mesh.faces.len()), (642, 1920, 1280));
        assert_eq!(euler(&u.mesh), 2);
        assert_eq!(u.features().rows(0, v), g.features().rows(0, v));
        let edges = g.mesh.edges();
        for (k, [a, b]) in edges.iter().enumerate() {
            let m = u.mesh.vertices[v + k];
            assert_eq!(m, (g.mesh.vertices[*a] + g.mesh.vertices[*b]) * 0.5);
            assert!((u.features().row(v + k) - (g.features().row(*a) + g.features().row(*b)) * 0.5).norm() < 1e-15);
        }
        let mut flat = g.clone();
        flat.set_features(DMatrix::from_element(v, 2, 7.5)).unwrap();
        assert!(unpool(&flat).features().iter().all(|&x| x == 7.5));
    }

    fn random_graph(rng: &mut ChaCha8Rng) -> (MeshGraph, GraphConvLayer) {
        let n = rng.random_range(1..=20usize);
        let c_in = rng.random_range(1..=8usize);
        let c_out = rng.random_range(1..=8usize);
        let vertices = (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let mut faces = Vec::new();
        if n >= 3 {
            for _ in 0..rng.random_range(0..2 * n) {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                let c = rng.random_range(0..n);
                if a != b && b != c && a != c {
                    faces.push([a, b, c]);
                }
            }
        }
        let mesh = TriMesh::new(vertices, faces).unwrap();
        let feats = DMatrix::from_fn(n, c_in, |_, _| rng.random_range(-1.0..1.0));
        let g = MeshGraph::new(mesh, feats).unwrap();
        let w = DMatrix::from_fn(c_in, c_out, |_, _| rng.random_range(-1.0..1.0));
        let b = rng.random::<bool>().then(|| DVector::from_fn(c_out, |_, _| rng.random_range(-1.0..1.0)));
        (g, GraphConvLayer::new(w, b).unwrap())
    }

    proptest! {
        #[test]
        fn sparse_equals_dense(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (g, layer) = random_graph(&mut rng);
            let sparse = graph_conv(&g, &layer).unwrap();
            let dense = dense_conv(&g, &layer);
            prop_assert!((sparse - dense).amax() <= 1e-12);
        }

        #[test]
        fn unpool_keeps_euler_and_surface(sub in 0usize..2, r in 0.5f64..4.0) {
            let g = make_icosphere(sub, r, Vec3::zeros());
            let u = unpool(&g);
            prop_assert_eq!(euler(&u.mesh), euler(&g.mesh));
            prop_assert!((u.mesh.area() - g.mesh.area()).abs() < 1e-9 * g.mesh.area());
        }

        #[test]
        fn adjacency_symmetric_and_degrees_consistent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (g, _) = random_graph(&mut rng);
            for i in 0..g.len() {
                prop_assert!(g.adjacent(i, i));
                let row = (0..g.len()).filter(|&j| g.adjacent(i, j)).count();
                prop_assert_eq!(row as f64, g.degree(i));
                for j in 0..g.len() {
                    prop_assert_eq!(g.adjacent(i, j), g.adjacent(j, i));
                }
            }
        }
    }
}
