//! Analytic vessel phantoms: paired voxel mask, fine surface mesh, key-point
//! tree and signed distance function, plus the tube/bifurcation patch
//! classifier.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kv::parse_kv;
use crate::mesh::{mesh_union_all, TriMesh, UnionOptions};
use crate::reconstruct::{stitch_rings, CrossSectionRing};
use crate::skeleton::{KeyPoint, KeyPointTree};
use crate::volume::{VolumeKind, VoxelVolume};

/// Ring spacing of phantom meshes, mm.
pub const MESH_RING_SPACING: f64 = 0.1;
/// Rays per ring of phantom meshes.
pub const MESH_RAYS: usize = 64;
/// Key-point spacing of phantom trees, mm.
pub const TREE_SPACING: f64 = 0.5;
/// Grid margins below this many voxels are rejected.
pub const MIN_MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    StraightTube,
    ArcTube,
    Bifurcation,
    Trifurcation,
    StenosedTube,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::StraightTube => "straight-tube",
            PhantomKind::ArcTube => "arc-tube",
            PhantomKind::Bifurcation => "bifurcation",
            PhantomKind::Trifurcation => "trifurcation",
            PhantomKind::StenosedTube => "stenosed-tube",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            PhantomKind::StraightTube,
            PhantomKind::ArcTube,
            PhantomKind::Bifurcation,
            PhantomKind::Trifurcation,
            PhantomKind::StenosedTube,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown phantom kind `{s}`")))
    }
}

/// Phantom geometry. The trunk runs from the origin along +z.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Trunk radius, mm.
    pub radius: f64,
    /// Trunk length (arc length for arc tubes), mm.
    pub length: f64,
    pub branch_radius: f64,
    pub branch_length: f64,
    /// Angle between each child and the trunk axis, degrees.
    pub branch_angle: f64,
    /// Arc tubes only.
    pub bend_radius: f64,
    /// Fractional radius reduction at the throat, in `[0, 1)`.
    pub stenosis_depth: f64,
    /// Axial extent of the narrowing, mm.
    pub stenosis_width: f64,
    /// Smooth-min blending radius at junctions, mm.
    pub blend: f64,
    pub spacing: f64,
    /// Empty voxels around the geometry.
    pub margin: usize,
    /// Fixed grid size; derived from the geometry when absent.
    pub dims: Option<[usize; 3]>,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            kind: PhantomKind::StraightTube,
            radius: 2.0,
            length: 20.0,
            branch_radius: 1.5,
            branch_length: 12.0,
            branch_angle: 40.0,
            bend_radius: 10.0,
            stenosis_depth: 0.5,
            stenosis_width: 6.0,
            blend: 0.5,
            spacing: 0.5,
            margin: 4,
            dims: None,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind) -> Self {
        PhantomSpec { kind, ..Default::default() }
    }

    /// Parses `key = value` text. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = PhantomSpec::default();
        for e in parse_kv(text)? {
            match e.key.as_str() {
                "kind" => s.kind = e.value.parse().map_err(|err: Error| e.err(err.to_string()))?,
                "radius" => s.radius = e.f64()?,
                "length" => s.length = e.f64()?,
                "branch_radius" => s.branch_radius = e.f64()?,
                "branch_length" => s.branch_length = e.f64()?,
                "branch_angle" => s.branch_angle = e.f64()?,
                "bend_radius" => s.bend_radius = e.f64()?,
                "stenosis_depth" => s.stenosis_depth = e.f64()?,
                "stenosis_width" => s.stenosis_width = e.f64()?,
                "blend" => s.blend = e.f64()?,
                "spacing" => s.spacing = e.f64()?,
                "margin" => s.margin = e.usize()?,
                "dims" => {
                    let d = e.usize_list()?;
                    if d.len() != 3 {
                        return Err(e.err("expected three integers"));
                    }
                    s.dims = Some([d[0], d[1], d[2]]);
                }
                "seed" => s.seed = e.u64()?,
                _ => return Err(e.unknown()),
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Round-trips through [`PhantomSpec::parse`].
    pub fn to_kv_string(&self) -> String {
        let mut out = format!(
            "kind = {}\nradius = {}\nlength = {}\nbranch_radius = {}\nbranch_length = {}\nbranch_angle = {}\n\
             bend_radius = {}\nstenosis_depth = {}\nstenosis_width = {}\nblend = {}\nspacing = {}\nmargin = {}\n",
            self.kind,
            self.radius,
            self.length,
            self.branch_radius,
            self.branch_length,
            self.branch_angle,
            self.bend_radius,
            self.stenosis_depth,
            self.stenosis_width,
            self.blend,
            self.spacing,
            self.margin
        );
        if let Some(d) = self.dims {
            out += &format!("dims = {} {} {}\n", d[0], d[1], d[2]);
        }
        out += &format!("seed = {}\n", self.seed);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let positive = [
            ("radius", self.radius),
            ("length", self.length),
            ("branch_radius", self.branch_radius),
            ("branch_length", self.branch_length),
            ("bend_radius", self.bend_radius),
            ("stenosis_width", self.stenosis_width),
            ("spacing", self.spacing),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be > 0"));
            }
        }
        if !(0.0..1.0).contains(&self.stenosis_depth) {
            return bad("stenosis_depth must be in [0, 1)".into());
        }
        if !(self.branch_angle > 0.0 && self.branch_angle <= 90.0) {
            return bad("branch_angle must be in (0, 90]".into());
        }
        if !(self.blend >= 0.0) {
            return bad("blend must be >= 0".into());
        }
        if self.margin < MIN_MARGIN {
            return bad(format!("margin must be at least {MIN_MARGIN} voxels"));
        }
        if self.kind == PhantomKind::ArcTube {
            if self.bend_radius <= self.radius {
                return bad("bend_radius must exceed radius".into());
            }
            if self.length / self.bend_radius > PI {
                return bad("arc tubes may turn at most 180 degrees".into());
            }
        }
        if self.kind == PhantomKind::StenosedTube && self.stenosis_width > self.length {
            return bad("stenosis_width must not exceed length".into());
        }
        Ok(())
    }

    fn throat_z(&self) -> f64 {
        0.5 * self.length
    }

    /// Radius of the stenosed tube at height `z`, and its derivative.
    fn stenosis_profile(&self, z: f64) -> (f64, f64) {
        let w = self.stenosis_width;
        let dz = z - self.throat_z();
        if dz.abs() >= 0.5 * w {
            return (self.radius, 0.0);
        }
        let a = 2.0 * PI * dz / w;
        let r = self.radius * (1.0 - self.stenosis_depth * 0.5 * (1.0 + a.cos()));
        let dr = self.radius * self.stenosis_depth * 0.5 * a.sin() * 2.0 * PI / w;
        (r, dr)
    }

    /// Directions of the child branches.
    fn child_directions(&self) -> Vec<Vec3> {
        let m = match self.kind {
            PhantomKind::Bifurcation => 2,
            PhantomKind::Trifurcation => 3,
            _ => 0,
        };
        let a = self.branch_angle.to_radians();
        (0..m)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / m as f64;
                Vec3::new(a.sin() * phi.cos(), a.sin() * phi.sin(), a.cos())
            })
            .collect()
    }
}

/// Line segment swept by a ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn distance(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (p - (self.a + ab * t)).norm() - self.radius
    }
}

/// Polynomial smooth minimum; equals `min` when the inputs differ by more
/// than `k`.
pub fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

/// Signed distance to a phantom solid, negative inside.
#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSdf {
    /// Flat-ended tube along +z with radius profile from the spec.
    Tube { spec: PhantomSpec },
    /// Flat-ended torus segment bending from +z toward +x.
    Arc { bend_radius: f64, radius: f64, angle: f64 },
    /// Smooth-min union of capsules.
    Fork { capsules: Vec<Capsule>, blend: f64 },
}

/// Exact distance to the intersection of two solids whose boundaries meet at
/// right angles.
fn intersect_orthogonal(d1: f64, d2: f64) -> f64 {
    d1.max(d2).min(0.0) + d1.max(0.0).hypot(d2.max(0.0))
}

impl PhantomSdf {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            PhantomSdf::Tube { spec } => {
                let (r, dr) = spec.stenosis_profile(p.z);
                let radial = (p.x.hypot(p.y) - r) / (1.0 + dr * dr).sqrt();
                intersect_orthogonal(radial, (-p.z).max(p.z - spec.length))
            }
            PhantomSdf::Arc { bend_radius, radius, angle } => {
                let q = p - Vec3::new(*bend_radius, 0.0, 0.0);
                let rho = q.x.hypot(q.z);
                let radial = (rho - bend_radius).hypot(q.y) - radius;
                let t_end = Vec3::new(angle.sin(), 0.0, angle.cos());
                let start = -p.z;
                let end = t_end.dot(&(p - arc_point(*bend_radius, *angle)));
                intersect_orthogonal(radial, start.max(end))
            }
            PhantomSdf::Fork { capsules, blend } => capsules
                .iter()
                .map(|c| c.distance(p))
                .reduce(|a, b| smooth_min(a, b, *blend))
                .unwrap_or(f64::INFINITY),
        }
    }

    /// Central-difference gradient.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g[a] = (self.distance(&(p + e)) - self.distance(&(p - e))) / (2.0 * h);
        }
        g
    }

    /// Newton steps along the gradient onto the zero level set.
    pub fn project(&self, p: &Vec3) -> Vec3 {
        let mut x = *p;
        for _ in 0..20 {
            let f = self.distance(&x);
            if f.abs() < 1e-9 {
                break;
            }
            let g = self.gradient(&x);
            let gg = g.norm_squared();
            if gg < 1e-12 {
                break;
            }
            x -= g * (f / gg);
        }
        x
    }
}

fn arc_point(bend_radius: f64, theta: f64) -> Vec3 {
    Vec3::new(bend_radius * (1.0 - theta.cos()), 0.0, bend_radius * theta.sin())
}

/// Ground-truth bundle for one phantom.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub mask: VoxelVolume,
    pub mesh: TriMesh,
    pub tree: KeyPointTree,
    pub sdf: PhantomSdf,
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (sdf, mesh, tree) = match spec.kind {
        PhantomKind::StraightTube | PhantomKind::StenosedTube => {
            let mut s = spec.clone();
            if s.kind == PhantomKind::StraightTube {
                s.stenosis_depth = 0.0;
            }
            let n = (s.length / MESH_RING_SPACING).ceil() as usize;
            let rings: Vec<CrossSectionRing> = (0..=n)
                .map(|i| {
                    let z = s.length * i as f64 / n as f64;
                    let r = s.stenosis_profile(z).0;
                    CrossSectionRing::new(Vec3::new(0.0, 0.0, z), Vec3::z(), Vec3::x(), Vec3::y(), vec![r; MESH_RAYS])
                })
                .collect();
            let mesh = stitch_rings(&rings, true)?;
            let tree = polyline_tree(&[Vec3::zeros(), Vec3::new(0.0, 0.0, s.length)], &[]);
            (PhantomSdf::Tube { spec: s }, mesh, tree?)
        }
        PhantomKind::ArcTube => {
            let angle = spec.length / spec.bend_radius;
            let n = (spec.length / MESH_RING_SPACING).ceil() as usize;
            let rings: Vec<CrossSectionRing> = (0..=n)
                .map(|i| {
                    let th = angle * i as f64 / n as f64;
                    let t = Vec3::new(th.sin(), 0.0, th.cos());
                    let u = Vec3::y();
                    CrossSectionRing::new(arc_point(spec.bend_radius, th), t, u, t.cross(&u), vec![spec.radius; MESH_RAYS])
                })
                .collect();
            let mesh = stitch_rings(&rings, true)?;
            let m = (spec.length / TREE_SPACING).round().max(1.0) as usize;
            let pts: Vec<Vec3> = (0..=m).map(|i| arc_point(spec.bend_radius, angle * i as f64 / m as f64)).collect();
            let tree = chain_tree(&pts)?;
            (PhantomSdf::Arc { bend_radius: spec.bend_radius, radius: spec.radius, angle }, mesh, tree)
        }
        PhantomKind::Bifurcation | PhantomKind::Trifurcation => {
            let junction = Vec3::new(0.0, 0.0, spec.length);
            let mut capsules = vec![Capsule { a: Vec3::zeros(), b: junction, radius: spec.radius }];
            let tips: Vec<Vec3> = spec.child_directions().iter().map(|d| junction + d * spec.branch_length).collect();
            for &tip in &tips {
                capsules.push(Capsule { a: junction, b: tip, radius: spec.branch_radius });
            }
            let sdf = PhantomSdf::Fork { capsules: capsules.clone(), blend: spec.blend };
            let parts: Vec<TriMesh> = capsules.par_iter().map(capsule_mesh).collect::<Result<_>>()?;
            let opts = UnionOptions { seed: spec.seed, ..Default::default() };
            let union = mesh_union_all(&parts, &opts)?;
            let mesh = union.map_points(|p| sdf.project(p));
            let tree = polyline_tree(&[Vec3::zeros(), junction], &tips)?;
            (sdf, mesh, tree)
        }
    };
    let mask = phantom_mask(spec, &sdf, &mesh)?;
    Ok(Phantom { spec: spec.clone(), mask, mesh, tree, sdf })
}

/// Key points at [`TREE_SPACING`] along `trunk`, then one chain per tip
/// hanging off the trunk's last point.
fn polyline_tree(trunk: &[Vec3], tips: &[Vec3]) -> Result<KeyPointTree> {
    let mut nodes = chain_tree(&sample_segment(trunk[0], trunk[1], true))?.nodes().to_vec();
    let junction = nodes.len() - 1;
    for &tip in tips {
        let mut parent = junction;
        for p in sample_segment(trunk[1], tip, false) {
            nodes.push(KeyPoint { position: p, parent: Some(parent) });
            parent = nodes.len() - 1;
        }
    }
    KeyPointTree::new(nodes)
}

fn sample_segment(a: Vec3, b: Vec3, include_start: bool) -> Vec<Vec3> {
    let m = ((b - a).norm() / TREE_SPACING).round().max(1.0) as usize;
    let first = if include_start { 0 } else { 1 };
    (first..=m).map(|i| a + (b - a) * (i as f64 / m as f64)).collect()
}

fn chain_tree(pts: &[Vec3]) -> Result<KeyPointTree> {
    KeyPointTree::new(
        pts.iter()
            .enumerate()
            .map(|(i, &position)| KeyPoint { position, parent: i.checked_sub(1) })
            .collect(),
    )
}

/// Closed capsule surface: cylinder rings plus latitude rings on both caps.
fn capsule_mesh(c: &Capsule) -> Result<TriMesh> {
    let axis = c.b - c.a;
    let len = axis.norm();
    let t = axis / len;
    let u = crate::geom::any_orthogonal(&t);
    let v = t.cross(&u);
    let r = c.radius;
    let lat = ((0.5 * PI * r) / MESH_RING_SPACING).ceil().max(2.0) as usize;
    let body = (len / MESH_RING_SPACING).ceil().max(1.0) as usize;
    let ring = |center: Vec3, radius: f64| CrossSectionRing::new(center, t, u, v, vec![radius; MESH_RAYS]);
    let mut rings = Vec::new();
    // Polar angle from the start pole; the pole itself is the cap apex.
    for i in 1..lat {
        let phi = 0.5 * PI * i as f64 / lat as f64;
        rings.push(ring(c.a - t * (r * phi.cos()), r * phi.sin()));
    }
    for i in 0..=body {
        rings.push(ring(c.a + axis * (i as f64 / body as f64), r));
    }
    for i in (1..lat).rev() {
        let phi = 0.5 * PI * i as f64 / lat as f64;
        rings.push(ring(c.b + t * (r * phi.cos()), r * phi.sin()));
    }
    rings[0].center = c.a - t * r;
    let last = rings.len() - 1;
    rings[last].center = c.b + t * r;
    stitch_rings(&rings, true)
}

/// Voxels whose centers satisfy `sdf <= 0`, on a grid whose centers sit at
/// half-voxel offsets from the coordinate planes.
fn phantom_mask(spec: &PhantomSpec, sdf: &PhantomSdf, mesh: &TriMesh) -> Result<VoxelVolume> {
    let bounds = mesh.bounds();
    let s = spec.spacing;
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let lo = ((bounds.min[a] / s).floor() - spec.margin as f64) * s + 0.5 * s;
        let hi = ((bounds.max[a] / s).ceil() + spec.margin as f64) * s - 0.5 * s;
        origin[a] = lo;
        dims[a] = ((hi - lo) / s).round() as usize + 1;
        if let Some(d) = spec.dims {
            let need_hi = bounds.max[a] + MIN_MARGIN as f64 * s;
            if lo + (d[a] as f64 - 1.0) * s < need_hi {
                return Err(Error::InvalidArgument(format!(
                    "geometry exceeds volume: axis {a} needs {} voxels",
                    ((need_hi - lo) / s).ceil() as usize + 1
                )));
            }
            dims[a] = d[a];
        }
    }
    let grid = VoxelVolume::empty_mask(dims, [s; 3], origin)?;
    let slab = dims[0] * dims[1];
    let data: Vec<f32> = (0..dims[2])
        .into_par_iter()
        .flat_map_iter(|k| {
            let grid = &grid;
            (0..slab).map(move |ij| {
                let p = grid.world_of_index(k * slab + ij);
                if sdf.distance(&p) <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    grid.with_data(data, VolumeKind::BinaryMask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchClass {
    Tube,
    Bifurcation,
}

impl fmt::Display for PatchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatchClass::Tube => "tube",
            PatchClass::Bifurcation => "bifurcation",
        })
    }
}

/// Bifurcation iff a node of degree ≥ 3 lies inside the axis-aligned cube;
/// trifurcations and higher also map to bifurcation.
pub fn classify_patch(tree: &KeyPointTree, center: &Vec3, half_width: f64) -> Result<PatchClass> {
    let inside: Vec<usize> = (0..tree.len())
        .filter(|&i| (tree.position(i) - center).abs().max() <= half_width)
        .collect();
    if inside.is_empty() {
        return Err(Error::InvalidArgument("patch contains no tree nodes".into()));
    }
    Ok(if inside.iter().any(|&i| tree.degree(i) >= 3) {
        PatchClass::Bifurcation
    } else {
        PatchClass::Tube
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::integrity_report;

    #[test]
    fn tube_mask_volume() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::StraightTube)).unwrap();
        let expect = PI * 4.0 * 20.0 / 0.125;
        let got = p.mask.count_nonzero() as f64;
        assert!((got - expect).abs() < 0.05 * expect, "{got} vs {expect}");
        let r = integrity_report(&p.mesh);
        assert!(r.watertight && r.orientation_consistent);
        assert_eq!(p.tree.len(), 41);
    }

    fn consistent(p: &Phantom, tol: f64) {
        for i in 0..p.mask.len() {
            if p.mask.data()[i] > 0.5 {
                assert!(p.sdf.distance(&p.mask.world_of_index(i)) <= 0.0);
            }
        }
        let worst = p.mesh.vertices.iter().map(|v| p.sdf.distance(v).abs()).fold(0.0, f64::max);
        assert!(worst <= tol, "{}: {worst}", p.spec.kind);
        assert!(p.mesh.signed_volume() > 0.0);
    }

    #[test]
    fn tubes_are_consistent() {
        for kind in [PhantomKind::StraightTube, PhantomKind::ArcTube, PhantomKind::StenosedTube] {
            let p = make_phantom(&PhantomSpec::new(kind)).unwrap();
            consistent(&p, 0.05);
            assert!(integrity_report(&p.mesh).watertight);
            assert!(p.mask.count_nonzero() > 0);
        }
    }

    #[test]
    fn forks() {
        for (kind, junction_degree) in [(PhantomKind::Bifurcation, 3), (PhantomKind::Trifurcation, 4)] {
            let p = make_phantom(&PhantomSpec::new(kind)).unwrap();
            let high: Vec<usize> = (0..p.tree.len()).filter(|&i| p.tree.degree(i) >= 3).collect();
            assert_eq!(high.len(), 1);
            assert_eq!(p.tree.degree(high[0]), junction_degree);
            let r = integrity_report(&p.mesh);
            assert!(r.watertight, "{r}");
            assert_eq!(r.components, 1);
            consistent(&p, 0.05);
        }
    }

    #[test]
    fn stenosis_throat_via_sdf() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::StenosedTube)).unwrap();
        let z = p.spec.throat_z();
        // Bisection for the zero crossing along +x at the throat.
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if p.sdf.distance(&Vec3::new(mid, 0.0, z)) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.0).abs() <= 0.05, "{lo}");
        let min_ring = p
            .mesh
            .vertices
            .iter()
            .filter(|v| v.z > 0.1 && v.z < 19.9)
            .map(|v| v.x.hypot(v.y))
            .fold(f64::INFINITY, f64::min);
        assert!((min_ring - 1.0).abs() <= 0.05);
    }

    #[test]
    fn deterministic() {
        let s = PhantomSpec::new(PhantomKind::Bifurcation);
        let a = make_phantom(&s).unwrap();
        let b = make_phantom(&s).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.tree, b.tree);
    }

    #[test]
    fn spec_parse_and_validation() {
        let s = PhantomSpec::parse("kind = arc-tube\nradius = 1.5\nbend_radius = 8\ndims = 10, 20, 30\n").unwrap();
        assert_eq!(s.kind, PhantomKind::ArcTube);
        assert_eq!(s.dims, Some([10, 20, 30]));
        assert_eq!(PhantomSpec::parse(&s.to_kv_string()).unwrap(), s);
        let e = PhantomSpec::parse("radius = 2\ncolour = red\n").unwrap_err().to_string();
        assert!(e.contains("colour") && e.contains("line 2"), "{e}");
        assert!(PhantomSpec::parse("stenosis_depth = 1.0").is_err());
        assert!(PhantomSpec::parse("branch_angle = 0").is_err());
        assert!(PhantomSpec::parse("radius = -1").is_err());
        assert!(PhantomSpec::parse("kind = hexfurcation").is_err());
    }

    #[test]
    fn undersized_volume_is_rejected() {
        let mut s = PhantomSpec::new(PhantomKind::StraightTube);
        s.dims = Some([6, 6, 10]);
        assert!(make_phantom(&s).unwrap_err().to_string().contains("exceeds"));
        s.dims = Some([20, 20, 50]);
        let p = make_phantom(&s).unwrap();
        assert_eq!(p.mask.dims(), [20, 20, 50]);
    }

    #[test]
    fn patch_classes() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::Bifurcation)).unwrap();
        assert_eq!(classify_patch(&p.tree, &Vec3::new(0.0, 0.0, 8.0), 3.0).unwrap(), PatchClass::Tube);
        assert_eq!(classify_patch(&p.tree, &Vec3::new(0.0, 0.0, 20.0), 3.0).unwrap(), PatchClass::Bifurcation);
        assert!(classify_patch(&p.tree, &Vec3::new(50.0, 0.0, 0.0), 3.0).is_err());
        // Degree-4 node.
        let c = Vec3::zeros();
        let mut nodes = vec![KeyPoint { position: c, parent: None }];
        for d in [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y()] {
            nodes.push(KeyPoint { position: d, parent: Some(0) });
        }
        let t = KeyPointTree::new(nodes).unwrap();
        assert_eq!(t.degree(0), 4);
        assert_eq!(classify_patch(&t, &c, 0.5).unwrap(), PatchClass::Bifurcation);
    }
}
