//! Mask-to-mesh annotation: key-point tree, per-branch centerlines, ray-cast
//! tube meshes and their boolean union.

use rayon::prelude::*;

use crate::centerline::{centerline_from_points, BranchCenterline, DEFAULT_DECIMATION, DEFAULT_SPACING};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kv::parse_kv;
use crate::mesh::{integrity_report, mesh_union_all, IntegrityReport, TriMesh, UnionOptions};
use crate::reconstruct::{reconstruct_branch, ReconstructConfig};
use crate::skeleton::{build_tree_with_report, prune_spurs, split_branches, thin_skeletonize, KeyPointTree};
use crate::volume::{distance_transform, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotateConfig {
    pub reconstruct: ReconstructConfig,
    /// Key-point decimation before spline fitting, mm; 0 disables it.
    pub decimation: f64,
    /// Centerline sample spacing, mm.
    pub spacing: f64,
    /// Spurs shorter than this multiple of the junction radius are pruned.
    pub spur_factor: f64,
    /// Extend branch ends along their tangent while inside the mask.
    pub extend_ends: bool,
    /// Longest end extension, mm.
    pub max_extension: f64,
    pub union: UnionOptions,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            reconstruct: ReconstructConfig::default(),
            decimation: DEFAULT_DECIMATION,
            spacing: DEFAULT_SPACING,
            spur_factor: 2.0,
            extend_ends: true,
            max_extension: 10.0,
            union: UnionOptions::default(),
        }
    }
}

impl AnnotateConfig {
    /// Overrides fields from `key = value` lines.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for e in parse_kv(text)? {
            match e.key.as_str() {
                "sigma_angular" => self.reconstruct.sigma_angular = e.f64()?,
                "sigma_longitudinal" => self.reconstruct.sigma_longitudinal = e.f64()?,
                "ray_step" => self.reconstruct.ray_step = e.f64()?,
                "rays" => self.reconstruct.rays = e.usize()?,
                "decimation" => self.decimation = e.f64()?,
                "spacing" => self.spacing = e.f64()?,
                "spur_factor" => self.spur_factor = e.f64()?,
                "max_extension" => self.max_extension = e.f64()?,
                "extend_ends" => {
                    self.extend_ends = match e.value.as_str() {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => return Err(e.err("expected true or false")),
                    }
                }
                _ => return Err(e.unknown()),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.reconstruct.validate()?;
        let positive = [("spacing", self.spacing), ("spur_factor", self.spur_factor)];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{k} must be > 0, got {v}")));
            }
        }
        for (k, v) in [("decimation", self.decimation), ("max_extension", self.max_extension)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{k} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Round-trips through [`AnnotateConfig::apply`].
    pub fn to_kv_string(&self) -> String {
        let r = &self.reconstruct;
        format!(
            "sigma_angular = {}\nsigma_longitudinal = {}\nray_step = {}\nrays = {}\ndecimation = {}\n\
             spacing = {}\nspur_factor = {}\nmax_extension = {}\nextend_ends = {}\n",
            r.sigma_angular,
            r.sigma_longitudinal,
            r.ray_step,
            r.rays,
            self.decimation,
            self.spacing,
            self.spur_factor,
            self.max_extension,
            self.extend_ends
        )
    }
}

#[derive(Debug, Clone)]
pub struct Annotation {
    pub mesh: TriMesh,
    pub tree: KeyPointTree,
    /// One centerline per reconstructed branch, trimmed as meshed.
    pub centerlines: Vec<BranchCenterline>,
    pub report: IntegrityReport,
    /// Branch indices (leaf order) whose reconstruction failed.
    pub skipped_branches: Vec<usize>,
    /// Sizes of skeleton components dropped in favor of the largest.
    pub dropped_components: Vec<usize>,
}

/// Runs the full pipeline. With `tree` absent the key points come from
/// thinning `mask`.
pub fn annotate(mask: &VoxelVolume, tree: Option<&KeyPointTree>, cfg: &AnnotateConfig) -> Result<Annotation> {
    cfg.validate()?;
    if !mask.is_binary() {
        return Err(Error::NotBinary);
    }
    if mask.count_nonzero() == 0 {
        return Err(Error::Skeleton("empty mask".into()));
    }
    let edt = distance_transform(mask);
    let radius_at = |p: &Vec3| edt_at(mask, &edt, p);

    let (tree, dropped_components) = match tree {
        Some(t) => (t.clone(), Vec::new()),
        None => tree_from_edt(mask, &edt, cfg.spur_factor)?,
    };

    let paths = split_branches(&tree);
    let mut centerlines = Vec::with_capacity(paths.len());
    for (b, path) in paths.iter().enumerate() {
        let mut pts: Vec<Vec3> = path.iter().map(|&i| tree.position(i)).collect();
        if cfg.extend_ends && pts.len() >= 2 {
            extend_end(&mut pts, mask, cfg.max_extension);
            pts.reverse();
            extend_end(&mut pts, mask, cfg.max_extension);
            pts.reverse();
        }
        if pts.len() < 2 {
            return Err(Error::Centerline(format!("branch {b} has a single key point")));
        }
        let decimation = (cfg.decimation > 0.0).then_some(cfg.decimation);
        let cl = centerline_from_points(&pts, decimation, cfg.spacing)?;
        // Siblings after the first keep only a short stretch of shared trunk.
        let shared = (0..b).map(|o| common_prefix(&paths[o], path)).max().unwrap_or(0);
        let cl = if b > 0 && shared > 0 {
            let fork = tree.position(path[shared - 1]);
            let overlap = (1.5 * radius_at(&fork)).max(2.0);
            trim_before(cl, &fork, overlap)
        } else {
            cl
        };
        centerlines.push(cl);
    }

    let meshes: Vec<Result<TriMesh>> =
        centerlines.par_iter().map(|cl| reconstruct_branch(cl, mask, &cfg.reconstruct)).collect();
    let mut parts = Vec::new();
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    let mut first_err = None;
    for (b, (m, cl)) in meshes.into_iter().zip(centerlines).enumerate() {
        match m {
            Ok(m) => {
                parts.push(m);
                kept.push(cl);
            }
            Err(e) => {
                log::warn!("branch {b} skipped: {e}");
                skipped.push(b);
                first_err.get_or_insert(e);
            }
        }
    }
    if parts.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::Reconstruct("no branches".into())));
    }
    let mesh = mesh_union_all(&parts, &cfg.union)?;
    let report = integrity_report(&mesh);
    Ok(Annotation {
        mesh,
        tree,
        centerlines: kept,
        report,
        skipped_branches: skipped,
        dropped_components,
    })
}

/// Key-point tree of a mask by thinning, with spurs shorter than
/// `spur_factor` times the local distance-transform radius pruned. Also
/// returns the sizes of dropped skeleton components.
pub fn extract_tree(mask: &VoxelVolume, spur_factor: f64) -> Result<(KeyPointTree, Vec<usize>)> {
    if !mask.is_binary() {
        return Err(Error::NotBinary);
    }
    if mask.count_nonzero() == 0 {
        return Err(Error::Skeleton("empty mask".into()));
    }
    tree_from_edt(mask, &distance_transform(mask), spur_factor)
}

fn tree_from_edt(mask: &VoxelVolume, edt: &[f64], spur_factor: f64) -> Result<(KeyPointTree, Vec<usize>)> {
    let points = thin_skeletonize(mask)?;
    let built = build_tree_with_report(&points, None, mask)?;
    if !built.dropped_components.is_empty() {
        log::warn!("skeleton: dropped components of sizes {:?}", built.dropped_components);
    }
    let min_spur = mask.spacing().iter().cloned().fold(0.0, f64::max);
    let pruned = prune_spurs(&built.tree, |j| (spur_factor * edt_at(mask, edt, j)).max(min_spur))?;
    Ok((pruned, built.dropped_components))
}

fn edt_at(mask: &VoxelVolume, edt: &[f64], p: &Vec3) -> f64 {
    let q = mask.to_voxel(p);
    let d = mask.dims();
    let idx = [0, 1, 2].map(|a| (q[a].round().max(0.0) as usize).min(d[a] - 1));
    edt[mask.index(idx[0], idx[1], idx[2])]
}

fn common_prefix(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Thinning stops short of the mask ends; march along the end tangent in
/// 0.2 mm steps while occupancy stays ≥ 0.5.
fn extend_end(pts: &mut Vec<Vec3>, mask: &VoxelVolume, max_len: f64) {
    let end = *pts.last().expect("nonempty");
    // Tangent from the point roughly 2 mm back.
    let mut back = pts.len() - 1;
    while back > 0 && (end - pts[back]).norm() < 2.0 {
        back -= 1;
    }
    let dir = end - pts[back];
    if dir.norm() < 1e-9 {
        return;
    }
    let dir = dir.normalize();
    let step = 0.2;
    let mut last = None;
    let mut s = step;
    while s <= max_len {
        let p = end + dir * s;
        if mask.sample(&p) < 0.5 {
            break;
        }
        last = Some(p);
        s += step;
    }
    if let Some(p) = last {
        pts.push(p);
    }
}

/// Drops samples lying more than `overlap` (arc length) before the sample
/// nearest `fork`.
fn trim_before(mut cl: BranchCenterline, fork: &Vec3, overlap: f64) -> BranchCenterline {
    let nearest = (0..cl.samples.len())
        .min_by(|&a, &b| {
            let da = (cl.samples[a].position - fork).norm_squared();
            let db = (cl.samples[b].position - fork).norm_squared();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap_or(0);
    let keep_back = (overlap / cl.arc_spacing).ceil() as usize;
    let start = nearest.saturating_sub(keep_back);
    cl.samples.drain(..start);
    cl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_phantom, PhantomKind, PhantomSpec};

    #[test]
    fn config_round_trip_and_unknown_key() {
        let mut c = AnnotateConfig::default();
        c.apply("sigma_angular = 2.5\nray_step = 0.1\nextend_ends = false\n").unwrap();
        assert_eq!(c.reconstruct.sigma_angular, 2.5);
        assert_eq!(c.reconstruct.ray_step, 0.1);
        assert!(!c.extend_ends);
        let mut d = AnnotateConfig::default();
        d.apply(&c.to_kv_string()).unwrap();
        assert_eq!(c, d);
        let e = AnnotateConfig::default().apply("x = 1\nwidth = 2\n").unwrap_err();
        assert_eq!(e.to_string(), "config line 1: unknown key `x`");
        let bad = AnnotateConfig {
            spacing: 0.0,
            ..AnnotateConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn straight_tube() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::StraightTube)).unwrap();
        let a = annotate(&p.mask, None, &AnnotateConfig::default()).unwrap();
        assert!(a.report.watertight, "{}", a.report);
        assert_eq!(a.report.components, 1);
        assert_eq!(a.centerlines.len(), 1);
        let worst = a.mesh.vertices.iter().map(|v| p.sdf.distance(v).abs()).fold(0.0, f64::max);
        assert!(worst < 0.5, "{worst}");
    }

    #[test]
    fn provided_tree_is_used() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::StraightTube)).unwrap();
        let a = annotate(&p.mask, Some(&p.tree), &AnnotateConfig::default()).unwrap();
        assert_eq!(a.tree, p.tree);
        assert!(a.report.watertight);
    }

    #[test]
    fn empty_mask_error() {
        let m = VoxelVolume::empty_mask([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        let e = annotate(&m, None, &AnnotateConfig::default()).unwrap_err();
        assert_eq!(e.to_string(), "skeleton: empty mask");
    }

    #[test]
    fn bifurcation_is_single_component() {
        let p = make_phantom(&PhantomSpec::new(PhantomKind::Bifurcation)).unwrap();
        let a = annotate(&p.mask, None, &AnnotateConfig::default()).unwrap();
        assert!(a.report.watertight, "{}", a.report);
        assert_eq!(a.report.components, 1);
        assert_eq!(a.centerlines.len(), 2);
        assert!(a.skipped_branches.is_empty());
    }
}
