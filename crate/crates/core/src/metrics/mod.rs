//! Segmentation and mesh quality metrics: Dice, Hausdorff, ASSD, chamfer,
//! Smooth, number of segments and point hit ratios.
//!
//! Distances are world millimetres; chamfer is in mm².

use std::fmt;

use rayon::prelude::*;

use crate::deform::chamfer_loss;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{integrity_report, sample_surface, voxelize_unchecked, TriMesh};
use crate::spatial::PointGrid;
use crate::volume::{connected_components, dice, VoxelVolume};

/// Hit threshold of the point protocol, mm.
pub const DEFAULT_HIT_THRESHOLD: f64 = 0.5;
/// Mesh surface samples per mm² for distance metrics.
pub const DEFAULT_SAMPLE_DENSITY: f64 = 4.0;

pub const CSV_HEADER: &str = "dice,hd_mm,assd_mm,cd_mm2,smooth,nos,precision,recall,f1,accuracy";

/// Nearest-neighbour distance from every point of `from` into `to`.
fn directed_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let grid = PointGrid::new(to);
    from.par_iter().map(|p| grid.nearest(p).1.sqrt()).collect()
}

fn check_nonempty(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("distance metric needs two nonempty point sets".into()));
    }
    Ok(())
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = directed_distances(a, b).into_iter().fold(0.0, f64::max);
    let ba = directed_distances(b, a).into_iter().fold(0.0, f64::max);
    Ok(ab.max(ba))
}

/// Average symmetric surface distance.
pub fn assd(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab: f64 = directed_distances(a, b).iter().sum();
    let ba: f64 = directed_distances(b, a).iter().sum();
    Ok((ab + ba) / (a.len() + b.len()) as f64)
}

/// Symmetric mean squared nearest-neighbour distance, mm².
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(chamfer_loss(a, b)?.value)
}

/// Mean over interior edges of `1 − cos` between adjacent face normals.
pub fn smooth_metric(mesh: &TriMesh) -> Result<f64> {
    let interior = mesh.interior_edges();
    if interior.is_empty() {
        return Err(Error::Empty("smooth metric needs at least one interior edge".into()));
    }
    let normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    let sum: f64 = interior.iter().map(|(_, [f0, f1])| 1.0 - normals[*f0].dot(&normals[*f1])).sum();
    Ok(sum / interior.len() as f64)
}

/// Input of the segment count.
#[derive(Debug, Clone, Copy)]
pub enum Segmentation<'a> {
    Mesh(&'a TriMesh),
    Mask(&'a VoxelVolume),
}

/// Number of connected pieces: face-adjacency components of a mesh, or
/// 26-connected components of a mask.
pub fn nos_metric(input: Segmentation) -> Result<usize> {
    match input {
        Segmentation::Mesh(m) => {
            if m.faces.is_empty() {
                return Err(Error::Empty("segment count of a mesh without faces".into()));
            }
            Ok(m.face_components().1)
        }
        Segmentation::Mask(v) => {
            if v.count_nonzero() == 0 {
                return Err(Error::Empty("segment count of an empty mask".into()));
            }
            Ok(connected_components(v)?.1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRatio {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Point hits against a mask. A predicted point is a hit when it lies
/// strictly closer than `threshold` to a set-voxel center; recall is the
/// fraction of surface-voxel centers strictly within `threshold` of a
/// prediction; accuracy pools both counts.
pub fn hit_ratio(pred: &[Vec3], gt: &VoxelVolume, threshold: f64) -> Result<HitRatio> {
    if pred.is_empty() {
        return Err(Error::Empty("hit ratio needs predicted points".into()));
    }
    let set = gt.set_points();
    if set.is_empty() {
        return Err(Error::Empty("hit ratio needs a nonempty mask".into()));
    }
    let surface = gt.surface_points();
    let hits = directed_distances(pred, &set).iter().filter(|&&d| d < threshold).count();
    let covered = directed_distances(&surface, pred).iter().filter(|&&d| d < threshold).count();
    let precision = hits as f64 / pred.len() as f64;
    let recall = covered as f64 / surface.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let accuracy = (hits + covered) as f64 / (pred.len() + surface.len()) as f64;
    Ok(HitRatio {
        precision,
        recall,
        f1,
        accuracy,
    })
}

/// One evaluation row; metrics that do not apply to the input pairing stay
/// `None` and are written as empty fields.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub dice: Option<f64>,
    pub hd: Option<f64>,
    pub assd: Option<f64>,
    pub cd: Option<f64>,
    pub smooth: Option<f64>,
    pub nos: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    fn set_distances(&mut self, pred: &[Vec3], gt: &[Vec3]) -> Result<()> {
        self.hd = Some(hausdorff(pred, gt)?);
        self.assd = Some(assd(pred, gt)?);
        self.cd = Some(chamfer(pred, gt)?);
        Ok(())
    }

    fn set_hits(&mut self, h: HitRatio) {
        self.precision = Some(h.precision);
        self.recall = Some(h.recall);
        self.f1 = Some(h.f1);
        self.accuracy = Some(h.accuracy);
    }

    /// Fields in `CSV_HEADER` order, empty where absent.
    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        [
            f(self.dice),
            f(self.hd),
            f(self.assd),
            f(self.cd),
            f(self.smooth),
            self.nos.map_or(String::new(), |n| n.to_string()),
            f(self.precision),
            f(self.recall),
            f(self.f1),
            f(self.accuracy),
        ]
        .join(",")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, Option<f64>, &str); 9] = [
            ("Dice", self.dice, ""),
            ("HD", self.hd, " mm"),
            ("ASSD", self.assd, " mm"),
            ("CD", self.cd, " mm^2"),
            ("Smooth", self.smooth, ""),
            ("precision", self.precision, ""),
            ("recall", self.recall, ""),
            ("F1", self.f1, ""),
            ("accuracy", self.accuracy, ""),
        ];
        for (name, v, unit) in rows {
            match v {
                Some(x) => writeln!(f, "{name:<10} {x:.4}{unit}")?,
                None => writeln!(f, "{name:<10} n/a")?,
            }
        }
        match self.nos {
            Some(n) => writeln!(f, "{:<10} {n}", "NoS"),
            None => writeln!(f, "{:<10} n/a", "NoS"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Mesh surface samples per mm².
    pub density: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            density: DEFAULT_SAMPLE_DENSITY,
            seed: 0,
            threshold: DEFAULT_HIT_THRESHOLD,
        }
    }
}

/// Full metric suite of a predicted mesh against a ground-truth mask. Dice
/// uses the mesh voxelized on the mask grid; distances compare seeded
/// surface samples with the mask's surface-voxel centers.
pub fn evaluate(pred: &TriMesh, gt: &VoxelVolume, cfg: &EvalConfig) -> Result<MetricsReport> {
    if pred.faces.is_empty() {
        return Err(Error::Empty("predicted mesh has no faces".into()));
    }
    if !gt.is_binary() {
        return Err(Error::NotBinary);
    }
    let gt_surface = gt.surface_points();
    if gt_surface.is_empty() {
        return Err(Error::Empty("ground-truth mask is empty".into()));
    }
    if !integrity_report(pred).watertight {
        log::warn!("evaluate: predicted mesh is not watertight; Dice uses winding parity");
    }
    let mut r = MetricsReport {
        dice: Some(dice(&voxelize_unchecked(pred, gt), gt)?),
        ..MetricsReport::default()
    };
    let samples = sample_surface(pred, cfg.density, cfg.seed);
    r.set_distances(&samples, &gt_surface)?;
    r.smooth = smooth_metric(pred).ok();
    r.nos = Some(nos_metric(Segmentation::Mesh(pred))?);
    r.set_hits(hit_ratio(&pred.vertices, gt, cfg.threshold)?);
    Ok(r)
}

/// Predicted point cloud against a mask: distances and hit ratios only.
pub fn evaluate_points(pred: &[Vec3], gt: &VoxelVolume, cfg: &EvalConfig) -> Result<MetricsReport> {
    let gt_surface = gt.surface_points();
    let mut r = MetricsReport::default();
    r.set_distances(pred, &gt_surface)?;
    r.set_hits(hit_ratio(pred, gt, cfg.threshold)?);
    Ok(r)
}

/// Predicted mask against a mask. Dice needs a shared grid and is left
/// empty otherwise; distances use the surface-voxel centers of both.
pub fn evaluate_masks(pred: &VoxelVolume, gt: &VoxelVolume, cfg: &EvalConfig) -> Result<MetricsReport> {
    if !pred.is_binary() || !gt.is_binary() {
        return Err(Error::NotBinary);
    }
    let mut r = MetricsReport::default();
    if pred.same_grid(gt) {
        r.dice = Some(dice(pred, gt)?);
    } else {
        log::warn!("evaluate: mask grids differ; Dice left empty");
    }
    let pred_surface = pred.surface_points();
    r.set_distances(&pred_surface, &gt.surface_points())?;
    r.nos = Some(nos_metric(Segmentation::Mask(pred))?);
    r.set_hits(hit_ratio(&pred_surface, gt, cfg.threshold)?);
    Ok(r)
}
