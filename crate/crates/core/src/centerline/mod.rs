//! Branch centerlines: spline fitting through key points, uniform arc-length
//! resampling and rotation-minimizing cross-section frames.

mod spline;

pub use spline::{fit_bspline, prepare_points, Spline};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{any_orthogonal, Vec3};

/// Default resampling step, mm.
pub const DEFAULT_SPACING: f64 = 0.2;
/// Default key-point decimation for thinning skeletons, mm.
pub const DEFAULT_DECIMATION: f64 = 1.0;

/// One resampled centerline point with its right-handed frame `(tangent, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterlineSample {
    pub position: Vec3,
    pub tangent: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchCenterline {
    pub samples: Vec<CenterlineSample>,
    /// Arc length between consecutive samples, mm.
    pub arc_spacing: f64,
}

/// Samples the spline at `n + 1` points of uniform arc length, with
/// `n = max(1, round(L / spacing))`, so the realised step `L / n` is within
/// half a step of `spacing` and both endpoints are included. Frames are
/// propagated with [`propagate_frames`].
pub fn resample(spline: &Spline, spacing: f64) -> Result<BranchCenterline> {
    if spacing.is_nan() || spacing <= 0.0 {
        return Err(Error::InvalidArgument(format!("resample spacing must be > 0, got {spacing}")));
    }
    let len = spline.length();
    let n = ((len / spacing).round() as usize).max(1);
    let step = len / n as f64;
    let (u0, u1) = spline.param_range();
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let u = match k {
            0 => u0,
            _ if k == n => u1,
            _ => spline.param_at_arc(step * k as f64),
        };
        let d = spline.derivative(u);
        let norm = d.norm();
        if !(norm > 1e-12) {
            return Err(Error::Centerline(format!("zero tangent at sample {k}")));
        }
        samples.push(CenterlineSample { position: spline.eval(u), tangent: d / norm, u: Vec3::zeros(), v: Vec3::zeros() });
    }
    propagate_frames(BranchCenterline { samples, arc_spacing: step })
}

/// Rotation-minimizing frames by the double-reflection method. The first
/// `u` is `t × a` (normalized) with `a` the world axis least aligned with
/// `t`; every `v = t × u`.
pub fn propagate_frames(mut cl: BranchCenterline) -> Result<BranchCenterline> {
    let Some(first) = cl.samples.first() else {
        return Err(Error::Centerline("centerline has no samples".into()));
    };
    if cl.samples.iter().any(|s| !(s.tangent.norm() > 1e-12)) {
        return Err(Error::Centerline("zero tangent".into()));
    }
    let t0 = first.tangent.normalize();
    let mut u = any_orthogonal(&t0);
    for i in 0..cl.samples.len() {
        let t = cl.samples[i].tangent.normalize();
        if i > 0 {
            let (prev, cur) = (&cl.samples[i - 1], &cl.samples[i]);
            let v1 = cur.position - prev.position;
            let c1 = v1.dot(&v1);
            let (mut r, mut tl) = (u, prev.tangent);
            if c1 > 0.0 {
                r -= v1 * (2.0 / c1 * v1.dot(&r));
                tl -= v1 * (2.0 / c1 * v1.dot(&tl));
            }
            let v2 = t - tl;
            let c2 = v2.dot(&v2);
            if c2 > 0.0 {
                r -= v2 * (2.0 / c2 * v2.dot(&r));
            }
            u = r;
        }
        // Remove drift so the frame stays orthonormal to rounding.
        u = (u - t * t.dot(&u)).normalize();
        let s = &mut cl.samples[i];
        s.tangent = t;
        s.u = u;
        s.v = t.cross(&u);
    }
    Ok(cl)
}

/// Spline fit, resampling and frames in one call.
pub fn centerline_from_points(points: &[Vec3], decimation: Option<f64>, spacing: f64) -> Result<BranchCenterline> {
    resample(&fit_bspline(points, decimation)?, spacing)
}

impl BranchCenterline {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Polyline length through the sample positions.
    pub fn polyline_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum()
    }
}

/// `VMCL1` text: one `<x> <y> <z> <tx> <ty> <tz>` line per sample.
pub fn write_centerline(path: impl AsRef<Path>, cl: &BranchCenterline) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("VMCL1\n");
    for p in &cl.samples {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, p.tangent.x, p.tangent.y, p.tangent.z
        );
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `VMCL1` positions and tangents; frames are recomputed.
pub fn read_centerline(path: impl AsRef<Path>) -> Result<BranchCenterline> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if lines.next().map(|(_, l)| l.trim()) != Some("VMCL1") {
        return Err(Error::Format("centerline file must start with VMCL1".into()));
    }
    let mut samples = Vec::new();
    for (ln, line) in lines {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("VMCL1 line {}: bad number", ln + 1)))?;
        if v.len() != 6 {
            return Err(Error::Format(format!("VMCL1 line {}: expected 6 values", ln + 1)));
        }
        samples.push(CenterlineSample {
            position: Vec3::new(v[0], v[1], v[2]),
            tangent: Vec3::new(v[3], v[4], v[5]),
            u: Vec3::zeros(),
            v: Vec3::zeros(),
        });
    }
    let arc_spacing = if samples.len() > 1 {
        samples.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum::<f64>() / (samples.len() - 1) as f64
    } else {
        0.0
    };
    propagate_frames(BranchCenterline { samples, arc_spacing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn check_frames(cl: &BranchCenterline, tol: f64) {
        for s in &cl.samples {
            assert!((s.tangent.norm() - 1.0).abs() < tol);
            assert!((s.u.norm() - 1.0).abs() < tol);
            assert!((s.v.norm() - 1.0).abs() < tol);
            assert!(s.tangent.dot(&s.u).abs() < tol);
            assert!(s.u.dot(&s.v).abs() < tol);
            assert!((s.tangent.cross(&s.u) - s.v).norm() < tol);
        }
    }

    #[test]
    fn straight_segment_sampling() {
        let pts = [Vec3::zeros(), Vec3::new(0.0, 0.0, 10.0)];
        let cl = centerline_from_points(&pts, None, 0.2).unwrap();
        assert_eq!(cl.len(), 51);
        for (k, s) in cl.samples.iter().enumerate() {
            assert!((s.tangent - Vec3::z()).norm() < 1e-12);
            assert!((s.position.z - 0.2 * k as f64).abs() < 1e-9);
            assert!((s.u - cl.samples[0].u).norm() < 1e-12);
            assert!((s.v - cl.samples[0].v).norm() < 1e-12);
        }
        check_frames(&cl, 1e-9);
    }

    #[test]
    fn spacing_longer_than_curve() {
        let pts = [Vec3::zeros(), Vec3::new(0.0, 0.0, 0.1)];
        let cl = centerline_from_points(&pts, None, 0.2).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl.samples[1].position, pts[1]);
    }

    fn circle_points(r: f64, n: usize, span: f64) -> Vec<Vec3> {
        (0..=n)
            .map(|k| {
                let a = span * k as f64 / n as f64;
                Vec3::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn circle_arc_tangent_and_planar_frames() {
        let cl = centerline_from_points(&circle_points(10.0, 400, PI), None, 0.2).unwrap();
        let n = cl.len();
        for s in &cl.samples[n / 10..n - n / 10] {
            let radial = s.position.normalize();
            assert!(s.tangent.dot(&radial).abs() < 1e-6, "{}", s.tangent.dot(&radial));
        }
        for s in &cl.samples {
            assert!((s.v.dot(&Vec3::z()).abs() - 1.0).abs() < 1e-3);
        }
        check_frames(&cl, 1e-9);
        // Consecutive frames turn only slightly.
        for w in cl.samples.windows(2) {
            assert!(w[0].u.dot(&w[1].u) > 15f64.to_radians().cos());
        }
        // Sample spacing within 10% and resampled length matches arc length.
        for w in cl.samples.windows(2) {
            let d = (w[1].position - w[0].position).norm();
            assert!((d - cl.arc_spacing).abs() <= 0.1 * cl.arc_spacing);
        }
        assert!((cl.polyline_length() - 10.0 * PI).abs() < 0.005 * 10.0 * PI);
    }

    #[test]
    fn helix_frames_orthonormal() {
        let pts: Vec<Vec3> = (0..=300)
            .map(|k| {
                let a = 0.05 * k as f64;
                Vec3::new(5.0 * a.cos(), 5.0 * a.sin(), 2.0 * a / (2.0 * PI))
            })
            .collect();
        let cl = centerline_from_points(&pts, None, 0.2).unwrap();
        check_frames(&cl, 1e-9);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(centerline_from_points(&[Vec3::zeros()], None, 0.2).is_err());
        assert!(centerline_from_points(&[Vec3::zeros(), Vec3::x()], None, 0.0).is_err());
    }

    #[test]
    fn vmcl_round_trip() {
        let cl = centerline_from_points(&circle_points(3.0, 20, 1.0), None, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.vmcl");
        write_centerline(&p, &cl).unwrap();
        let back = read_centerline(&p).unwrap();
        assert_eq!(back.len(), cl.len());
        for (a, b) in back.samples.iter().zip(&cl.samples) {
            assert_eq!(a.position, b.position);
            assert!((a.u - b.u).norm() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rigid_equivariance(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64,
                              angle in 0.0..3.0f64, tx in -20.0..20.0f64, ty in -20.0..20.0f64, tz in -20.0..20.0f64) {
            let axis = Vec3::new(ax, ay, az + 1.5);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let shift = Vec3::new(tx, ty, tz);
            let pts: Vec<Vec3> = (0..12).map(|i| {
                let s = i as f64;
                Vec3::new(s, (0.5 * s).sin() * 2.0, 0.1 * s * s)
            }).collect();
            let moved: Vec<Vec3> = pts.iter().map(|p| rot * p + shift).collect();
            let a = centerline_from_points(&pts, None, 0.2).unwrap();
            let b = centerline_from_points(&moved, None, 0.2).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert!((rot * x.position + shift - y.position).norm() < 1e-9);
                prop_assert!((rot * x.tangent - y.tangent).norm() < 1e-9);
            }
        }
    }
}
